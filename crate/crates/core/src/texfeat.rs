//! Texture features of the structure map inside a region of interest.
//!
//! Four matrix families are built from the raw labels (no re-quantisation):
//!
//! * GLCM: co-occurrences at distance 1 over the 13 unique 3D directions,
//!   summed over directions and symmetrised;
//! * GLRLM: maximal runs of equal label along each of the 13 directions,
//!   summed over directions;
//! * GLSZM: 26-connected zones of equal label;
//! * GLDM: per voxel, the number of 26-neighbours in the ROI with the same
//!   label (dependence with alpha = 0).
//!
//! All features follow the IBSI definitions with log base 2 entropies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgvol::{Connectivity, LabelVolume, Mask, RoiKind};

/// The 13 unique directions at distance 1 (one of each ± pair).
pub const DIRECTIONS_13: [[isize; 3]; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [1, 1, 1],
    [1, 1, -1],
    [1, -1, 1],
    [1, -1, -1],
];

pub const GLCM_NAMES: [&str; 22] = [
    "Autocorrelation",
    "JointAverage",
    "ClusterProminence",
    "ClusterShade",
    "ClusterTendency",
    "Contrast",
    "Correlation",
    "DifferenceAverage",
    "DifferenceEntropy",
    "DifferenceVariance",
    "JointEnergy",
    "JointEntropy",
    "Imc1",
    "Imc2",
    "Idm",
    "Idmn",
    "Id",
    "Idn",
    "InverseVariance",
    "MaximumProbability",
    "SumEntropy",
    "SumSquares",
];

pub const GLRLM_NAMES: [&str; 16] = [
    "ShortRunEmphasis",
    "LongRunEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "RunLengthNonUniformity",
    "RunLengthNonUniformityNormalized",
    "RunPercentage",
    "GrayLevelVariance",
    "RunVariance",
    "RunEntropy",
    "LowGrayLevelRunEmphasis",
    "HighGrayLevelRunEmphasis",
    "ShortRunLowGrayLevelEmphasis",
    "ShortRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis",
    "LongRunHighGrayLevelEmphasis",
];

pub const GLSZM_NAMES: [&str; 16] = [
    "SmallAreaEmphasis",
    "LargeAreaEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized",
    "ZonePercentage",
    "GrayLevelVariance",
    "ZoneVariance",
    "ZoneEntropy",
    "LowGrayLevelZoneEmphasis",
    "HighGrayLevelZoneEmphasis",
    "SmallAreaLowGrayLevelEmphasis",
    "SmallAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis",
    "LargeAreaHighGrayLevelEmphasis",
];

pub const GLDM_NAMES: [&str; 14] = [
    "SmallDependenceEmphasis",
    "LargeDependenceEmphasis",
    "GrayLevelNonUniformity",
    "DependenceNonUniformity",
    "DependenceNonUniformityNormalized",
    "GrayLevelVariance",
    "DependenceVariance",
    "DependenceEntropy",
    "LowGrayLevelEmphasis",
    "HighGrayLevelEmphasis",
    "SmallDependenceLowGrayLevelEmphasis",
    "SmallDependenceHighGrayLevelEmphasis",
    "LargeDependenceLowGrayLevelEmphasis",
    "LargeDependenceHighGrayLevelEmphasis",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Glcm,
    Glrlm,
    Glszm,
    Gldm,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Glcm, Family::Glrlm, Family::Glszm, Family::Gldm];

    pub fn prefix(self) -> &'static str {
        match self {
            Family::Glcm => "glcm",
            Family::Glrlm => "glrlm",
            Family::Glszm => "glszm",
            Family::Gldm => "gldm",
        }
    }

    pub fn names(self) -> &'static [&'static str] {
        match self {
            Family::Glcm => &GLCM_NAMES,
            Family::Glrlm => &GLRLM_NAMES,
            Family::Glszm => &GLSZM_NAMES,
            Family::Gldm => &GLDM_NAMES,
        }
    }
}

/// Matrix construction options.
#[derive(Clone, Debug)]
pub struct MatrixParams {
    /// Directions for GLCM / GLRLM; defaults to [`DIRECTIONS_13`].
    pub directions: Vec<[isize; 3]>,
    /// Dependence tolerance for GLDM.
    pub alpha: u8,
}

impl Default for MatrixParams {
    fn default() -> Self {
        Self {
            directions: DIRECTIONS_13.to_vec(),
            alpha: 0,
        }
    }
}

/// Raw (unnormalised) counts. Row `r` is gray level `gray_levels[r]`;
/// column `c` is gray level `gray_levels[c]` for GLCM and the 1-based
/// index `c + 1` (run length, zone size, dependence + 1) otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayLevelMatrix {
    pub family: Family,
    pub gray_levels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<f64>,
}

impl GrayLevelMatrix {
    fn zeros(family: Family, gray_levels: Vec<u8>, cols: usize) -> Self {
        let rows = gray_levels.len();
        Self {
            family,
            gray_levels,
            rows,
            cols,
            counts: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.counts[r * self.cols + c]
    }

    #[inline]
    fn add(&mut self, r: usize, c: usize, v: f64) {
        self.counts[r * self.cols + c] += v;
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Counts divided by their total.
    pub fn normalized(&self) -> Vec<f64> {
        let t = self.total();
        self.counts.iter().map(|c| c / t).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| (0..self.cols).all(|c| self.get(r, c) == self.get(c, r)))
    }
}

/// Gray level of each voxel as a row index, `None` outside the ROI.
struct RoiLevels {
    levels: Vec<u8>,
    index: Vec<Option<u8>>,
    voxels: usize,
}

fn roi_levels(vol: &LabelVolume, roi: &Mask) -> Result<RoiLevels> {
    vol.geometry().ensure_same(roi.geometry(), "texture ROI")?;
    let mut present = [false; 256];
    let mut voxels = 0;
    for (i, &l) in vol.data().iter().enumerate() {
        if roi.get(i) {
            present[l as usize] = true;
            voxels += 1;
        }
    }
    if voxels == 0 {
        return Err(Error::EmptyRoi(format!("{} mask has no voxels", roi.kind())));
    }
    if present[0] {
        return Err(Error::Validation(format!(
            "{} ROI contains background label 0; texture gray levels must be >= 1",
            roi.kind()
        )));
    }
    let levels: Vec<u8> = (0..=255u8).filter(|&l| present[l as usize]).collect();
    let mut lut = [0u8; 256];
    for (k, &l) in levels.iter().enumerate() {
        lut[l as usize] = k as u8;
    }
    let index = vol
        .data()
        .iter()
        .enumerate()
        .map(|(i, &l)| roi.get(i).then_some(lut[l as usize]))
        .collect();
    Ok(RoiLevels {
        levels,
        index,
        voxels,
    })
}

pub fn build_matrix(
    vol: &LabelVolume,
    roi: &Mask,
    family: Family,
    params: &MatrixParams,
) -> Result<GrayLevelMatrix> {
    let rl = roi_levels(vol, roi)?;
    Ok(match family {
        Family::Glcm => glcm(vol, &rl, &params.directions),
        Family::Glrlm => glrlm(vol, &rl, &params.directions),
        Family::Glszm => glszm(vol, &rl),
        Family::Gldm => gldm(vol, &rl, params.alpha),
    })
}

fn glcm(vol: &LabelVolume, rl: &RoiLevels, dirs: &[[isize; 3]]) -> GrayLevelMatrix {
    let g = vol.geometry();
    let n = rl.levels.len();
    let mut m = GrayLevelMatrix::zeros(Family::Glcm, rl.levels.clone(), n);
    for (i, a) in rl.index.iter().enumerate() {
        let Some(a) = *a else { continue };
        let c = g.coords(i);
        for &d in dirs {
            if let Some(j) = g.offset(c, d) {
                if let Some(b) = rl.index[j] {
                    m.add(a as usize, b as usize, 1.0);
                    m.add(b as usize, a as usize, 1.0);
                }
            }
        }
    }
    m
}

fn glrlm(vol: &LabelVolume, rl: &RoiLevels, dirs: &[[isize; 3]]) -> GrayLevelMatrix {
    let g = vol.geometry();
    let max_len = *g.dims.iter().max().unwrap();
    let mut m = GrayLevelMatrix::zeros(Family::Glrlm, rl.levels.clone(), max_len);
    for &d in dirs {
        let back = [-d[0], -d[1], -d[2]];
        for (i, a) in rl.index.iter().enumerate() {
            let Some(a) = *a else { continue };
            let c = g.coords(i);
            // only start walking at the first voxel of a run
            if let Some(p) = g.offset(c, back) {
                if rl.index[p] == Some(a) {
                    continue;
                }
            }
            let mut len = 1;
            let mut cur = c;
            while let Some(nx) = g.offset(cur, d) {
                if rl.index[nx] != Some(a) {
                    break;
                }
                len += 1;
                cur = g.coords(nx);
            }
            m.add(a as usize, len - 1, 1.0);
        }
    }
    m
}

fn glszm(vol: &LabelVolume, rl: &RoiLevels) -> GrayLevelMatrix {
    let g = vol.geometry();
    let offsets = Connectivity::TwentySix.offsets();
    let mut zone_sizes: Vec<(u8, usize)> = Vec::new();
    let mut seen = vec![false; g.len()];
    let mut stack = Vec::new();
    for start in 0..g.len() {
        let Some(a) = rl.index[start] else { continue };
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0;
        while let Some(cur) = stack.pop() {
            size += 1;
            let c = g.coords(cur);
            for &off in offsets {
                if let Some(j) = g.offset(c, off) {
                    if !seen[j] && rl.index[j] == Some(a) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        zone_sizes.push((a, size));
    }
    let max_size = zone_sizes.iter().map(|z| z.1).max().unwrap_or(1);
    let mut m = GrayLevelMatrix::zeros(Family::Glszm, rl.levels.clone(), max_size);
    for (a, s) in zone_sizes {
        m.add(a as usize, s - 1, 1.0);
    }
    m
}

fn gldm(vol: &LabelVolume, rl: &RoiLevels, alpha: u8) -> GrayLevelMatrix {
    let g = vol.geometry();
    let offsets = Connectivity::TwentySix.offsets();
    let mut m = GrayLevelMatrix::zeros(Family::Gldm, rl.levels.clone(), offsets.len() + 1);
    for (i, a) in rl.index.iter().enumerate() {
        let Some(a) = *a else { continue };
        let level = rl.levels[a as usize];
        let c = g.coords(i);
        let dep = offsets
            .iter()
            .filter_map(|&off| g.offset(c, off))
            .filter_map(|j| rl.index[j])
            .filter(|&b| rl.levels[b as usize].abs_diff(level) <= alpha)
            .count();
        m.add(a as usize, dep, 1.0);
    }
    m
}

/// The 68 texture features of one ROI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureFeatures {
    pub glcm: [f64; 22],
    pub glrlm: [f64; 16],
    pub glszm: [f64; 16],
    pub gldm: [f64; 14],
    /// Limits taken for undefined quantities (single gray level, no pairs).
    pub warnings: Vec<String>,
}

impl TextureFeatures {
    pub fn family(&self, f: Family) -> &[f64] {
        match f {
            Family::Glcm => &self.glcm,
            Family::Glrlm => &self.glrlm,
            Family::Glszm => &self.glszm,
            Family::Gldm => &self.gldm,
        }
    }

    pub fn get(&self, family: Family, name: &str) -> Option<f64> {
        let idx = family.names().iter().position(|n| *n == name)?;
        Some(self.family(family)[idx])
    }

    /// `(name, value)` pairs named `{roi}_{family}_{Feature}`, 68 in total.
    pub fn named(&self, roi: RoiKind) -> Vec<(String, f64)> {
        Family::ALL
            .iter()
            .flat_map(|&f| {
                f.names()
                    .iter()
                    .zip(self.family(f))
                    .map(move |(n, &v)| (format!("{roi}_{}_{n}", f.prefix()), v))
            })
            .collect()
    }
}

pub fn texture_features(vol: &LabelVolume, roi: &Mask) -> Result<TextureFeatures> {
    let params = MatrixParams::default();
    let rl = roi_levels(vol, roi)?;
    if rl.voxels < 2 {
        return Err(Error::Degenerate(format!(
            "{} ROI has a single voxel; texture needs at least 2",
            roi.kind()
        )));
    }
    let mut warnings = Vec::new();
    let glcm_m = glcm(vol, &rl, &params.directions);
    let glrlm_m = glrlm(vol, &rl, &params.directions);
    let glszm_m = glszm(vol, &rl);
    let gldm_m = gldm(vol, &rl, params.alpha);
    if rl.levels.len() == 1 {
        warnings.push(format!(
            "{} ROI has a single gray level; undefined features set to 0",
            roi.kind()
        ));
    }
    Ok(TextureFeatures {
        glcm: glcm_features(&glcm_m, &mut warnings),
        glrlm: size_features(&glrlm_m, rl.voxels, &mut warnings).glrlm(),
        glszm: size_features(&glszm_m, rl.voxels, &mut warnings).glszm(),
        gldm: size_features(&gldm_m, rl.voxels, &mut warnings).gldm(),
        warnings,
    })
}

fn entropy_term(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// GLCM features from a (symmetric) co-occurrence count matrix.
pub fn glcm_features(m: &GrayLevelMatrix, warnings: &mut Vec<String>) -> [f64; 22] {
    let total = m.total();
    if total <= 0.0 {
        warnings.push("GLCM has no voxel pairs; GLCM features set to 0".into());
        return [0.0; 22];
    }
    let n = m.rows;
    let p = m.normalized();
    let lv: Vec<f64> = m.gray_levels.iter().map(|&l| l as f64).collect();
    let ng = lv.iter().cloned().fold(0.0, f64::max);

    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    for a in 0..n {
        for b in 0..n {
            px[a] += p[a * n + b];
            py[b] += p[a * n + b];
        }
    }
    let mux: f64 = (0..n).map(|a| lv[a] * px[a]).sum();
    let muy: f64 = (0..n).map(|b| lv[b] * py[b]).sum();
    let sx = (0..n).map(|a| (lv[a] - mux).powi(2) * px[a]).sum::<f64>().sqrt();
    let sy = (0..n).map(|b| (lv[b] - muy).powi(2) * py[b]).sum::<f64>().sqrt();

    // gray levels are integers, so sums and differences key exactly
    let mut p_sum: BTreeMap<u32, f64> = BTreeMap::new();
    let mut p_diff: BTreeMap<u32, f64> = BTreeMap::new();

    let mut autocorr = 0.0;
    let mut prominence = 0.0;
    let mut shade = 0.0;
    let mut tendency = 0.0;
    let mut contrast = 0.0;
    let mut hxy1 = 0.0;
    let mut idm = 0.0;
    let mut idmn = 0.0;
    let mut id = 0.0;
    let mut idn = 0.0;
    let mut inv_var = 0.0;
    let mut max_p = 0.0f64;
    let mut sum_squares = 0.0;
    for a in 0..n {
        for b in 0..n {
            let pij = p[a * n + b];
            if pij == 0.0 {
                continue;
            }
            let (i, j) = (lv[a], lv[b]);
            let s = i + j - mux - muy;
            let d = (i - j).abs();
            autocorr += pij * i * j;
            prominence += pij * s.powi(4);
            shade += pij * s.powi(3);
            tendency += pij * s * s;
            contrast += pij * d * d;
            hxy1 -= pij * (px[a] * py[b]).log2();
            idm += pij / (1.0 + d * d);
            idmn += pij / (1.0 + d * d / (ng * ng));
            id += pij / (1.0 + d);
            idn += pij / (1.0 + d / ng);
            if d > 0.0 {
                inv_var += pij / (d * d);
            }
            max_p = max_p.max(pij);
            sum_squares += pij * (i - mux).powi(2);
            *p_sum.entry((m.gray_levels[a] as u32) + (m.gray_levels[b] as u32)).or_default() += pij;
            *p_diff.entry(m.gray_levels[a].abs_diff(m.gray_levels[b]) as u32).or_default() += pij;
        }
    }

    // label-agnostic sums run over sorted probabilities so that relabelling
    // the gray levels reproduces them bit for bit
    let mut sorted: Vec<f64> = p.iter().copied().filter(|&v| v > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let energy: f64 = sorted.iter().map(|v| v * v).sum();
    let hxy: f64 = sorted.iter().map(|&v| entropy_term(v)).sum();

    let correlation = if sx * sy > 0.0 {
        (autocorr - mux * muy) / (sx * sy)
    } else {
        warnings.push("GLCM Correlation undefined (zero variance); set to 0".into());
        0.0
    };
    let diff_avg: f64 = p_diff.iter().map(|(&k, &v)| k as f64 * v).sum();
    let diff_ent: f64 = p_diff.values().map(|&v| entropy_term(v)).sum();
    let diff_var: f64 = p_diff
        .iter()
        .map(|(&k, &v)| (k as f64 - diff_avg).powi(2) * v)
        .sum();
    let sum_ent: f64 = p_sum.values().map(|&v| entropy_term(v)).sum();

    let hx: f64 = px.iter().map(|&v| entropy_term(v)).sum();
    let hy: f64 = py.iter().map(|&v| entropy_term(v)).sum();
    let mut hxy2 = 0.0;
    for &a in &px {
        for &b in &py {
            if a > 0.0 && b > 0.0 {
                hxy2 -= a * b * (a * b).log2();
            }
        }
    }
    let imc1 = if hx.max(hy) > 0.0 {
        (hxy - hxy1) / hx.max(hy)
    } else {
        warnings.push("GLCM Imc1 undefined (zero marginal entropy); set to 0".into());
        0.0
    };
    let imc2 = (1.0 - (-2.0 * (hxy2 - hxy).max(0.0)).exp()).sqrt();

    [
        autocorr,
        mux,
        prominence,
        shade,
        tendency,
        contrast,
        correlation,
        diff_avg,
        diff_ent,
        diff_var,
        energy,
        hxy,
        imc1,
        imc2,
        idm,
        idmn,
        id,
        idn,
        inv_var,
        max_p,
        sum_ent,
        sum_squares,
    ]
}

/// Shared statistics of the run/zone/dependence matrices, whose second
/// index is a 1-based size.
struct SizeStats {
    short: f64,
    long: f64,
    gln: f64,
    glnn: f64,
    sn: f64,
    snn: f64,
    percentage: f64,
    gl_var: f64,
    size_var: f64,
    entropy: f64,
    low_gl: f64,
    high_gl: f64,
    short_low: f64,
    short_high: f64,
    long_low: f64,
    long_high: f64,
}

impl SizeStats {
    fn glrlm(&self) -> [f64; 16] {
        [
            self.short,
            self.long,
            self.gln,
            self.glnn,
            self.sn,
            self.snn,
            self.percentage,
            self.gl_var,
            self.size_var,
            self.entropy,
            self.low_gl,
            self.high_gl,
            self.short_low,
            self.short_high,
            self.long_low,
            self.long_high,
        ]
    }

    fn glszm(&self) -> [f64; 16] {
        self.glrlm()
    }

    fn gldm(&self) -> [f64; 14] {
        [
            self.short,
            self.long,
            self.gln,
            self.sn,
            self.snn,
            self.gl_var,
            self.size_var,
            self.entropy,
            self.low_gl,
            self.high_gl,
            self.short_low,
            self.short_high,
            self.long_low,
            self.long_high,
        ]
    }
}

/// `roi_voxels` is the ROI voxel count; for GLRLM the percentage uses the
/// number of voxels covered by all runs (one pass per direction) instead.
fn size_features(m: &GrayLevelMatrix, roi_voxels: usize, warnings: &mut Vec<String>) -> SizeStats {
    let total = m.total();
    if total <= 0.0 {
        warnings.push(format!("{:?} matrix is empty; features set to 0", m.family));
        return SizeStats {
            short: 0.0,
            long: 0.0,
            gln: 0.0,
            glnn: 0.0,
            sn: 0.0,
            snn: 0.0,
            percentage: 0.0,
            gl_var: 0.0,
            size_var: 0.0,
            entropy: 0.0,
            low_gl: 0.0,
            high_gl: 0.0,
            short_low: 0.0,
            short_high: 0.0,
            long_low: 0.0,
            long_high: 0.0,
        };
    }
    let lv: Vec<f64> = m.gray_levels.iter().map(|&l| l as f64).collect();
    let mut row_sums = vec![0.0; m.rows];
    let mut col_sums = vec![0.0; m.cols];
    let mut covered = 0.0;
    let mut s = SizeStats {
        short: 0.0,
        long: 0.0,
        gln: 0.0,
        glnn: 0.0,
        sn: 0.0,
        snn: 0.0,
        percentage: 0.0,
        gl_var: 0.0,
        size_var: 0.0,
        entropy: 0.0,
        low_gl: 0.0,
        high_gl: 0.0,
        short_low: 0.0,
        short_high: 0.0,
        long_low: 0.0,
        long_high: 0.0,
    };
    let mut mu_i = 0.0;
    let mut mu_j = 0.0;
    for r in 0..m.rows {
        let i2 = lv[r] * lv[r];
        for c in 0..m.cols {
            let v = m.get(r, c);
            if v == 0.0 {
                continue;
            }
            let j = (c + 1) as f64;
            let j2 = j * j;
            row_sums[r] += v;
            col_sums[c] += v;
            covered += v * j;
            s.short += v / j2;
            s.long += v * j2;
            s.low_gl += v / i2;
            s.high_gl += v * i2;
            s.short_low += v / (i2 * j2);
            s.short_high += v * i2 / j2;
            s.long_low += v * j2 / i2;
            s.long_high += v * i2 * j2;
            let p = v / total;
            mu_i += p * lv[r];
            mu_j += p * j;
            s.entropy += entropy_term(p);
        }
    }
    for r in 0..m.rows {
        for c in 0..m.cols {
            let v = m.get(r, c);
            if v == 0.0 {
                continue;
            }
            let p = v / total;
            s.gl_var += p * (lv[r] - mu_i).powi(2);
            s.size_var += p * ((c + 1) as f64 - mu_j).powi(2);
        }
    }
    for x in [
        &mut s.short,
        &mut s.long,
        &mut s.low_gl,
        &mut s.high_gl,
        &mut s.short_low,
        &mut s.short_high,
        &mut s.long_low,
        &mut s.long_high,
    ] {
        *x /= total;
    }
    let gl_sq: f64 = row_sums.iter().map(|v| v * v).sum();
    let size_sq: f64 = col_sums.iter().map(|v| v * v).sum();
    s.gln = gl_sq / total;
    s.glnn = gl_sq / (total * total);
    s.sn = size_sq / total;
    s.snn = size_sq / (total * total);
    s.percentage = match m.family {
        Family::Glrlm => total / covered,
        _ => total / roi_voxels as f64,
    };
    s
}

/// Run-length features from a GLRLM count matrix.
pub fn glrlm_features(m: &GrayLevelMatrix) -> [f64; 16] {
    size_features(m, 0, &mut Vec::new()).glrlm()
}
