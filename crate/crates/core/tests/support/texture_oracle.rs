//! Brute-force texture reference.
//!
//! Every matrix is built by enumerating voxel pairs, per-voxel runs or label
//! propagation directly from the definitions, and every feature is written
//! as a literal sum over a sparse `(gray level, index) -> count` map. Nothing
//! here calls into the library's texture code.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use gliomics::imgvol::{LabelVolume, RoiKind};

pub type Sparse = BTreeMap<(u32, u32), f64>;

struct Voxel {
    c: [i64; 3],
    level: u32,
}

fn roi_voxels(vol: &LabelVolume, roi: RoiKind) -> Vec<Voxel> {
    let g = vol.geometry();
    let mut out = Vec::new();
    for z in 0..g.dims[2] {
        for y in 0..g.dims[1] {
            for x in 0..g.dims[0] {
                let l = vol.get(x, y, z);
                if roi.labels().contains(&l) {
                    out.push(Voxel {
                        c: [x as i64, y as i64, z as i64],
                        level: l as u32,
                    });
                }
            }
        }
    }
    out
}

fn chebyshev_one(a: [i64; 3], b: [i64; 3]) -> bool {
    let d = [(a[0] - b[0]).abs(), (a[1] - b[1]).abs(), (a[2] - b[2]).abs()];
    d.iter().all(|&x| x <= 1) && d.iter().any(|&x| x == 1)
}

/// The 13 directions, enumerated as "first nonzero component positive".
pub fn half_directions() -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for dx in -1..=1i64 {
        for dy in -1..=1i64 {
            for dz in -1..=1i64 {
                let d = [dx, dy, dz];
                if let Some(first) = d.iter().find(|&&v| v != 0) {
                    if *first > 0 {
                        out.push(d);
                    }
                }
            }
        }
    }
    out
}

/// Symmetric co-occurrence counts over all ordered 26-neighbour pairs.
pub fn glcm(vol: &LabelVolume, roi: RoiKind) -> Sparse {
    let vox = roi_voxels(vol, roi);
    let mut m = Sparse::new();
    for u in &vox {
        for v in &vox {
            if chebyshev_one(u.c, v.c) {
                *m.entry((u.level, v.level)).or_default() += 1.0;
            }
        }
    }
    m
}

pub fn glrlm(vol: &LabelVolume, roi: RoiKind) -> Sparse {
    let vox = roi_voxels(vol, roi);
    let lookup: HashMap<[i64; 3], u32> = vox.iter().map(|v| (v.c, v.level)).collect();
    let mut voxel_counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for d in half_directions() {
        for v in &vox {
            let mut len = 1u32;
            for sign in [1i64, -1] {
                let mut k = 1;
                loop {
                    let p = [v.c[0] + sign * k * d[0], v.c[1] + sign * k * d[1], v.c[2] + sign * k * d[2]];
                    if lookup.get(&p) == Some(&v.level) {
                        len += 1;
                        k += 1;
                    } else {
                        break;
                    }
                }
            }
            *voxel_counts.entry((v.level, len)).or_default() += 1;
        }
    }
    // a run of length L was visited once from each of its L voxels
    voxel_counts
        .into_iter()
        .map(|((l, len), n)| {
            assert_eq!(n % len as u64, 0);
            ((l, len), (n / len as u64) as f64)
        })
        .collect()
}

pub fn glszm(vol: &LabelVolume, roi: RoiKind) -> Sparse {
    let vox = roi_voxels(vol, roi);
    let mut zone: Vec<usize> = (0..vox.len()).collect();
    loop {
        let mut changed = false;
        for a in 0..vox.len() {
            for b in 0..vox.len() {
                if vox[a].level == vox[b].level && chebyshev_one(vox[a].c, vox[b].c) && zone[b] < zone[a] {
                    zone[a] = zone[b];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut sizes: BTreeMap<usize, (u32, u32)> = BTreeMap::new();
    for (a, &z) in zone.iter().enumerate() {
        let e = sizes.entry(z).or_insert((vox[a].level, 0));
        e.1 += 1;
    }
    let mut m = Sparse::new();
    for (_, (level, size)) in sizes {
        *m.entry((level, size)).or_default() += 1.0;
    }
    m
}

/// Keys are (level, dependence + 1).
pub fn gldm(vol: &LabelVolume, roi: RoiKind) -> Sparse {
    let vox = roi_voxels(vol, roi);
    let mut m = Sparse::new();
    for u in &vox {
        let dep = vox
            .iter()
            .filter(|v| v.level == u.level && chebyshev_one(u.c, v.c))
            .count() as u32;
        *m.entry((u.level, dep + 1)).or_default() += 1.0;
    }
    m
}

fn h(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

pub fn glcm_features(m: &Sparse) -> Vec<f64> {
    let total: f64 = m.values().sum();
    if total == 0.0 {
        return vec![0.0; 22];
    }
    let p: Vec<(f64, f64, f64)> = m.iter().map(|(&(i, j), &c)| (i as f64, j as f64, c / total)).collect();
    let ng = p.iter().map(|t| t.0.max(t.1)).fold(0.0, f64::max);
    let mut px: BTreeMap<u64, f64> = BTreeMap::new();
    let mut py: BTreeMap<u64, f64> = BTreeMap::new();
    for &(i, j, v) in &p {
        *px.entry(i as u64).or_default() += v;
        *py.entry(j as u64).or_default() += v;
    }
    let mux: f64 = p.iter().map(|&(i, _, v)| i * v).sum();
    let muy: f64 = p.iter().map(|&(_, j, v)| j * v).sum();
    let varx: f64 = p.iter().map(|&(i, _, v)| (i - mux).powi(2) * v).sum();
    let vary: f64 = p.iter().map(|&(_, j, v)| (j - muy).powi(2) * v).sum();

    let autocorr: f64 = p.iter().map(|&(i, j, v)| i * j * v).sum();
    let cp: f64 = p.iter().map(|&(i, j, v)| (i + j - mux - muy).powi(4) * v).sum();
    let cs: f64 = p.iter().map(|&(i, j, v)| (i + j - mux - muy).powi(3) * v).sum();
    let ct: f64 = p.iter().map(|&(i, j, v)| (i + j - mux - muy).powi(2) * v).sum();
    let contrast: f64 = p.iter().map(|&(i, j, v)| (i - j).powi(2) * v).sum();
    let corr = if varx * vary > 0.0 {
        p.iter().map(|&(i, j, v)| (i - mux) * (j - muy) * v).sum::<f64>() / (varx * vary).sqrt()
    } else {
        0.0
    };

    let mut pdiff: BTreeMap<u64, f64> = BTreeMap::new();
    let mut psum: BTreeMap<u64, f64> = BTreeMap::new();
    for &(i, j, v) in &p {
        *pdiff.entry((i - j).abs() as u64).or_default() += v;
        *psum.entry((i + j) as u64).or_default() += v;
    }
    let da: f64 = pdiff.iter().map(|(&k, &v)| k as f64 * v).sum();
    let de: f64 = pdiff.values().map(|&v| h(v)).sum();
    let dv: f64 = pdiff.iter().map(|(&k, &v)| (k as f64 - da).powi(2) * v).sum();
    let energy: f64 = p.iter().map(|t| t.2 * t.2).sum();
    let hxy: f64 = p.iter().map(|t| h(t.2)).sum();
    let hx: f64 = px.values().map(|&v| h(v)).sum();
    let hy: f64 = py.values().map(|&v| h(v)).sum();
    let hxy1: f64 = p
        .iter()
        .map(|&(i, j, v)| -v * (px[&(i as u64)] * py[&(j as u64)]).log2())
        .sum();
    let mut hxy2 = 0.0;
    for &a in px.values() {
        for &b in py.values() {
            hxy2 += h(a * b);
        }
    }
    let imc1 = if hx.max(hy) > 0.0 { (hxy - hxy1) / hx.max(hy) } else { 0.0 };
    let imc2 = (1.0 - (-2.0 * (hxy2 - hxy).max(0.0)).exp()).sqrt();
    let idm: f64 = p.iter().map(|&(i, j, v)| v / (1.0 + (i - j).powi(2))).sum();
    let idmn: f64 = p.iter().map(|&(i, j, v)| v / (1.0 + (i - j).powi(2) / (ng * ng))).sum();
    let id: f64 = p.iter().map(|&(i, j, v)| v / (1.0 + (i - j).abs())).sum();
    let idn: f64 = p.iter().map(|&(i, j, v)| v / (1.0 + (i - j).abs() / ng)).sum();
    let iv: f64 = p.iter().filter(|t| t.0 != t.1).map(|&(i, j, v)| v / (i - j).powi(2)).sum();
    let maxp = p.iter().map(|t| t.2).fold(0.0, f64::max);
    let se: f64 = psum.values().map(|&v| h(v)).sum();
    let ss: f64 = p.iter().map(|&(i, _, v)| (i - mux).powi(2) * v).sum();
    vec![
        autocorr, mux, cp, cs, ct, contrast, corr, da, de, dv, energy, hxy, imc1, imc2, idm, idmn, id, idn, iv,
        maxp, se, ss,
    ]
}

struct SizeFeatures {
    short: f64,
    long: f64,
    gln: f64,
    glnn: f64,
    sn: f64,
    snn: f64,
    gl_var: f64,
    size_var: f64,
    entropy: f64,
    lgl: f64,
    hgl: f64,
    slgl: f64,
    shgl: f64,
    llgl: f64,
    lhgl: f64,
    n: f64,
    covered: f64,
}

fn size_features(m: &Sparse) -> SizeFeatures {
    let n: f64 = m.values().sum();
    let avg = |f: &dyn Fn(f64, f64) -> f64| m.iter().map(|(&(i, j), &c)| c * f(i as f64, j as f64)).sum::<f64>() / n;
    let mut by_level: BTreeMap<u32, f64> = BTreeMap::new();
    let mut by_size: BTreeMap<u32, f64> = BTreeMap::new();
    for (&(i, j), &c) in m {
        *by_level.entry(i).or_default() += c;
        *by_size.entry(j).or_default() += c;
    }
    let gl_sq: f64 = by_level.values().map(|v| v * v).sum();
    let s_sq: f64 = by_size.values().map(|v| v * v).sum();
    let mu_i = avg(&|i, _| i);
    let mu_j = avg(&|_, j| j);
    SizeFeatures {
        short: avg(&|_, j| 1.0 / (j * j)),
        long: avg(&|_, j| j * j),
        gln: gl_sq / n,
        glnn: gl_sq / (n * n),
        sn: s_sq / n,
        snn: s_sq / (n * n),
        gl_var: avg(&|i, _| (i - mu_i).powi(2)),
        size_var: avg(&|_, j| (j - mu_j).powi(2)),
        entropy: m.values().map(|&c| h(c / n)).sum(),
        lgl: avg(&|i, _| 1.0 / (i * i)),
        hgl: avg(&|i, _| i * i),
        slgl: avg(&|i, j| 1.0 / (i * i * j * j)),
        shgl: avg(&|i, j| i * i / (j * j)),
        llgl: avg(&|i, j| j * j / (i * i)),
        lhgl: avg(&|i, j| i * i * j * j),
        n,
        covered: m.iter().map(|(&(_, j), &c)| c * j as f64).sum(),
    }
}

pub fn glrlm_features(m: &Sparse) -> Vec<f64> {
    let s = size_features(m);
    vec![
        s.short, s.long, s.gln, s.glnn, s.sn, s.snn, s.n / s.covered, s.gl_var, s.size_var, s.entropy, s.lgl,
        s.hgl, s.slgl, s.shgl, s.llgl, s.lhgl,
    ]
}

pub fn glszm_features(m: &Sparse, roi_voxels: usize) -> Vec<f64> {
    let s = size_features(m);
    vec![
        s.short,
        s.long,
        s.gln,
        s.glnn,
        s.sn,
        s.snn,
        s.n / roi_voxels as f64,
        s.gl_var,
        s.size_var,
        s.entropy,
        s.lgl,
        s.hgl,
        s.slgl,
        s.shgl,
        s.llgl,
        s.lhgl,
    ]
}

pub fn gldm_features(m: &Sparse) -> Vec<f64> {
    let s = size_features(m);
    vec![
        s.short, s.long, s.gln, s.sn, s.snn, s.gl_var, s.size_var, s.entropy, s.lgl, s.hgl, s.slgl, s.shgl,
        s.llgl, s.lhgl,
    ]
}

/// All 68 features in emission order: GLCM, GLRLM, GLSZM, GLDM.
pub fn all_features(vol: &LabelVolume, roi: RoiKind) -> Vec<f64> {
    let n = roi_voxels(vol, roi).len();
    let mut out = glcm_features(&glcm(vol, roi));
    out.extend(glrlm_features(&glrlm(vol, roi)));
    out.extend(glszm_features(&glszm(vol, roi), n));
    out.extend(gldm_features(&gldm(vol, roi)));
    out
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-12
}
