//! Label-map ensembling, rule-based post-processing and segmentation scores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgvol::{
    connected_components, Connectivity, IntensityVolume, LabelVolume, Mask, RoiKind, LABEL_BACKGROUND, LABEL_ED,
    LABEL_ET, LABEL_NCR,
};
use crate::serde_util::inf_as_null;

/// Labels in tie-break order: the first one wins an equal vote.
pub const TIE_PRIORITY: [u8; 4] = [LABEL_ET, LABEL_NCR, LABEL_ED, LABEL_BACKGROUND];

const CHUNK: usize = 1 << 14;

/// Per-voxel weighted vote over the members; equal votes go to the label
/// that comes first in [`TIE_PRIORITY`].
pub fn majority_vote(members: &[LabelVolume], weights: Option<&[f64]>) -> Result<LabelVolume> {
    let first = members
        .first()
        .ok_or_else(|| Error::Validation("fusion needs at least one member".into()))?;
    let geom = *first.geometry();
    for (k, m) in members.iter().enumerate().skip(1) {
        geom.ensure_same(m.geometry(), &format!("ensemble member {k}"))?;
    }
    let unit = vec![1.0; members.len()];
    let w = match weights {
        Some(w) => {
            if w.len() != members.len() {
                return Err(Error::Shape(format!("{} weights for {} members", w.len(), members.len())));
            }
            if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::Validation(format!("member weight {bad} must be positive")));
            }
            w
        }
        None => &unit[..],
    };
    let mut out = vec![0u8; geom.len()];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        for (j, o) in chunk.iter_mut().enumerate() {
            let i = c * CHUNK + j;
            let mut votes = [0.0f64; 4];
            for (m, wk) in members.iter().zip(w) {
                let slot = TIE_PRIORITY.iter().position(|&l| l == m.data()[i]).expect("valid label");
                votes[slot] += wk;
            }
            let mut best = 0;
            for s in 1..4 {
                if votes[s] > votes[best] {
                    best = s;
                }
            }
            *o = TIE_PRIORITY[best];
        }
    });
    LabelVolume::new(geom, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessParams {
    /// WT components smaller than this become background; 0 disables.
    pub min_wt: usize,
    /// ET components smaller than this become label 1; 0 disables.
    pub min_et: usize,
    /// Total ET below this turns all ET into label 1; 0 disables.
    pub et_floor: usize,
    /// Relabel edema pockets enclosed by tumour core as label 1.
    pub hierarchy_repair: bool,
    /// ET voxels whose z-scored T1Gd intensity is below `z_et` become label 1.
    pub intensity_filter: bool,
    pub z_et: f64,
    pub connectivity: Connectivity,
}

impl Default for PostprocessParams {
    fn default() -> Self {
        Self {
            min_wt: 500,
            min_et: 50,
            et_floor: 500,
            hierarchy_repair: true,
            intensity_filter: false,
            z_et: 0.0,
            connectivity: Connectivity::TwentySix,
        }
    }
}

/// What each pass changed, in voxels.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostprocessLog {
    pub wt_removed: usize,
    pub et_small_relabelled: usize,
    pub et_floor_relabelled: usize,
    pub ed_enclosed_relabelled: usize,
    pub et_dark_relabelled: usize,
}

/// Applies, in order: small-component removal, the ET floor with hierarchy
/// repair, and the optional intensity filter.
pub fn postprocess(
    vol: &LabelVolume,
    intensity: Option<&IntensityVolume>,
    params: &PostprocessParams,
) -> Result<(LabelVolume, PostprocessLog)> {
    let intensity = if params.intensity_filter {
        let iv = intensity.ok_or_else(|| {
            Error::Config("intensity filter enabled but no T1Gd volume was given".into())
        })?;
        vol.geometry().ensure_same(iv.geometry(), "T1Gd volume")?;
        if !params.z_et.is_finite() {
            return Err(Error::Config(format!("z_et must be finite, got {}", params.z_et)));
        }
        Some(iv)
    } else {
        None
    };
    let geom = *vol.geometry();
    let mut data = vol.data().to_vec();
    let mut log = PostprocessLog::default();
    let current = |data: &[u8]| LabelVolume::new(geom, data.to_vec()).expect("labels stay valid");

    // (1) small components
    if params.min_wt > 0 {
        let cs = connected_components(&current(&data).roi_mask(RoiKind::WT), params.connectivity);
        for (i, &c) in cs.labels.iter().enumerate() {
            if c != 0 && cs.size_of(c) < params.min_wt {
                data[i] = LABEL_BACKGROUND;
                log.wt_removed += 1;
            }
        }
    }
    if params.min_et > 0 {
        let cs = connected_components(&current(&data).roi_mask(RoiKind::ET), params.connectivity);
        for (i, &c) in cs.labels.iter().enumerate() {
            if c != 0 && cs.size_of(c) < params.min_et {
                data[i] = LABEL_NCR;
                log.et_small_relabelled += 1;
            }
        }
    }

    // (2) core/enhancing consistency
    let et_total = data.iter().filter(|&&l| l == LABEL_ET).count();
    if et_total < params.et_floor {
        for l in data.iter_mut().filter(|l| **l == LABEL_ET) {
            *l = LABEL_NCR;
        }
        log.et_floor_relabelled = et_total;
    }
    if params.hierarchy_repair {
        let v = current(&data);
        for idx in enclosed_edema(&v, &v.roi_mask(RoiKind::ED)) {
            data[idx] = LABEL_NCR;
            log.ed_enclosed_relabelled += 1;
        }
    }

    // (3) intensity
    if let Some(iv) = intensity {
        for (l, z) in data.iter_mut().zip(iv.data()) {
            if *l == LABEL_ET && *z < params.z_et {
                *l = LABEL_NCR;
                log.et_dark_relabelled += 1;
            }
        }
    }
    Ok((LabelVolume::new(geom, data)?, log))
}

/// Edema voxels in 26-connected components whose every outside neighbour is
/// tumour core; components touching the grid edge are never enclosed.
fn enclosed_edema(vol: &LabelVolume, ed: &Mask) -> Vec<usize> {
    let geom = *vol.geometry();
    let cs = connected_components(ed, Connectivity::TwentySix);
    let mut enclosed = vec![true; cs.count];
    for idx in ed.indices() {
        let id = cs.labels[idx] as usize - 1;
        if !enclosed[id] {
            continue;
        }
        let c = geom.coords(idx);
        for off in Connectivity::TwentySix.offsets() {
            match geom.offset(c, *off) {
                None => enclosed[id] = false,
                Some(j) => {
                    if !RoiKind::WT.contains(vol.data()[j]) {
                        enclosed[id] = false;
                    }
                }
            }
            if !enclosed[id] {
                break;
            }
        }
    }
    ed.indices().filter(|&i| enclosed[cs.labels[i] as usize - 1]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionScore {
    pub dice: f64,
    /// Millimetres; `null` in JSON when exactly one mask is empty.
    #[serde(with = "inf_as_null")]
    pub hausdorff: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegScore {
    #[serde(rename = "ET")]
    pub et: RegionScore,
    #[serde(rename = "TC")]
    pub tc: RegionScore,
    #[serde(rename = "WT")]
    pub wt: RegionScore,
    /// 100 for the plain maximum, 95 for HD95.
    pub hd_percentile: u8,
}

pub fn dice(p: &Mask, g: &Mask) -> f64 {
    let (np, ng) = (p.count(), g.count());
    if np + ng == 0 {
        return 1.0;
    }
    let both = p.data().iter().zip(g.data()).filter(|(a, b)| **a && **b).count();
    2.0 * both as f64 / (np + ng) as f64
}

/// Distance from each point of `from` to its nearest point of `to`.
fn directed(from: &[[f64; 3]], to: &[[f64; 3]]) -> Vec<f64> {
    from.par_iter()
        .map(|a| {
            to.iter()
                .map(|b| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// Linearly interpolated percentile of unsorted values.
fn percentile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Symmetric Hausdorff distance between mask boundaries, in mm. With
/// `percentile < 100` each direction is summarised by that percentile before
/// taking the larger of the two.
pub fn hausdorff(p: &Mask, g: &Mask, percentile_q: f64) -> f64 {
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let bp = p.boundary_points();
    let bg = g.boundary_points();
    let summary = |d: Vec<f64>| {
        if percentile_q >= 100.0 {
            d.into_iter().fold(0.0, f64::max)
        } else {
            percentile(d, percentile_q)
        }
    };
    summary(directed(&bp, &bg)).max(summary(directed(&bg, &bp)))
}

/// Dice and Hausdorff for ET, TC and WT; `hd95` switches to the 95th percentile.
pub fn seg_metrics(pred: &LabelVolume, reference: &LabelVolume, hd95: bool) -> Result<SegScore> {
    pred.geometry().ensure_same(reference.geometry(), "reference segmentation")?;
    let q = if hd95 { 95.0 } else { 100.0 };
    let score = |kind| {
        let p = pred.roi_mask(kind);
        let g = reference.roi_mask(kind);
        RegionScore {
            dice: dice(&p, &g),
            hausdorff: hausdorff(&p, &g, q),
        }
    };
    Ok(SegScore {
        et: score(RoiKind::ET),
        tc: score(RoiKind::TC),
        wt: score(RoiKind::WT),
        hd_percentile: q as u8,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgvol::Geometry;

    fn line(labels: &[u8]) -> LabelVolume {
        LabelVolume::new(Geometry::unit([labels.len(), 1, 1]).unwrap(), labels.to_vec()).unwrap()
    }

    fn vote(v: &[u8]) -> u8 {
        let members: Vec<LabelVolume> = v.iter().map(|&l| line(&[l])).collect();
        majority_vote(&members, None).unwrap().data()[0]
    }

    #[test]
    fn vote_examples() {
        assert_eq!(vote(&[2, 2, 2, 1, 1, 4]), 2);
        assert_eq!(vote(&[1, 1, 2, 2, 4, 4]), 4);
        assert_eq!(vote(&[1, 1, 2, 2]), 1);
        assert_eq!(vote(&[0, 2]), 2);
        let one = line(&[0, 1, 2, 4]);
        assert_eq!(majority_vote(&[one.clone()], None).unwrap(), one);
    }

    #[test]
    fn weights_shift_the_vote() {
        let m = [line(&[1]), line(&[2]), line(&[2])];
        assert_eq!(majority_vote(&m, Some(&[3.0, 1.0, 1.0])).unwrap().data()[0], 1);
        assert!(majority_vote(&m, Some(&[1.0, 0.0, 1.0])).is_err());
        assert!(matches!(majority_vote(&m, Some(&[1.0])), Err(Error::Shape(_))));
    }

    #[test]
    fn geometry_mismatch() {
        assert!(matches!(majority_vote(&[line(&[1]), line(&[1, 1])], None), Err(Error::Shape(_))));
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(vec![0.0, 10.0], 95.0), 9.5);
        assert_eq!(percentile(vec![3.0], 95.0), 3.0);
    }
}
