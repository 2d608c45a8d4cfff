use super::{IntensityVolume, Mask};
use crate::error::{Error, Result};

/// Z-scores the voxels inside `mask` (or the whole volume when `None`) with
/// the population standard deviation. Voxels outside the mask become 0.
pub fn zscore_normalize(vol: &IntensityVolume, mask: Option<&Mask>) -> Result<IntensityVolume> {
    if let Some(m) = mask {
        vol.geometry().ensure_same(m.geometry(), "zscore_normalize")?;
    }
    let inside = |i: usize| mask.map_or(true, |m| m.get(i));
    let values: Vec<f64> = vol
        .data()
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| inside(i).then_some(v))
        .collect();
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "z-score needs at least 2 voxels, mask has {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::Degenerate("z-score of a constant region (zero variance)".into()));
    }
    let sd = var.sqrt();
    let data = vol
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| if inside(i) { (v - mean) / sd } else { 0.0 })
        .collect();
    IntensityVolume::new(*vol.geometry(), data)
}
