//! Shape and location features of a region of interest.
//!
//! Surface area counts exposed voxel faces, each weighted by its physical
//! face area. Axis lengths are `4 * sqrt(eigenvalue)` of the covariance of
//! voxel-centre coordinates in mm.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgvol::{LabelVolume, Mask, RoiKind};

/// Feature names in emission order; the ROI prefix and `shape_` are added by
/// [`MorphFeatures::named`].
pub const MORPH_FEATURE_NAMES: [&str; 13] = [
    "center_X",
    "center_Y",
    "center_Z",
    "Volume",
    "SurfaceArea",
    "SurfaceVolumeRatio",
    "Sphericity",
    "Maximum3DDiameter",
    "MajorAxisLength",
    "MinorAxisLength",
    "LeastAxisLength",
    "Elongation",
    "Flatness",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphFeatures {
    /// ROI centroid minus brain centroid, mm.
    pub centroid_offset: [f64; 3],
    pub volume: f64,
    pub surface_area: f64,
    pub sav_ratio: f64,
    pub sphericity: f64,
    pub max_diameter_3d: f64,
    pub major_axis: f64,
    pub minor_axis: f64,
    pub least_axis: f64,
    pub elongation: f64,
    pub flatness: f64,
    /// Set when the covariance is singular (e.g. a single voxel); the axis
    /// features are then reported as 0.
    pub degenerate: bool,
}

impl MorphFeatures {
    pub fn values(&self) -> [f64; 13] {
        [
            self.centroid_offset[0],
            self.centroid_offset[1],
            self.centroid_offset[2],
            self.volume,
            self.surface_area,
            self.sav_ratio,
            self.sphericity,
            self.max_diameter_3d,
            self.major_axis,
            self.minor_axis,
            self.least_axis,
            self.elongation,
            self.flatness,
        ]
    }

    /// `(name, value)` pairs named `{roi}_shape_{Feature}`.
    pub fn named(&self, roi: RoiKind) -> Vec<(String, f64)> {
        MORPH_FEATURE_NAMES
            .iter()
            .zip(self.values())
            .map(|(n, v)| (format!("{roi}_shape_{n}"), v))
            .collect()
    }
}

/// Reference point for the centroid features.
#[derive(Clone, Copy, Debug)]
pub enum BrainRef<'a> {
    /// Centroid of the nonzero voxels of a brain mask.
    Mask(&'a Mask),
    /// Geometric centre of the volume extent.
    Extent,
}

pub fn morphology(vol: &LabelVolume, roi: RoiKind, brain: BrainRef<'_>) -> Result<MorphFeatures> {
    morphology_of_mask(&vol.roi_mask(roi), brain)
}

fn centroid(mask: &Mask) -> Option<[f64; 3]> {
    let g = mask.geometry();
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for i in mask.indices() {
        let p = g.position(g.coords(i));
        for a in 0..3 {
            sum[a] += p[a];
        }
        n += 1;
    }
    (n > 0).then(|| sum.map(|s| s / n as f64))
}

pub fn morphology_of_mask(mask: &Mask, brain: BrainRef<'_>) -> Result<MorphFeatures> {
    let g = *mask.geometry();
    let idx: Vec<usize> = mask.indices().collect();
    if idx.is_empty() {
        return Err(Error::EmptyRoi(format!("{} mask has no voxels", mask.kind())));
    }

    let brain_center = match brain {
        BrainRef::Extent => g.extent_center(),
        BrainRef::Mask(b) => {
            g.ensure_same(b.geometry(), "brain mask")?;
            centroid(b).ok_or_else(|| Error::EmptyRoi("brain mask has no voxels".into()))?
        }
    };

    let points: Vec<[f64; 3]> = idx.iter().map(|&i| g.position(g.coords(i))).collect();
    let n = points.len() as f64;
    let mut mean = [0.0; 3];
    for p in &points {
        for a in 0..3 {
            mean[a] += p[a];
        }
    }
    let mean = mean.map(|s| s / n);

    let volume = n * g.voxel_volume();
    let face_area = [
        g.spacing[1] * g.spacing[2],
        g.spacing[0] * g.spacing[2],
        g.spacing[0] * g.spacing[1],
    ];
    let mut surface_area = 0.0;
    let mut boundary = Vec::new();
    for &i in &idx {
        let exposed = mask.exposed_faces(i);
        if exposed.iter().any(|&e| e > 0) {
            boundary.push(g.position(g.coords(i)));
        }
        for a in 0..3 {
            surface_area += exposed[a] as f64 * face_area[a];
        }
    }
    let sphericity =
        std::f64::consts::PI.cbrt() * (6.0 * volume).powf(2.0 / 3.0) / surface_area;

    let mut max_sq = 0.0f64;
    for (k, p) in boundary.iter().enumerate() {
        for q in &boundary[k + 1..] {
            let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            max_sq = max_sq.max(d);
        }
    }

    let mut cov = Matrix3::<f64>::zeros();
    for p in &points {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for r in 0..3 {
            for c in 0..3 {
                cov[(r, c)] += d[r] * d[c];
            }
        }
    }
    cov /= n;
    let mut eig: Vec<f64> = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0))
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let degenerate = !(eig[0] > 0.0);
    let (elongation, flatness) = if degenerate {
        (0.0, 0.0)
    } else {
        ((eig[1] / eig[0]).sqrt(), (eig[2] / eig[0]).sqrt())
    };

    Ok(MorphFeatures {
        centroid_offset: [
            mean[0] - brain_center[0],
            mean[1] - brain_center[1],
            mean[2] - brain_center[2],
        ],
        volume,
        surface_area,
        sav_ratio: surface_area / volume,
        sphericity,
        max_diameter_3d: max_sq.sqrt(),
        major_axis: 4.0 * eig[0].sqrt(),
        minor_axis: 4.0 * eig[1].sqrt(),
        least_axis: 4.0 * eig[2].sqrt(),
        elongation,
        flatness,
        degenerate,
    })
}
