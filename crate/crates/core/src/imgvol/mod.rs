//! 3D volume data model: label maps, intensity images, region masks.
//!
//! Voxels are stored x-fastest (`x + nx * (y + ny * z)`), which is the
//! NIfTI payload order, so loading is a straight copy.

mod components;
mod nifti;
mod normalize;

pub use components::{connected_components, ComponentSet, Connectivity};
pub use nifti::{
    decode_nifti, encode_intensity, encode_labels, read_intensity_volume, read_label_volume,
    read_volume, write_intensity_volume, write_label_volume, DataType, Volume,
};
pub use normalize::zscore_normalize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labels allowed in a tumour structure map.
pub const VALID_LABELS: [u8; 4] = [0, 1, 2, 4];

pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_NCR: u8 = 1;
pub const LABEL_ED: u8 = 2;
pub const LABEL_ET: u8 = 4;

/// Voxel grid shared by every volume type.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    /// Millimetres per voxel along x, y, z.
    pub spacing: [f64; 3],
    /// Physical position (mm) of the centre of voxel (0, 0, 0).
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Validation(format!(
                "dims must be >= 1 in every axis, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::Validation(format!(
                "spacing must be finite and > 0, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Validation(format!("origin must be finite, got {origin:?}")));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
        })
    }

    /// Unit spacing, zero origin.
    pub fn unit(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Index of `coords + offset`, or `None` when it falls outside the grid.
    #[inline]
    pub fn offset(&self, coords: [usize; 3], offset: [isize; 3]) -> Option<usize> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let c = coords[a] as isize + offset[a];
            if c < 0 || c >= self.dims[a] as isize {
                return None;
            }
            out[a] = c as usize;
        }
        Some(self.index(out[0], out[1], out[2]))
    }

    /// Physical centre of a voxel in mm.
    #[inline]
    pub fn position(&self, coords: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + coords[0] as f64 * self.spacing[0],
            self.origin[1] + coords[1] as f64 * self.spacing[1],
            self.origin[2] + coords[2] as f64 * self.spacing[2],
        ]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Physical centre of the whole grid extent.
    pub fn extent_center(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = self.origin[a] + (self.dims[a] as f64 - 1.0) * 0.5 * self.spacing[a];
        }
        c
    }

    pub fn ensure_same(&self, other: &Geometry, what: &str) -> Result<()> {
        if self.dims != other.dims || self.spacing != other.spacing {
            return Err(Error::Shape(format!(
                "{what}: geometry mismatch ({:?} @ {:?} vs {:?} @ {:?})",
                self.dims, self.spacing, other.dims, other.spacing
            )));
        }
        Ok(())
    }
}

/// Integer tumour structure map with labels in {0, 1, 2, 4}.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    geom: Geometry,
    data: Vec<u8>,
}

impl LabelVolume {
    pub fn new(geom: Geometry, data: Vec<u8>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::Shape(format!(
                "label data has {} voxels, geometry expects {}",
                data.len(),
                geom.len()
            )));
        }
        let mut bad: Vec<u8> = data
            .iter()
            .copied()
            .filter(|v| !VALID_LABELS.contains(v))
            .collect();
        if !bad.is_empty() {
            bad.sort_unstable();
            bad.dedup();
            return Err(Error::Validation(format!(
                "labels outside {{0,1,2,4}}: {bad:?}"
            )));
        }
        Ok(Self { geom, data })
    }

    pub fn zeros(geom: Geometry) -> Self {
        let n = geom.len();
        Self {
            geom,
            data: vec![0; n],
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[self.geom.index(x, y, z)]
    }

    /// Sets a voxel; panics if `label` is not a valid structure-map label.
    pub fn set(&mut self, x: usize, y: usize, z: usize, label: u8) {
        assert!(VALID_LABELS.contains(&label), "invalid label {label}");
        let i = self.geom.index(x, y, z);
        self.data[i] = label;
    }

    pub fn roi_mask(&self, kind: RoiKind) -> Mask {
        roi_mask(self, kind)
    }

    /// Same labels with new voxel spacing / origin.
    pub fn with_geometry(mut self, geom: Geometry) -> Result<Self> {
        if geom.dims != self.geom.dims {
            return Err(Error::Shape("with_geometry: dims differ".into()));
        }
        self.geom = geom;
        Ok(self)
    }

    /// Permutes axes: output axis `a` is input axis `perm[a]`.
    pub fn permute_axes(&self, perm: [usize; 3]) -> LabelVolume {
        let g = &self.geom;
        let geom = Geometry {
            dims: [g.dims[perm[0]], g.dims[perm[1]], g.dims[perm[2]]],
            spacing: [g.spacing[perm[0]], g.spacing[perm[1]], g.spacing[perm[2]]],
            origin: [g.origin[perm[0]], g.origin[perm[1]], g.origin[perm[2]]],
        };
        let mut data = vec![0u8; g.len()];
        for (i, &v) in self.data.iter().enumerate() {
            let c = g.coords(i);
            let o = geom.index(c[perm[0]], c[perm[1]], c[perm[2]]);
            data[o] = v;
        }
        LabelVolume { geom, data }
    }
}

/// Real-valued image. `datatype` records the on-disk encoding so that a
/// write/read cycle reproduces the file exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityVolume {
    geom: Geometry,
    data: Vec<f64>,
    datatype: DataType,
}

impl IntensityVolume {
    pub fn new(geom: Geometry, data: Vec<f64>) -> Result<Self> {
        Self::with_datatype(geom, data, DataType::Float32)
    }

    pub fn with_datatype(geom: Geometry, data: Vec<f64>, datatype: DataType) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::Shape(format!(
                "intensity data has {} voxels, geometry expects {}",
                data.len(),
                geom.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite intensity at voxel {i}"
            )));
        }
        Ok(Self {
            geom,
            data,
            datatype,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn datatype(&self) -> DataType {
        self.datatype
    }
}

/// Region kinds derived from a structure map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoiKind {
    /// Whole tumour: labels {1, 2, 4}.
    WT,
    /// Tumour core: labels {1, 4}.
    TC,
    /// Enhancing tumour: label {4}.
    ET,
    /// Edema: label {2}.
    ED,
    /// Brain mask or any other externally supplied region.
    Brain,
}

impl RoiKind {
    pub fn labels(self) -> &'static [u8] {
        match self {
            RoiKind::WT => &[1, 2, 4],
            RoiKind::TC => &[1, 4],
            RoiKind::ET => &[4],
            RoiKind::ED => &[2],
            RoiKind::Brain => &[1, 2, 4],
        }
    }

    #[inline]
    pub fn contains(self, label: u8) -> bool {
        self.labels().contains(&label)
    }

    pub fn name(self) -> &'static str {
        match self {
            RoiKind::WT => "WT",
            RoiKind::TC => "TC",
            RoiKind::ET => "ET",
            RoiKind::ED => "ED",
            RoiKind::Brain => "brain",
        }
    }
}

impl std::fmt::Display for RoiKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RoiKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "WT" => Ok(RoiKind::WT),
            "TC" => Ok(RoiKind::TC),
            "ET" => Ok(RoiKind::ET),
            "ED" => Ok(RoiKind::ED),
            "BRAIN" => Ok(RoiKind::Brain),
            _ => Err(Error::Config(format!("unknown ROI kind `{s}`"))),
        }
    }
}

/// Boolean voxel mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    geom: Geometry,
    data: Vec<bool>,
    kind: RoiKind,
}

impl Mask {
    pub fn new(geom: Geometry, data: Vec<bool>, kind: RoiKind) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::Shape(format!(
                "mask has {} voxels, geometry expects {}",
                data.len(),
                geom.len()
            )));
        }
        Ok(Self { geom, data, kind })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn kind(&self) -> RoiKind {
        self.kind
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        self.data[idx]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Number of the 6 face neighbours of voxel `idx` that lie outside the
    /// mask (voxels beyond the grid edge count as outside).
    pub fn exposed_faces(&self, idx: usize) -> [usize; 3] {
        let c = self.geom.coords(idx);
        let mut per_axis = [0usize; 3];
        for (axis, count) in per_axis.iter_mut().enumerate() {
            for step in [-1isize, 1] {
                let mut off = [0isize; 3];
                off[axis] = step;
                match self.geom.offset(c, off) {
                    Some(j) if self.data[j] => {}
                    _ => *count += 1,
                }
            }
        }
        per_axis
    }

    /// Mask voxels with at least one exposed face.
    pub fn boundary_indices(&self) -> Vec<usize> {
        self.indices()
            .filter(|&i| self.exposed_faces(i).iter().any(|&n| n > 0))
            .collect()
    }

    /// Physical centres of boundary voxels.
    pub fn boundary_points(&self) -> Vec<[f64; 3]> {
        self.boundary_indices()
            .into_iter()
            .map(|i| self.geom.position(self.geom.coords(i)))
            .collect()
    }
}

/// Mask of voxels whose label belongs to `kind`'s label set.
pub fn roi_mask(vol: &LabelVolume, kind: RoiKind) -> Mask {
    let data = vol.data.iter().map(|&l| kind.contains(l)).collect();
    Mask {
        geom: vol.geom,
        data,
        kind,
    }
}
