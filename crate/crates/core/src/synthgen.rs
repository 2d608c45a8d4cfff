//! Synthetic nested-ellipsoid phantoms and survival cohorts with a known law.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featsel::{FeatureTable, Resection};
use crate::imgvol::{
    write_intensity_volume, write_label_volume, Geometry, IntensityVolume, LabelVolume, LABEL_ED,
    LABEL_ET, LABEL_NCR,
};

pub const COHORT_CSV: &str = "cohort.csv";
pub const SEG_FILE: &str = "seg.nii.gz";
pub const T1GD_FILE: &str = "t1gd.nii.gz";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    /// WT semi-axes in mm, before rotation.
    pub wt_semi_axes: [f64; 3],
    /// TC semi-axes are `ric * wt_semi_axes`.
    pub ric: f64,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Roll, pitch, yaw in radians (about x, y, z).
    pub rotation: [f64; 3],
    /// Ellipsoid centre in mm; `None` means the extent centre plus a seeded
    /// sub-voxel jitter.
    #[serde(default)]
    pub center: Option<[f64; 3]>,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(wt_semi_axes: [f64; 3], ric: f64, dims: [usize; 3], spacing: [f64; 3]) -> Self {
        Self {
            wt_semi_axes,
            ric,
            dims,
            spacing,
            rotation: [0.0; 3],
            center: None,
            seed: 0,
        }
    }
}

/// Voxelises WT / TC / ET ellipsoids sharing centre and orientation.
///
/// Inside the ET ellipsoid (half the TC axes) the label is 4, elsewhere in
/// TC it is 1, in WT outside TC it is 2.
pub fn make_phantom(spec: &PhantomSpec) -> Result<LabelVolume> {
    if !(spec.ric > 0.0 && spec.ric <= 1.0) {
        return Err(Error::Config(format!("ric target {} outside (0, 1]", spec.ric)));
    }
    if spec.wt_semi_axes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::Config(format!(
            "semi-axes must be positive, got {:?}",
            spec.wt_semi_axes
        )));
    }
    let geom = Geometry::new(spec.dims, spec.spacing, [0.0; 3])?;
    let center = spec.center.unwrap_or_else(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut c = geom.extent_center();
        for (c, s) in c.iter_mut().zip(&spec.spacing) {
            *c += rng.random_range(-0.5..0.5) * s;
        }
        c
    });
    let [roll, pitch, yaw] = spec.rotation;
    let rot: Matrix3<f64> = *Rotation3::from_euler_angles(roll, pitch, yaw).matrix();

    for i in 0..3 {
        let reach = (0..3)
            .map(|k| (rot[(i, k)] * spec.wt_semi_axes[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        let hi = (spec.dims[i] - 1) as f64 * spec.spacing[i];
        if center[i] - reach < 0.0 || center[i] + reach > hi {
            return Err(Error::Geometry(format!(
                "phantom reaches {:.2} mm along axis {i} from centre {:.2} but the volume spans [0, {hi:.2}] mm",
                reach, center[i]
            )));
        }
    }

    let inv_sq = |scale: f64| spec.wt_semi_axes.map(|a| 1.0 / (a * scale).powi(2));
    let wt = inv_sq(1.0);
    let tc = inv_sq(spec.ric);
    let et = inv_sq(0.5 * spec.ric);
    let c = Vector3::from(center);
    let rt = rot.transpose();
    let mut data = vec![0u8; geom.len()];
    for (idx, slot) in data.iter_mut().enumerate() {
        let p = Vector3::from(geom.position(geom.coords(idx)));
        let local = rt * (p - c);
        let q = |w: [f64; 3]| (0..3).map(|k| local[k] * local[k] * w[k]).sum::<f64>();
        if q(wt) > 1.0 {
            continue;
        }
        *slot = if q(et) <= 1.0 {
            LABEL_ET
        } else if q(tc) <= 1.0 {
            LABEL_NCR
        } else {
            LABEL_ED
        };
    }
    LabelVolume::new(geom, data)
}

/// Two-level T1Gd stand-in: 1 in enhancing tumour, 0 elsewhere, plus noise.
pub fn make_t1gd(labels: &LabelVolume, noise_sd: f64, seed: u64) -> Result<IntensityVolume> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd.max(0.0))
        .map_err(|e| Error::Config(format!("t1gd noise: {e}")))?;
    let data = labels
        .data()
        .iter()
        .map(|&l| f64::from(u8::from(l == LABEL_ET)) + noise.sample(&mut rng))
        .collect();
    IntensityVolume::new(*labels.geometry(), data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n_subjects: usize,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Per-axis lower bounds of the WT semi-axes, mm.
    pub wt_semiaxes_min: [f64; 3],
    pub wt_semiaxes_max: [f64; 3],
    pub ric_range: [f64; 2],
    pub age_range: [f64; 2],
    pub beta0: f64,
    pub beta_age: f64,
    pub beta_ric: f64,
    pub sigma: f64,
    /// Probability that a subject is marked GTR; the rest are STR.
    pub gtr_fraction: f64,
    pub rotate: bool,
    pub write_t1gd: bool,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_subjects: 100,
            dims: [64, 64, 64],
            spacing: [1.0, 1.0, 1.0],
            wt_semiaxes_min: [18.0, 12.0, 8.0],
            wt_semiaxes_max: [24.0, 16.0, 11.0],
            ric_range: [0.3, 1.0],
            age_range: [30.0, 80.0],
            beta0: 900.0,
            beta_age: -4.0,
            beta_ric: -300.0,
            sigma: 50.0,
            gtr_fraction: 1.0,
            rotate: true,
            write_t1gd: false,
            seed: 0,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi;
        if self.n_subjects == 0 {
            return Err(Error::Config("n_subjects must be at least 1".into()));
        }
        for k in 0..3 {
            if !range_ok(self.wt_semiaxes_min[k], self.wt_semiaxes_max[k]) || self.wt_semiaxes_min[k] <= 0.0 {
                return Err(Error::Config(format!("semi-axis range {k} is empty or non-positive")));
            }
        }
        let [r0, r1] = self.ric_range;
        if !range_ok(r0, r1) || r0 <= 0.0 || r1 > 1.0 {
            return Err(Error::Config(format!("ric_range [{r0}, {r1}] must lie in (0, 1]")));
        }
        if !range_ok(self.age_range[0], self.age_range[1]) {
            return Err(Error::Config("age_range is empty".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.gtr_fraction) {
            return Err(Error::Config("gtr_fraction must lie in [0, 1]".into()));
        }
        Geometry::new(self.dims, self.spacing, [0.0; 3])?;
        Ok(())
    }

    /// Noise-free survival for the linear law.
    pub fn expected_survival(&self, age: f64, ric: f64) -> f64 {
        self.beta0 + self.beta_age * age + self.beta_ric * ric
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub id: String,
    pub age: f64,
    pub survival_days: f64,
    pub resection_status: Resection,
    pub true_ric: f64,
}

#[derive(Clone, Debug)]
pub struct SubjectDraw {
    pub record: CohortRecord,
    pub phantom: PhantomSpec,
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draws subject `i` from its own seed stream, without touching the disk.
pub fn draw_subject(spec: &CohortSpec, i: usize) -> Result<SubjectDraw> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(i as u64 + 1);
    let age = uniform(&mut rng, spec.age_range);
    let ric = uniform(&mut rng, spec.ric_range);
    let mut axes = [0.0; 3];
    for k in 0..3 {
        axes[k] = uniform(&mut rng, [spec.wt_semiaxes_min[k], spec.wt_semiaxes_max[k]]);
    }
    axes.sort_by(|a, b| b.total_cmp(a));
    let rotation = if spec.rotate {
        let tau = std::f64::consts::TAU;
        [rng.random_range(0.0..tau), rng.random_range(0.0..tau), rng.random_range(0.0..tau)]
    } else {
        [0.0; 3]
    };
    let noise = Normal::new(0.0, spec.sigma)
        .map_err(|e| Error::Config(format!("survival noise: {e}")))?
        .sample(&mut rng);
    let resection = if rng.random::<f64>() < spec.gtr_fraction {
        Resection::GTR
    } else {
        Resection::STR
    };
    let phantom_seed = rng.random::<u64>();
    // Negative days are not a valid survival time.
    let survival = (spec.expected_survival(age, ric) + noise).max(0.0);
    Ok(SubjectDraw {
        record: CohortRecord {
            id: format!("S{:03}", i + 1),
            age,
            survival_days: survival,
            resection_status: resection,
            true_ric: ric,
        },
        phantom: PhantomSpec {
            wt_semi_axes: axes,
            ric,
            dims: spec.dims,
            spacing: spec.spacing,
            rotation,
            center: None,
            seed: phantom_seed,
        },
    })
}

#[derive(Clone, Debug)]
pub struct Cohort {
    pub root: PathBuf,
    pub records: Vec<CohortRecord>,
}

impl Cohort {
    /// Table with metadata and targets but no feature columns yet.
    pub fn skeleton(&self) -> FeatureTable {
        let mut t = FeatureTable::empty(Vec::new());
        for r in &self.records {
            t.push_row(r.id.clone(), Vec::new(), r.survival_days, r.age, r.resection_status)
                .expect("empty feature row");
        }
        t
    }
}

/// Writes `<out>/<id>/seg.nii.gz` (plus `t1gd.nii.gz` if asked) for every
/// subject and `<out>/cohort.csv`.
pub fn make_cohort(spec: &CohortSpec, out: impl AsRef<Path>) -> Result<Cohort> {
    spec.validate()?;
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let records = (0..spec.n_subjects)
        .into_par_iter()
        .map(|i| {
            let draw = draw_subject(spec, i)?;
            let id = draw.record.id.clone();
            let write = || -> Result<()> {
                let vol = make_phantom(&draw.phantom)?;
                let dir = out.join(&id);
                write_label_volume(dir.join(SEG_FILE), &vol)?;
                if spec.write_t1gd {
                    let t1 = make_t1gd(&vol, 0.25, draw.phantom.seed ^ 0x7431_6764)?;
                    write_intensity_volume(dir.join(T1GD_FILE), &t1)?;
                }
                Ok(())
            };
            write().map_err(|e| e.for_subject(id))?;
            Ok(draw.record)
        })
        .collect::<Result<Vec<_>>>()?;
    write_cohort_csv(out.join(COHORT_CSV), &records)?;
    Ok(Cohort {
        root: out.to_path_buf(),
        records,
    })
}

pub fn write_cohort_csv(path: impl AsRef<Path>, records: &[CohortRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "age", "survival_days", "resection_status", "true_ric"])
        .expect("in-memory csv write");
    for r in records {
        w.write_record([
            r.id.clone(),
            format!("{}", r.age),
            format!("{}", r.survival_days),
            r.resection_status.as_str().to_string(),
            format!("{}", r.true_ric),
        ])
        .expect("in-memory csv write");
    }
    let bytes = w.into_inner().expect("flush");
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
