//! End-to-end workflow: extract, assemble the table, select, train, evaluate.
//!
//! Artifacts written by [`run_study`] under the output directory:
//!
//! ```text
//! features.csv            training feature table
//! holdout_features.csv    hold-out table, when a hold-out cohort is given
//! exclusions.json         subjects dropped during extraction, with reasons
//! models/<name>.json      fitted model documents
//! selection/<name>.json   RFE report, for models that select features
//! selection/<name>.txt    selected feature list
//! reports.json            every EvalReport
//! reports.txt             the same as an aligned table
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalx::{cross_validate, evaluate, filter_gtr, format_table, EvalReport, ModelSpec, Thresholds, RIC};
use crate::featsel::{FeatureTable, Resection};
use crate::imgvol::{read_label_volume, roi_mask, LabelVolume, Mask, RoiKind};
use crate::invasive::{ric, MveParams};
use crate::morphfeat::{morphology, BrainRef, MORPH_FEATURE_NAMES};
use crate::synthgen::{COHORT_CSV, SEG_FILE};
use crate::texfeat::{texture_features, Family};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub rois: Vec<RoiKind>,
    pub morphology: bool,
    pub texture: bool,
    pub ric: bool,
    pub mve: MveParams,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            rois: vec![RoiKind::WT, RoiKind::TC],
            morphology: true,
            texture: true,
            ric: true,
            mve: MveParams::default(),
        }
    }
}

impl ExtractConfig {
    /// Column names in emission order: per ROI the shape features, then the
    /// GLCM, GLRLM, GLSZM and GLDM families; `RIC` last.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for roi in &self.rois {
            if self.morphology {
                names.extend(MORPH_FEATURE_NAMES.iter().map(|n| format!("{roi}_shape_{n}")));
            }
            if self.texture {
                for f in Family::ALL {
                    names.extend(f.names().iter().map(|n| format!("{roi}_{}_{n}", f.prefix())));
                }
            }
        }
        if self.ric {
            names.push(RIC.into());
        }
        names
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        if let Some(r) = self.rois.iter().find(|r| !seen.insert(**r)) {
            return Err(Error::Config(format!("ROI {r} listed twice")));
        }
        if self.rois.contains(&RoiKind::Brain) {
            return Err(Error::Config("the brain mask is not a tumour ROI".into()));
        }
        if self.feature_names().is_empty() {
            return Err(Error::Config("every feature group is disabled".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub warnings: Vec<String>,
}

/// The radiomics vector of one structure map: 13 shape and 68 texture
/// features per ROI plus RIC (163 values with the default configuration).
pub fn extract_all(vol: &LabelVolume, brain: Option<&Mask>, cfg: &ExtractConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    let brain_ref = brain.map_or(BrainRef::Extent, BrainRef::Mask);
    let mut values = Vec::new();
    let mut warnings = Vec::new();
    for &roi in &cfg.rois {
        if cfg.morphology {
            values.extend(morphology(vol, roi, brain_ref)?.values());
        }
        if cfg.texture {
            let mask = roi_mask(vol, roi);
            if mask.is_empty() {
                return Err(Error::EmptyRoi(format!("{roi} mask has no voxels")));
            }
            let t = texture_features(vol, &mask)?;
            for f in Family::ALL {
                values.extend_from_slice(t.family(f));
            }
            warnings.extend(t.warnings);
        }
    }
    if cfg.ric {
        values.push(ric(vol, &cfg.mve)?.ric);
    }
    let names = cfg.feature_names();
    debug_assert_eq!(names.len(), values.len());
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Degenerate(format!("feature {} is not finite", names[k])));
    }
    Ok(FeatureVector { names, values, warnings })
}

/// One row of `cohort.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortEntry {
    pub id: String,
    pub age: f64,
    /// NaN when unknown.
    pub survival_days: f64,
    pub resection: Resection,
}

fn parse_number(s: &str, what: &str, id: &str) -> Result<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| Error::Validation(format!("subject {id}: {what} `{s}` is not a number")))
}

/// Reads `id, age, survival_days, resection_status` (extra columns ignored).
pub fn read_cohort_csv(path: impl AsRef<Path>) -> Result<Vec<CohortEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let bad = |e: csv::Error| Error::Validation(format!("{}: {e}", path.display()));
    let header = rdr.headers().map_err(bad)?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Validation(format!("{}: missing column `{name}`", path.display())))
    };
    let (ci, ca, cs) = (col("id")?, col("age")?, col("survival_days")?);
    let cr = header.iter().position(|h| h == "resection_status");
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(bad)?;
        let id = rec.get(ci).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Validation(format!("{}: empty subject id", path.display())));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Validation(format!("{}: subject {id} listed twice", path.display())));
        }
        let age = parse_number(rec.get(ca).unwrap_or(""), "age", &id)?;
        let survival_days = parse_number(rec.get(cs).unwrap_or(""), "survival_days", &id)?;
        if survival_days < 0.0 {
            return Err(Error::Validation(format!("subject {id}: negative survival {survival_days}")));
        }
        let resection = match cr {
            Some(c) => rec.get(c).unwrap_or("").parse()?,
            None => Resection::NA,
        };
        out.push(CohortEntry {
            id,
            age,
            survival_days,
            resection,
        });
    }
    Ok(out)
}

/// `seg.nii.gz`, or `seg.nii` when only the uncompressed file exists.
pub fn subject_seg_path(root: &Path, id: &str) -> PathBuf {
    let gz = root.join(id).join(SEG_FILE);
    if gz.exists() {
        return gz;
    }
    let plain = root.join(id).join("seg.nii");
    if plain.exists() {
        plain
    } else {
        gz
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub subject: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortFeatures {
    pub table: FeatureTable,
    pub excluded: Vec<Exclusion>,
    pub warnings: Vec<String>,
}

/// Extracts every subject listed in `<root>/cohort.csv`, in parallel.
/// Subjects that fail are left out of the table and listed with the error.
pub fn extract_cohort(root: impl AsRef<Path>, cfg: &ExtractConfig) -> Result<CohortFeatures> {
    cfg.validate()?;
    let root = root.as_ref();
    let entries = read_cohort_csv(root.join(COHORT_CSV))?;
    let results: Vec<Result<FeatureVector>> = entries
        .par_iter()
        .map(|e| {
            read_label_volume(subject_seg_path(root, &e.id))
                .and_then(|v| extract_all(&v, None, cfg))
                .map_err(|err| err.for_subject(e.id.clone()))
        })
        .collect();
    let mut table = FeatureTable::empty(cfg.feature_names());
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    for (e, r) in entries.iter().zip(results) {
        match r {
            Ok(fv) => {
                warnings.extend(fv.warnings.into_iter().map(|w| format!("subject {}: {w}", e.id)));
                table.push_row(e.id.clone(), fv.values, e.survival_days, e.age, e.resection)?;
            }
            Err(err) => excluded.push(Exclusion {
                subject: e.id.clone(),
                reason: err.to_string(),
            }),
        }
    }
    table.validate()?;
    Ok(CohortFeatures {
        table,
        excluded,
        warnings,
    })
}

fn default_folds() -> usize {
    10
}

fn default_true() -> bool {
    true
}

fn default_models() -> Vec<ModelSpec> {
    vec![ModelSpec::baseline(), ModelSpec::radiomics(), ModelSpec::invasiveness()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Training cohort: `<dir>/cohort.csv` plus one folder per subject.
    pub cohort_dir: PathBuf,
    /// Pre-extracted training table; skips extraction when set.
    #[serde(default)]
    pub features_csv: Option<PathBuf>,
    #[serde(default)]
    pub holdout_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub gtr_only: bool,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub extract: ExtractConfig,
    #[serde(default = "default_models")]
    pub models: Vec<ModelSpec>,
}

impl PipelineConfig {
    pub fn new(cohort_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            cohort_dir: cohort_dir.into(),
            features_csv: None,
            holdout_dir: None,
            output_dir: output_dir.into(),
            seed,
            gtr_only: true,
            folds: default_folds(),
            thresholds: Thresholds::default(),
            extract: ExtractConfig::default(),
            models: default_models(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("pipeline config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        self.extract.validate()?;
        if self.models.is_empty() {
            return Err(Error::Config("no models to train".into()));
        }
        let mut names = HashSet::new();
        if let Some(m) = self.models.iter().find(|m| !names.insert(m.name.as_str())) {
            return Err(Error::Config(format!("model name `{}` used twice", m.name)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyResult {
    pub reports: Vec<EvalReport>,
    pub excluded: Vec<Exclusion>,
    pub warnings: Vec<String>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

/// Runs the full grid: per model, training-set, cross-validated and (when a
/// hold-out cohort is configured) hold-out metrics. Every artifact is written
/// under `output_dir`.
pub fn run_study(cfg: &PipelineConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut warnings = Vec::new();

    let (table, excluded) = match &cfg.features_csv {
        Some(p) => (FeatureTable::read_csv(p).map_err(|e| e.in_stage("extract"))?, Vec::new()),
        None => {
            let cf = extract_cohort(&cfg.cohort_dir, &cfg.extract).map_err(|e| e.in_stage("extract"))?;
            warnings.extend(cf.warnings);
            (cf.table, cf.excluded)
        }
    };
    table.write_csv(out.join("features.csv"))?;
    write_text(&out.join("exclusions.json"), &to_json(&excluded))?;

    let train = if cfg.gtr_only {
        let t = filter_gtr(&table);
        if t.n_rows() == 0 {
            return Err(Error::Validation("GTR filter left no training subjects".into()).in_stage("filter"));
        }
        t
    } else {
        table
    };

    let holdout = match &cfg.holdout_dir {
        Some(dir) => {
            let cf = extract_cohort(dir, &cfg.extract).map_err(|e| e.in_stage("holdout extract"))?;
            warnings.extend(cf.warnings);
            cf.table.write_csv(out.join("holdout_features.csv"))?;
            let t = if cfg.gtr_only { filter_gtr(&cf.table) } else { cf.table };
            if t.n_rows() == 0 {
                warnings.push("hold-out cohort is empty after filtering".into());
                None
            } else {
                Some(t)
            }
        }
        None => None,
    };

    let mut reports = Vec::new();
    for spec in &cfg.models {
        let fitted = spec.fit(&train, cfg.seed).map_err(|e| e.in_stage("train"))?;
        write_text(&out.join("models").join(format!("{}.json", spec.name)), &fitted.document.to_json())?;
        if let Some(sel) = &fitted.selection {
            write_text(&out.join("selection").join(format!("{}.json", spec.name)), &to_json(sel))?;
            write_text(&out.join("selection").join(format!("{}.txt", spec.name)), &sel.selected_list())?;
        }
        reports.push(evaluate(&fitted.document, &train, "train", &cfg.thresholds).map_err(|e| e.in_stage("evaluate"))?);
        reports.push(
            cross_validate(&train, spec, cfg.folds, cfg.seed, &cfg.thresholds).map_err(|e| e.in_stage("cross-validate"))?,
        );
        if let Some(h) = &holdout {
            reports.push(evaluate(&fitted.document, h, "holdout", &cfg.thresholds).map_err(|e| e.in_stage("holdout"))?);
        }
    }
    write_text(&out.join("reports.json"), &to_json(&reports))?;
    write_text(&out.join("reports.txt"), &format_table(&reports))?;
    Ok(StudyResult {
        reports,
        excluded,
        warnings,
    })
}
