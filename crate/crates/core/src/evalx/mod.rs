//! Survival binning, metrics and the cross-validation harness.

mod metrics;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featsel::{rfe_select, FeatureTable, Resection, RfeParams, SelectionReport, AGE};
use crate::prognosis::{
    fit_forest, fit_linear, fit_svr, ForestParams, ModelDocument, PrognosticModel, SvrParams,
};

pub use metrics::{average_ranks, classify_survival, metrics, pearson, spearman, Metrics, SurvivalClass, Thresholds};

/// Name of the invasiveness column produced by feature extraction.
pub const RIC: &str = "RIC";

/// Independent child seed for `stream`; the same pair always gives the same value.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Fold index per subject: a seeded shuffle dealt round-robin, so fold sizes
/// differ by at most one.
pub fn kfold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > n {
        return Err(Error::Config(format!("need 2 <= k <= n for cross-validation, got k={k}, n={n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold[i] = pos % k;
    }
    Ok(fold)
}

/// Rows with gross total resection. An empty result is returned as is;
/// callers decide whether to warn.
pub fn filter_gtr(table: &FeatureTable) -> FeatureTable {
    let rows: Vec<usize> = (0..table.n_rows()).filter(|&r| table.resection[r] == Resection::GTR).collect();
    table.subset_rows(&rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Forest(ForestParams),
    Svr(SvrParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// Fixed predictor columns (`age` allowed).
    Columns(Vec<String>),
    /// Correlation pruning plus RFE over every table feature not excluded,
    /// refitted on whatever rows the model is trained on.
    Selected {
        #[serde(default)]
        rfe: RfeParams,
        #[serde(default)]
        exclude: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub model: ModelKind,
    pub features: FeatureSource,
    /// Append age to the predictors after feature selection.
    #[serde(default)]
    pub add_age: bool,
}

pub const PRESETS: [&str; 3] = ["baseline", "radiomics", "invasiveness"];

impl ModelSpec {
    /// Age-only linear regression.
    pub fn baseline() -> Self {
        Self {
            name: "baseline".into(),
            model: ModelKind::Linear,
            features: FeatureSource::Columns(vec![AGE.into()]),
            add_age: false,
        }
    }

    /// Random forest on RFE-selected radiomics features plus age.
    pub fn radiomics() -> Self {
        Self {
            name: "radiomics".into(),
            model: ModelKind::Forest(ForestParams::default()),
            features: FeatureSource::Selected {
                rfe: RfeParams::default(),
                exclude: vec![RIC.into()],
            },
            add_age: true,
        }
    }

    /// Epsilon-SVR on age and RIC.
    pub fn invasiveness() -> Self {
        Self {
            name: "invasiveness".into(),
            model: ModelKind::Svr(SvrParams::default()),
            features: FeatureSource::Columns(vec![AGE.into(), RIC.into()]),
            add_age: false,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "baseline" => Ok(Self::baseline()),
            "radiomics" => Ok(Self::radiomics()),
            "invasiveness" => Ok(Self::invasiveness()),
            other => Err(Error::Config(format!(
                "unknown model `{other}` (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Fits on every row of `table`.
    pub fn fit(&self, table: &FeatureTable, seed: u64) -> Result<FittedModel> {
        let (mut features, selection) = match &self.features {
            FeatureSource::Columns(c) => (c.clone(), None),
            FeatureSource::Selected { rfe, exclude } => {
                let pool: Vec<String> =
                    table.feature_names.iter().filter(|n| !exclude.contains(n)).cloned().collect();
                let report = rfe_select(&table.select_columns(&pool)?, rfe, derive_seed(seed, 1))
                    .map_err(|e| e.in_stage("feature selection"))?;
                (report.selected.clone(), Some(report))
            }
        };
        if self.add_age && !features.iter().any(|f| f == AGE) {
            features.push(AGE.into());
        }
        if features.is_empty() {
            return Err(Error::Config(format!("model `{}` has no predictors", self.name)));
        }
        let x = table.design(&features)?;
        let y = table.targets()?;
        let model = match &self.model {
            ModelKind::Linear => PrognosticModel::Linear(fit_linear(&x, &y)?),
            ModelKind::Forest(p) => PrognosticModel::Forest(fit_forest(&x, &y, p, derive_seed(seed, 2))?),
            ModelKind::Svr(p) => PrognosticModel::Svr(fit_svr(&x, &y, p)?),
        };
        Ok(FittedModel {
            document: ModelDocument::new(self.name.clone(), features, model),
            selection,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    pub document: ModelDocument,
    pub selection: Option<SelectionReport>,
}

/// Predictions of a fitted model on every row of `table`.
pub fn predict_table(doc: &ModelDocument, table: &FeatureTable) -> Result<Vec<f64>> {
    doc.model.predict(&table.design(&doc.features)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectPrediction {
    pub subject: String,
    pub truth: f64,
    pub predicted: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    /// `train`, `cv` or `holdout`.
    pub split: String,
    #[serde(flatten)]
    pub metrics: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_fold: Option<Vec<Metrics>>,
    pub predictions: Vec<SubjectPrediction>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Metrics of a fitted model on `table`, labelled with `split`.
pub fn evaluate(doc: &ModelDocument, table: &FeatureTable, split: &str, th: &Thresholds) -> Result<EvalReport> {
    let pred = predict_table(doc, table)?;
    let truth = table.targets()?;
    Ok(EvalReport {
        model: doc.name.clone(),
        split: split.into(),
        metrics: metrics(&pred, &truth, th)?,
        k: None,
        seed: None,
        per_fold: None,
        predictions: table
            .subjects
            .iter()
            .zip(truth.iter().zip(&pred))
            .map(|(s, (&t, &p))| SubjectPrediction {
                subject: s.clone(),
                truth: t,
                predicted: p,
                fold: None,
            })
            .collect(),
    })
}

/// K-fold cross-validation; any feature selection is redone inside each
/// training split. Headline metrics pool all out-of-fold predictions.
pub fn cross_validate(
    table: &FeatureTable,
    spec: &ModelSpec,
    k: usize,
    seed: u64,
    th: &Thresholds,
) -> Result<EvalReport> {
    th.validate()?;
    let n = table.n_rows();
    let fold_of = kfold_assignment(n, k, derive_seed(seed, 0))?;
    let truth = table.targets()?;
    let fold_preds: Vec<(Vec<usize>, Vec<f64>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            let fitted = spec.fit(&table.subset_rows(&train), derive_seed(seed, 1 + f as u64))?;
            let pred = predict_table(&fitted.document, &table.subset_rows(&test))?;
            Ok((test, pred))
        })
        .collect::<Result<_>>()?;
    let mut oof = vec![0.0; n];
    let mut per_fold = Vec::with_capacity(k);
    for (test, pred) in &fold_preds {
        let t: Vec<f64> = test.iter().map(|&i| truth[i]).collect();
        per_fold.push(metrics::compute(pred, &t, th)?);
        for (&i, &p) in test.iter().zip(pred) {
            oof[i] = p;
        }
    }
    Ok(EvalReport {
        model: spec.name.clone(),
        split: "cv".into(),
        metrics: metrics(&oof, &truth, th)?,
        k: Some(k),
        seed: Some(seed),
        per_fold: Some(per_fold),
        predictions: (0..n)
            .map(|i| SubjectPrediction {
                subject: table.subjects[i].clone(),
                truth: truth[i],
                predicted: oof[i],
                fold: Some(fold_of[i]),
            })
            .collect(),
    })
}

fn fmt_num(v: f64, prec: usize) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.prec$}")
    }
}

/// Aligned text table with one row per report: Accuracy, MSE, mSE and rho.
pub fn format_table(reports: &[EvalReport]) -> String {
    let rows: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            [
                r.model.clone(),
                r.split.clone(),
                r.metrics.n.to_string(),
                fmt_num(r.metrics.accuracy, 2),
                fmt_num(r.metrics.mse, 0),
                fmt_num(r.metrics.mse_median, 0),
                fmt_num(r.metrics.spearman_rho, 2),
            ]
        })
        .collect();
    let header = ["Model", "Split", "n", "Accuracy", "MSE", "mSE", "rho"];
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i < 2 {
                let _ = write!(out, "{c:<w$}", w = width[i]);
            } else {
                let _ = write!(out, "{c:>w$}", w = width[i]);
            }
        }
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
        out.push('\n');
    };
    line(&header);
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells);
    }
    out
}
