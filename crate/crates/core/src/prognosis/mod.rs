//! The three survival regressors: age-only OLS, random forest and epsilon-SVR.

mod forest;
mod linear;
mod svr;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::{fit_forest, tree_rng, ForestModel, ForestParams, Node, Tree};
pub use linear::{fit_linear, LinearModel};
pub use svr::{
    column_stats, fit_svr, solve_dual, DualProblem, DualSolution, Kernel, KernelKind, SvrModel, SvrParams,
};

pub const MODEL_FORMAT: &str = "gliomics-model";
pub const MODEL_VERSION: u32 = 1;

/// Checks a row-major design against its targets and returns the column count.
pub(crate) fn check_xy(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} targets", x.len(), y.len())));
    }
    let p = x.first().map_or(0, Vec::len);
    if let Some(r) = x.iter().position(|row| row.len() != p) {
        return Err(Error::Shape(format!("row {r} has {} columns, expected {p}", x[r].len())));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("training data contains non-finite values".into()));
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrognosticModel {
    Linear(LinearModel),
    Forest(ForestModel),
    Svr(SvrModel),
}

impl PrognosticModel {
    pub fn n_features(&self) -> usize {
        match self {
            PrognosticModel::Linear(m) => m.n_features(),
            PrognosticModel::Forest(m) => m.n_features,
            PrognosticModel::Svr(m) => m.n_features(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PrognosticModel::Linear(_) => "linear",
            PrognosticModel::Forest(_) => "forest",
            PrognosticModel::Svr(_) => "svr",
        }
    }

    /// Survival days per row.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        let p = self.n_features();
        if let Some(r) = x.iter().position(|row| row.len() != p) {
            return Err(Error::Shape(format!(
                "model expects {p} predictors, row {r} has {}",
                x[r].len()
            )));
        }
        Ok(x.iter()
            .map(|row| match self {
                PrognosticModel::Linear(m) => m.predict_row(row),
                PrognosticModel::Forest(m) => m.predict_row(row),
                PrognosticModel::Svr(m) => m.predict_row(row),
            })
            .collect())
    }
}

/// Versioned on-disk form of a fitted model and the columns it consumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    /// Model name such as `invasiveness`.
    pub name: String,
    /// Predictor columns, in the order the model consumes them.
    pub features: Vec<String>,
    pub model: PrognosticModel,
}

impl ModelDocument {
    pub fn new(name: impl Into<String>, features: Vec<String>, model: PrognosticModel) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            name: name.into(),
            features,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("model JSON: {e}")))?;
        if v.get("format").and_then(|f| f.as_str()) != Some(MODEL_FORMAT) {
            return Err(Error::Validation(format!("not a {MODEL_FORMAT} document")));
        }
        let version = v.get("version").and_then(|f| f.as_u64()).unwrap_or(0);
        if version != MODEL_VERSION as u64 {
            return Err(Error::UnsupportedFormat(format!(
                "model document version {version} (expected {MODEL_VERSION})"
            )));
        }
        let doc: Self = serde_json::from_value(v).map_err(|e| Error::Validation(format!("model JSON: {e}")))?;
        if doc.features.len() != doc.model.n_features() {
            return Err(Error::Validation(format!(
                "model lists {} features but was fitted on {}",
                doc.features.len(),
                doc.model.n_features()
            )));
        }
        Ok(doc)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
