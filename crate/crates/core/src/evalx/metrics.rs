use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_util::nan_as_null;

/// Class boundaries in days. Values equal to a threshold are intermediate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for Thresholds {
    /// 10 and 15 months at 30 days per month.
    fn default() -> Self {
        Self {
            low: 300.0,
            high: 450.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite() && self.low < self.high) {
            return Err(Error::Config(format!(
                "survival thresholds must satisfy low < high, got ({}, {})",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurvivalClass {
    Short,
    Intermediate,
    Long,
}

impl SurvivalClass {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Bins a survival time; negative days are rejected.
pub fn classify_survival(days: f64, th: &Thresholds) -> Result<SurvivalClass> {
    if !(days >= 0.0) {
        return Err(Error::Validation(format!("survival of {days} days is not a valid duration")));
    }
    Ok(bin(days, th))
}

/// Binning without validation, for predictions that may fall below zero.
fn bin(days: f64, th: &Thresholds) -> SurvivalClass {
    if days < th.low {
        SurvivalClass::Short
    } else if days > th.high {
        SurvivalClass::Long
    } else {
        SurvivalClass::Intermediate
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    pub mse: f64,
    /// Median squared error.
    pub mse_median: f64,
    /// NaN (null in JSON) when either side has no variance.
    #[serde(with = "nan_as_null")]
    pub spearman_rho: f64,
    #[serde(with = "nan_as_null")]
    pub pearson_r: f64,
    /// Rows are true class, columns predicted (short, intermediate, long).
    pub confusion: [[usize; 3]; 3],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Pearson correlation, or NaN when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return f64::NAN;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Accuracy over the three survival classes, MSE, median squared error and
/// both correlations.
pub fn metrics(pred: &[f64], truth: &[f64], th: &Thresholds) -> Result<Metrics> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::Validation(format!("metrics need at least 2 subjects, got {}", pred.len())));
    }
    compute(pred, truth, th)
}

/// [`metrics`] without the size check; a single subject gets NaN correlations.
pub(crate) fn compute(pred: &[f64], truth: &[f64], th: &Thresholds) -> Result<Metrics> {
    if let Some(v) = pred.iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("prediction {v} is not finite")));
    }
    th.validate()?;
    let n = pred.len();
    if n == 0 {
        return Err(Error::Validation("metrics need at least one subject".into()));
    }
    let mut confusion = [[0usize; 3]; 3];
    for (p, t) in pred.iter().zip(truth) {
        let tc = classify_survival(*t, th)?;
        confusion[tc.index()][bin(*p, th).index()] += 1;
    }
    let correct: usize = (0..3).map(|k| confusion[k][k]).sum();
    let sq: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).collect();
    let mse = sq.iter().sum::<f64>() / n as f64;
    let mut warnings = Vec::new();
    let (rho, r) = if n < 2 {
        (f64::NAN, f64::NAN)
    } else {
        (spearman(pred, truth), pearson(pred, truth))
    };
    if rho.is_nan() || r.is_nan() {
        warnings.push("correlation undefined: predictions or targets are constant".to_string());
    }
    Ok(Metrics {
        n,
        accuracy: correct as f64 / n as f64,
        mse,
        mse_median: median(sq),
        spearman_rho: rho,
        pearson_r: r,
        confusion,
        warnings,
    })
}
