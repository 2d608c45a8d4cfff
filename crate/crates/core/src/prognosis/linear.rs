use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::check_xy;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    /// Days per unit of each predictor.
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Ordinary least squares with an intercept, solved by SVD of the
/// column-equilibrated design.
pub fn fit_linear(x: &[Vec<f64>], y: &[f64]) -> Result<LinearModel> {
    let p = check_xy(x, y)?;
    let n = x.len();
    if n <= p {
        return Err(Error::SingularDesign(format!(
            "{n} samples cannot determine {p} slopes and an intercept"
        )));
    }
    let mut design = DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { x[r][c - 1] });
    let norms: Vec<f64> = (0..=p).map(|c| design.column(c).norm()).collect();
    for (c, &s) in norms.iter().enumerate() {
        if s == 0.0 {
            return Err(Error::SingularDesign(format!("predictor {} is identically zero", c - 1)));
        }
        design.column_mut(c).unscale_mut(s);
    }
    let svd = design.svd(true, true);
    let sv = &svd.singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    if !(lo > 1e-10 * hi) {
        return Err(Error::SingularDesign(format!(
            "design matrix is rank deficient (condition {:.3e})",
            hi / lo
        )));
    }
    let beta = svd
        .solve(&DVector::from_column_slice(y), 0.0)
        .map_err(|e| Error::SingularDesign(e.to_string()))?;
    let coef: Vec<f64> = beta.iter().zip(&norms).map(|(b, s)| b / s).collect();
    Ok(LinearModel {
        intercept: coef[0],
        coefficients: coef[1..].to_vec(),
    })
}
