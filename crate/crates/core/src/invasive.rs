//! Minimum-volume enclosing ellipsoid and the relative invasiveness
//! coefficient (RIC).
//!
//! The ellipsoid is fitted with Khachiyan's barycentric coordinate ascent.
//! The RIC of a structure map is the second-longest semi-axis of the tumour
//! core ellipsoid divided by that of the whole tumour ellipsoid, both fitted
//! to boundary-voxel centres in millimetres.

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgvol::{LabelVolume, Mask, RoiKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MveParams {
    /// Stop once `max_i M_i - 4 <= tol`.
    pub tol: f64,
    /// Accepted slack in `(p - c)^T A (p - c) <= 1 + tol_contain`.
    pub tol_contain: f64,
    pub max_iter: usize,
}

impl Default for MveParams {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            tol_contain: 1e-2,
            max_iter: 100_000,
        }
    }
}

/// `{x : (x - center)^T shape_matrix (x - center) <= 1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    /// Descending.
    pub semi_axes: [f64; 3],
    /// Row-major 3x3; column `k` is the direction of `semi_axes[k]`.
    pub orientation: [[f64; 3]; 3],
    pub shape_matrix: [[f64; 3]; 3],
    pub iterations: usize,
    /// `max_i M_i - 4` at termination.
    pub residual: f64,
}

impl Ellipsoid {
    /// Quadratic form `(p - c)^T A (p - c)`; at most 1 inside the ellipsoid.
    pub fn level(&self, p: [f64; 3]) -> f64 {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        let a = &self.shape_matrix;
        let mut s = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                s += d[r] * a[r][c] * d[c];
            }
        }
        s
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.semi_axes.iter().product::<f64>()
    }

    /// Axis `k` as a unit vector.
    pub fn axis(&self, k: usize) -> [f64; 3] {
        [
            self.orientation[0][k],
            self.orientation[1][k],
            self.orientation[2][k],
        ]
    }

    fn from_shape(center: [f64; 3], shape: Matrix3<f64>, iterations: usize, residual: f64) -> Result<Self> {
        let eig = SymmetricEigen::new(shape);
        let mut order: Vec<usize> = (0..3).collect();
        // smallest eigenvalue = longest semi-axis
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut semi_axes = [0.0; 3];
        let mut orientation = [[0.0; 3]; 3];
        for (k, &e) in order.iter().enumerate() {
            let lambda = eig.eigenvalues[e];
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::Degenerate(format!(
                    "ellipsoid shape matrix not positive definite (eigenvalue {lambda:e})"
                )));
            }
            semi_axes[k] = 1.0 / lambda.sqrt();
            for r in 0..3 {
                orientation[r][k] = eig.eigenvectors[(r, e)];
            }
        }
        let mut shape_matrix = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                shape_matrix[r][c] = shape[(r, c)];
            }
        }
        Ok(Self {
            center,
            semi_axes,
            orientation,
            shape_matrix,
            iterations,
            residual,
        })
    }
}

fn check_affine_span(points: &[[f64; 3]]) -> Result<()> {
    if points.len() < 4 {
        return Err(Error::Degenerate(format!(
            "minimum-volume ellipsoid needs >= 4 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mut mean = [0.0; 3];
    for p in points {
        for a in 0..3 {
            mean[a] += p[a] / n;
        }
    }
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        for r in 0..3 {
            for c in 0..3 {
                cov[(r, c)] += (p[r] - mean[r]) * (p[c] - mean[c]) / n;
            }
        }
    }
    let ev = SymmetricEigen::new(cov).eigenvalues;
    let max = ev.max();
    let min = ev.min();
    if !(max > 0.0) || min <= 1e-10 * max {
        return Err(Error::Degenerate(format!(
            "point set is not full-dimensional (covariance eigenvalues {:.3e}..{:.3e})",
            min, max
        )));
    }
    Ok(())
}

/// Mean and RMS distance from it.
fn normalisation(points: &[[f64; 3]]) -> ([f64; 3], f64) {
    let n = points.len() as f64;
    let mut mean = [0.0; 3];
    for p in points {
        for a in 0..3 {
            mean[a] += p[a];
        }
    }
    mean = mean.map(|m| m / n);
    let ss: f64 = points
        .iter()
        .map(|p| (0..3).map(|a| (p[a] - mean[a]).powi(2)).sum::<f64>())
        .sum();
    (mean, (ss / n).sqrt())
}

fn lifted(p: &[f64; 3]) -> Vector4<f64> {
    Vector4::new(p[0], p[1], p[2], 1.0)
}

fn invert(x: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    x.try_inverse()
        .ok_or_else(|| Error::Degenerate("moment matrix became singular".into()))
}

fn exact_scores(points: &[[f64; 3]], u: &[f64]) -> Result<(Matrix4<f64>, Vec<f64>)> {
    let mut x = Matrix4::<f64>::zeros();
    for (p, &w) in points.iter().zip(u) {
        let q = lifted(p);
        x += w * q * q.transpose();
    }
    let xi = invert(&x)?;
    let m = points
        .iter()
        .map(|p| {
            let q = lifted(p);
            q.dot(&(xi * q))
        })
        .collect();
    Ok((xi, m))
}

/// Khachiyan's algorithm for the minimum-volume ellipsoid enclosing `points`.
///
/// Each step moves weight toward the point with the largest lifted
/// Mahalanobis score `M_j`; the inverse moment matrix and all scores are
/// updated with a rank-one formula and refreshed exactly every 64 steps.
///
/// Points are centred and rescaled first and near-equal scores are broken by
/// input order, so rigid motions and uniform scalings of the input follow the
/// same iteration path and give the same ellipsoid up to rounding.
pub fn min_volume_ellipsoid(points: &[[f64; 3]], params: &MveParams) -> Result<Ellipsoid> {
    check_affine_span(points)?;
    const D: f64 = 3.0;
    // relative window inside which two scores count as tied
    const TIE: f64 = 1e-10;
    let n = points.len();
    let (mean, scale) = normalisation(points);
    let pts: Vec<[f64; 3]> = points
        .iter()
        .map(|p| [(p[0] - mean[0]) / scale, (p[1] - mean[1]) / scale, (p[2] - mean[2]) / scale])
        .collect();
    let mut u = vec![1.0 / n as f64; n];
    let (mut xi, mut m) = exact_scores(&pts, &u)?;
    let mut iterations = 0;
    let mut residual;
    loop {
        let top = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let j = m.iter().position(|&v| v >= top - TIE * top).unwrap_or(0);
        let mj = m[j];
        residual = top - (D + 1.0);
        if residual <= params.tol {
            break;
        }
        if iterations >= params.max_iter {
            return Err(Error::IterationLimit {
                iterations,
                residual,
            });
        }
        let step = (mj - (D + 1.0)) / ((D + 1.0) * (mj - 1.0));
        for w in &mut u {
            *w *= 1.0 - step;
        }
        u[j] += step;
        iterations += 1;

        if iterations % 64 == 0 {
            (xi, m) = exact_scores(&pts, &u)?;
            continue;
        }
        // (a X + b q q^T)^-1 with a = 1 - step, b = step
        let ratio = step / (1.0 - step);
        let beta = ratio / (1.0 + ratio * mj);
        let qj = lifted(&pts[j]);
        let w = xi * qj;
        xi = (xi - beta * w * w.transpose()) / (1.0 - step);
        for (p, mi) in pts.iter().zip(m.iter_mut()) {
            let t = lifted(p).dot(&w);
            *mi = (*mi - beta * t * t) / (1.0 - step);
        }
    }

    let mut cn = [0.0; 3];
    for (p, &w) in pts.iter().zip(&u) {
        for a in 0..3 {
            cn[a] += w * p[a];
        }
    }
    let mut scatter = Matrix3::<f64>::zeros();
    for (p, &w) in pts.iter().zip(&u) {
        let d = nalgebra::Vector3::new(p[0] - cn[0], p[1] - cn[1], p[2] - cn[2]);
        scatter += w * d * d.transpose();
    }
    let shape = scatter
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("weighted scatter matrix is singular".into()))?
        / (D * scale * scale);
    let shape = (shape + shape.transpose()) * 0.5;
    let c = [0, 1, 2].map(|a| mean[a] + scale * cn[a]);
    let e = Ellipsoid::from_shape(c, shape, iterations, residual)?;

    let worst = points.iter().map(|&p| e.level(p)).fold(0.0, f64::max);
    if worst > 1.0 + params.tol_contain {
        return Err(Error::Degenerate(format!(
            "fitted ellipsoid misses input points (max level {worst:.4})"
        )));
    }
    Ok(e)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RicValue {
    pub ric: f64,
    pub wt_ellipsoid: Ellipsoid,
    pub tc_ellipsoid: Ellipsoid,
}

/// Ellipsoid fitted to the boundary-voxel centres of a mask.
pub fn mask_ellipsoid(mask: &Mask, params: &MveParams) -> Result<Ellipsoid> {
    if mask.is_empty() {
        return Err(Error::EmptyRoi(format!("{} mask has no voxels", mask.kind())));
    }
    min_volume_ellipsoid(&mask.boundary_points(), params).map_err(|e| match e {
        Error::Degenerate(msg) => Error::Degenerate(format!("{} ROI: {msg}", mask.kind())),
        other => other,
    })
}

pub fn ric(vol: &LabelVolume, params: &MveParams) -> Result<RicValue> {
    let wt = mask_ellipsoid(&vol.roi_mask(RoiKind::WT), params)?;
    let tc = mask_ellipsoid(&vol.roi_mask(RoiKind::TC), params)?;
    Ok(RicValue {
        ric: tc.semi_axes[1] / wt.semi_axes[1],
        wt_ellipsoid: wt,
        tc_ellipsoid: tc,
    })
}
