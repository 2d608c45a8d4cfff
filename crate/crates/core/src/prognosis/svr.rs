use serde::{Deserialize, Serialize};

use super::check_xy;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrParams {
    pub kernel: KernelKind,
    /// RBF width; `None` means `1 / (p * var(X))` on the standardised inputs.
    pub gamma: Option<f64>,
    pub c: f64,
    /// Tube half-width in target units (days).
    pub epsilon: f64,
    /// Stop once the maximal KKT violation `m - M` drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            gamma: None,
            c: 100.0,
            epsilon: 30.0,
            tol: 1e-6,
            max_iter: 10_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Rbf { gamma: f64 },
    Linear,
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub kernel: Kernel,
    pub c: f64,
    pub epsilon: f64,
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
    /// Standardised inputs of the support vectors.
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i - alpha_i^*` per support vector, each within `[-C, C]`.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    /// Dual objective `1/2 b^T Q b + p^T b` at the solution.
    pub objective: f64,
    /// Final `m - M` gap.
    pub kkt_violation: f64,
    pub iterations: usize,
}

impl SvrModel {
    pub fn n_features(&self) -> usize {
        self.x_mean.len()
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.x_mean.iter().zip(&self.x_sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let z = self.standardize(x);
        self.bias
            + self
                .support_vectors
                .iter()
                .zip(&self.dual_coef)
                .map(|(sv, b)| b * self.kernel.eval(sv, &z))
                .sum::<f64>()
    }
}

/// Population mean and standard deviation per column; constant columns get sd 1.
pub fn column_stats(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let p = x.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; p];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut sd = vec![0.0; p];
    for row in x {
        for ((s, v), m) in sd.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut sd {
        *s = (*s / n).sqrt();
        if !(*s > 0.0) {
            *s = 1.0;
        }
    }
    (mean, sd)
}

/// Problem in LIBSVM's 2n-variable form:
/// `min 1/2 b^T Q b + p^T b` s.t. `z^T b = 0`, `0 <= b <= C`,
/// with `b = [alpha; alpha*]`, `z = [+1; -1]`, `p = [eps - y; eps + y]`.
pub struct DualProblem {
    pub kernel: Vec<f64>,
    pub n: usize,
    pub p: Vec<f64>,
    pub c: f64,
}

impl DualProblem {
    pub fn new(kernel: Vec<f64>, y: &[f64], epsilon: f64, c: f64) -> Self {
        let n = y.len();
        let p = y.iter().map(|v| epsilon - v).chain(y.iter().map(|v| epsilon + v)).collect();
        Self { kernel, n, p, c }
    }

    pub fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    pub fn q(&self, s: usize, t: usize) -> f64 {
        self.sign(s) * self.sign(t) * self.kernel[(s % self.n) * self.n + t % self.n]
    }

    pub fn objective(&self, b: &[f64]) -> f64 {
        let l = 2 * self.n;
        let mut obj = 0.0;
        for s in 0..l {
            if b[s] == 0.0 {
                continue;
            }
            let qb: f64 = (0..l).map(|t| self.q(s, t) * b[t]).sum();
            obj += b[s] * (0.5 * qb + self.p[s]);
        }
        obj
    }
}

pub struct DualSolution {
    pub beta: Vec<f64>,
    pub gradient: Vec<f64>,
    pub violation: f64,
    pub iterations: usize,
}

const TAU: f64 = 1e-12;

/// SMO with second-order working-set selection (Fan, Chen and Lin).
pub fn solve_dual(prob: &DualProblem, tol: f64, max_iter: usize) -> Result<DualSolution> {
    let l = 2 * prob.n;
    let c = prob.c;
    let mut a = vec![0.0; l];
    let mut g = prob.p.clone();
    let qd: Vec<f64> = (0..l).map(|t| prob.q(t, t)).collect();
    let mut qi = vec![0.0; l];
    let mut qj = vec![0.0; l];
    let mut iterations = 0;
    loop {
        let ys = |t: usize| prob.sign(t);
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..l {
            if ys(t) > 0.0 {
                if a[t] < c && -g[t] >= gmax {
                    gmax = -g[t];
                    i = t;
                }
            } else if a[t] > 0.0 && g[t] >= gmax {
                gmax = g[t];
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i != usize::MAX {
            for (t, q) in qi.iter_mut().enumerate() {
                *q = prob.q(i, t);
            }
        }
        for t in 0..l {
            if ys(t) > 0.0 {
                if a[t] > 0.0 {
                    let diff = gmax + g[t];
                    if g[t] >= gmax2 {
                        gmax2 = g[t];
                    }
                    if diff > 0.0 && i != usize::MAX {
                        let quad = qd[i] + qd[t] - 2.0 * ys(i) * qi[t];
                        let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= obj_min {
                            j = t;
                            obj_min = obj;
                        }
                    }
                }
            } else if a[t] < c {
                let diff = gmax - g[t];
                if -g[t] >= gmax2 {
                    gmax2 = -g[t];
                }
                if diff > 0.0 && i != usize::MAX {
                    let quad = qd[i] + qd[t] + 2.0 * ys(i) * qi[t];
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        j = t;
                        obj_min = obj;
                    }
                }
            }
        }
        let violation = gmax + gmax2;
        if violation < tol || j == usize::MAX {
            return Ok(DualSolution {
                beta: a,
                gradient: g,
                violation: violation.max(0.0),
                iterations,
            });
        }
        if iterations >= max_iter {
            return Err(Error::IterationLimit {
                iterations,
                residual: violation,
            });
        }
        iterations += 1;

        for (t, q) in qj.iter_mut().enumerate() {
            *q = prob.q(j, t);
        }
        let (old_i, old_j) = (a[i], a[j]);
        if ys(i) != ys(j) {
            let mut quad = qd[i] + qd[j] + 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-g[i] - g[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > 0.0 {
                if a[i] > c {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if a[j] > c {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            let mut quad = qd[i] + qd[j] - 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (g[i] - g[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > c {
                if a[i] > c {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > c {
                if a[j] > c {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        let (di, dj) = (a[i] - old_i, a[j] - old_j);
        for t in 0..l {
            g[t] += qi[t] * di + qj[t] * dj;
        }
    }
}

/// Fits an epsilon-SVR on standardised inputs; targets stay in days.
pub fn fit_svr(x: &[Vec<f64>], y: &[f64], params: &SvrParams) -> Result<SvrModel> {
    let p = check_xy(x, y)?;
    let n = x.len();
    if n < 2 {
        return Err(Error::Validation(format!("SVR needs at least 2 samples, got {n}")));
    }
    if !(params.c > 0.0) || !(params.epsilon >= 0.0) || !(params.tol > 0.0) {
        return Err(Error::Config(format!(
            "SVR needs C > 0, epsilon >= 0 and tol > 0 (got {}, {}, {})",
            params.c, params.epsilon, params.tol
        )));
    }
    let (x_mean, x_sd) = column_stats(x);
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|row| row.iter().zip(x_mean.iter().zip(&x_sd)).map(|(v, (m, s))| (v - m) / s).collect())
        .collect();
    let kernel = match params.kernel {
        KernelKind::Linear => Kernel::Linear,
        KernelKind::Rbf => {
            let gamma = match params.gamma {
                Some(g) => g,
                None => {
                    let all: Vec<f64> = z.iter().flatten().copied().collect();
                    let m = all.iter().sum::<f64>() / all.len() as f64;
                    let var = all.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / all.len() as f64;
                    if var > 0.0 {
                        1.0 / (p as f64 * var)
                    } else {
                        1.0
                    }
                }
            };
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::Config(format!("RBF gamma must be positive, got {gamma}")));
            }
            Kernel::Rbf { gamma }
        }
    };
    let mut k = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..=r {
            let v = kernel.eval(&z[r], &z[c]);
            k[r * n + c] = v;
            k[c * n + r] = v;
        }
    }
    let prob = DualProblem::new(k, y, params.epsilon, params.c);
    let sol = solve_dual(&prob, params.tol, params.max_iter)?;
    let objective = 0.5
        * sol
            .beta
            .iter()
            .zip(sol.gradient.iter().zip(&prob.p))
            .map(|(b, (g, pp))| b * (g + pp))
            .sum::<f64>();

    let dual: Vec<f64> = (0..n).map(|i| sol.beta[i] - sol.beta[n + i]).collect();
    let bias = if dual.iter().all(|&d| d == 0.0) {
        // No support vectors: any bias in [max y - eps, min y + eps] is
        // optimal; take the mean of y clamped into that interval.
        let mean = y.iter().sum::<f64>() / n as f64;
        let hi = y.iter().copied().fold(f64::INFINITY, f64::min) + params.epsilon;
        let lo = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - params.epsilon;
        mean.clamp(lo.min(hi), hi.max(lo))
    } else {
        -rho(&prob, &sol)
    };
    let (support_vectors, dual_coef): (Vec<Vec<f64>>, Vec<f64>) = z
        .into_iter()
        .zip(dual)
        .filter(|(_, d)| *d != 0.0)
        .unzip();
    Ok(SvrModel {
        kernel,
        c: params.c,
        epsilon: params.epsilon,
        x_mean,
        x_sd,
        support_vectors,
        dual_coef,
        bias,
        objective,
        kkt_violation: sol.violation,
        iterations: sol.iterations,
    })
}

fn rho(prob: &DualProblem, sol: &DualSolution) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for (t, (&b, &g)) in sol.beta.iter().zip(&sol.gradient).enumerate() {
        let s = prob.sign(t);
        let yg = s * g;
        if b >= prob.c {
            if s < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if b <= 0.0 {
            if s > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
