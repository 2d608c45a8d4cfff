//! Independent references for the regression models: least squares through
//! Gaussian elimination on the normal equations, and the epsilon-SVR dual
//! solved by accelerated projected gradient.

#![allow(dead_code)]

/// Intercept followed by slopes.
pub fn ols(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len() + 1;
    let row = |r: usize| std::iter::once(1.0).chain(x[r].iter().copied()).collect::<Vec<f64>>();
    let mut a = vec![vec![0.0; p + 1]; p];
    for r in 0..x.len() {
        let v = row(r);
        for i in 0..p {
            for j in 0..p {
                a[i][j] += v[i] * v[j];
            }
            a[i][p] += v[i] * y[r];
        }
    }
    // Gauss-Jordan with partial pivoting
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..p {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

pub struct SvrOracle {
    pub k: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub eps: f64,
    pub c: f64,
}

impl SvrOracle {
    /// Standardises columns (population sd) and builds the RBF kernel with
    /// gamma = 1 / (p * var(all standardised entries)).
    pub fn rbf(x: &[Vec<f64>], y: &[f64], eps: f64, c: f64) -> Self {
        let n = x.len();
        let p = x[0].len();
        let mut z = vec![vec![0.0; p]; n];
        for f in 0..p {
            let m = x.iter().map(|r| r[f]).sum::<f64>() / n as f64;
            let sd = (x.iter().map(|r| (r[f] - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            for r in 0..n {
                z[r][f] = (x[r][f] - m) / sd;
            }
        }
        let all: Vec<f64> = z.iter().flatten().copied().collect();
        let m = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|v| (v - m).powi(2)).sum::<f64>() / all.len() as f64;
        let gamma = 1.0 / (p as f64 * var);
        let k = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let d2: f64 = (0..p).map(|f| (z[i][f] - z[j][f]).powi(2)).sum();
                        (-gamma * d2).exp()
                    })
                    .collect()
            })
            .collect();
        Self { k, y: y.to_vec(), eps, c }
    }

    /// `1/2 d^T K d + eps * sum(a + a*) - y^T d` with `d = a - a*`.
    pub fn objective(&self, a: &[f64], s: &[f64]) -> f64 {
        let n = self.y.len();
        let d: Vec<f64> = (0..n).map(|i| a[i] - s[i]).collect();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += d[i] * self.k[i][j] * d[j];
            }
        }
        0.5 * quad + self.eps * (a.iter().sum::<f64>() + s.iter().sum::<f64>())
            - (0..n).map(|i| self.y[i] * d[i]).sum::<f64>()
    }

    /// Objective at a difference vector `d`, splitting it into `a = d+`, `a* = d-`.
    pub fn objective_of_difference(&self, d: &[f64]) -> f64 {
        let a: Vec<f64> = d.iter().map(|v| v.max(0.0)).collect();
        let s: Vec<f64> = d.iter().map(|v| (-v).max(0.0)).collect();
        self.objective(&a, &s)
    }

    /// Euclidean projection onto `{0 <= a, a* <= C, sum a = sum a*}`.
    ///
    /// The projection is `clip(va - lam)`, `clip(vs + lam)` for the root `lam`
    /// of a decreasing piecewise-linear function, found by Newton steps kept
    /// inside a bisection bracket and warm-started from `lam0`.
    fn project(&self, va: &mut [f64], vs: &mut [f64], lam0: f64) -> f64 {
        let c = self.c;
        let eval = |lam: f64| {
            let (mut h, mut slope) = (0.0, 0.0);
            for v in va.iter() {
                let t = v - lam;
                h += t.clamp(0.0, c);
                if t > 0.0 && t < c {
                    slope -= 1.0;
                }
            }
            for v in vs.iter() {
                let t = v + lam;
                h -= t.clamp(0.0, c);
                if t > 0.0 && t < c {
                    slope -= 1.0;
                }
            }
            (h, slope)
        };
        let span = va.iter().chain(vs.iter()).fold(0.0f64, |m, v| m.max(v.abs())) + c + 1.0;
        let (mut lo, mut hi) = (-span, span);
        let mut lam = lam0.clamp(lo, hi);
        for _ in 0..200 {
            let (h, slope) = eval(lam);
            if h == 0.0 {
                break;
            }
            if h > 0.0 {
                lo = lam;
            } else {
                hi = lam;
            }
            if hi - lo <= 1e-15 * span {
                break;
            }
            let newton = if slope < 0.0 { lam - h / slope } else { f64::NAN };
            lam = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        va.iter_mut().for_each(|v| *v = (*v - lam).clamp(0.0, c));
        vs.iter_mut().for_each(|v| *v = (*v + lam).clamp(0.0, c));
        lam
    }

    fn lipschitz(&self) -> f64 {
        let n = self.y.len();
        let mut v = vec![1.0; n];
        let mut lam = 0.0;
        for _ in 0..500 {
            let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| self.k[i][j] * v[j]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            lam = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.iter().map(|x| x / norm).collect();
        }
        // Hessian in (a, a*) is [[K, -K], [-K, K]] with top eigenvalue 2 * lambda_max(K).
        2.0 * lam * 1.01
    }

    /// FISTA with function-value restart, at most `max_iter` steps.
    /// Returns the minimum objective and the final difference vector.
    pub fn solve(&self, max_iter: usize) -> (f64, Vec<f64>) {
        let mut lam = 0.0;
        let n = self.y.len();
        let step = 1.0 / self.lipschitz();
        let (mut a, mut s) = (vec![0.0; n], vec![0.0; n]);
        let (mut ya, mut ys) = (a.clone(), s.clone());
        let mut t = 1.0f64;
        let mut f_prev = self.objective(&a, &s);
        let mut f_check = f_prev;
        for it in 1..=max_iter {
            let d: Vec<f64> = (0..n).map(|i| ya[i] - ys[i]).collect();
            let kd: Vec<f64> = (0..n).map(|i| (0..n).map(|j| self.k[i][j] * d[j]).sum()).collect();
            let mut na: Vec<f64> = (0..n).map(|i| ya[i] - step * (kd[i] + self.eps - self.y[i])).collect();
            let mut ns: Vec<f64> = (0..n).map(|i| ys[i] - step * (-kd[i] + self.eps + self.y[i])).collect();
            lam = self.project(&mut na, &mut ns, lam);
            let f = self.objective(&na, &ns);
            if f > f_prev {
                // restart momentum
                t = 1.0;
                ya = a.clone();
                ys = s.clone();
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            for i in 0..n {
                ya[i] = na[i] + mom * (na[i] - a[i]);
                ys[i] = ns[i] + mom * (ns[i] - s[i]);
            }
            a = na;
            s = ns;
            t = t_next;
            f_prev = f;
            if it % 2000 == 0 {
                if (f_check - f).abs() <= 1e-14 * f.abs().max(1.0) {
                    break;
                }
                f_check = f;
            }
        }
        let d = (0..n).map(|i| a[i] - s[i]).collect();
        (f_prev, d)
    }
}
