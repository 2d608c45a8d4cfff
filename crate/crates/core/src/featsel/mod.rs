//! Correlation pruning and recursive feature elimination.

mod table;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalx::{derive_seed, kfold_assignment, pearson};
use crate::prognosis::{fit_forest, ForestModel, ForestParams};

pub use table::{FeatureTable, Resection, AGE, TABLE_SCHEMA_LINE};

/// Default RFE subset sizes.
pub const DEFAULT_SIZES: [usize; 9] = [2, 4, 6, 8, 10, 15, 20, 30, 50];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedPair {
    pub kept: String,
    pub removed: String,
    pub r: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub threshold: f64,
    pub removed_correlated: Vec<CorrelatedPair>,
    /// Zero-variance features: never removed, never correlated.
    pub constant_features: Vec<String>,
}

/// Greedy removal of one feature from every pair with `|r| > threshold`.
///
/// Pairs are visited in feature order. Of the two, the feature whose mean
/// absolute correlation with all other features is larger is dropped; on an
/// exact tie the later one goes.
pub fn prune_correlated(table: &FeatureTable, threshold: f64) -> Result<(FeatureTable, PruneReport)> {
    if table.n_rows() < 2 {
        return Err(Error::Validation(format!(
            "correlation pruning needs at least 2 subjects, got {}",
            table.n_rows()
        )));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("correlation threshold {threshold} outside [0, 1]")));
    }
    let p = table.n_features();
    let cols: Vec<Vec<f64>> = (0..p).map(|c| table.values.iter().map(|r| r[c]).collect()).collect();
    let constant: Vec<bool> = cols.iter().map(|c| c.iter().all(|v| *v == c[0])).collect();
    let mut r = vec![0.0; p * p];
    for i in 0..p {
        for j in i + 1..p {
            if !constant[i] && !constant[j] {
                let v = pearson(&cols[i], &cols[j]);
                r[i * p + j] = v;
                r[j * p + i] = v;
            }
        }
    }
    let others = (p.saturating_sub(1)).max(1) as f64;
    let mean_abs: Vec<f64> = (0..p).map(|i| (0..p).filter(|&j| j != i).map(|j| r[i * p + j].abs()).sum::<f64>() / others).collect();
    let mut active = vec![true; p];
    let mut removed = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            if !(active[i] && active[j]) || r[i * p + j].abs() <= threshold {
                continue;
            }
            let (keep, drop) = if mean_abs[i] > mean_abs[j] { (j, i) } else { (i, j) };
            active[drop] = false;
            removed.push(CorrelatedPair {
                kept: table.feature_names[keep].clone(),
                removed: table.feature_names[drop].clone(),
                r: r[i * p + j],
            });
        }
    }
    let kept: Vec<String> = (0..p).filter(|&i| active[i]).map(|i| table.feature_names[i].clone()).collect();
    let report = PruneReport {
        threshold,
        removed_correlated: removed,
        constant_features: (0..p).filter(|&i| constant[i]).map(|i| table.feature_names[i].clone()).collect(),
    };
    Ok((table.select_columns(&kept)?, report))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceKind {
    /// Mean decrease in squared error over all splits.
    #[default]
    Impurity,
    /// Increase in training MSE when one column is shuffled.
    Permutation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfeParams {
    pub correlation_threshold: f64,
    /// Candidate subset sizes; `None` means the default grid clipped to the
    /// feature count, plus the full set.
    pub sizes: Option<Vec<usize>>,
    pub folds: usize,
    pub forest: ForestParams,
    /// Drop one feature per refit instead of jumping between grid sizes.
    pub one_at_a_time: bool,
    pub importance: ImportanceKind,
    /// Sizes whose mean CV RMSE is within this many standard errors of the
    /// best count as tied; the smallest tied size wins. Zero means plain argmin.
    pub tie_se: f64,
}

impl Default for RfeParams {
    fn default() -> Self {
        Self {
            correlation_threshold: 0.95,
            sizes: None,
            folds: 5,
            forest: ForestParams {
                n_trees: 100,
                ..ForestParams::default()
            },
            one_at_a_time: false,
            importance: ImportanceKind::Impurity,
            tie_se: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    /// Share of the top feature's importance, in percent.
    pub importance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub size: usize,
    pub rmse: f64,
    /// Standard error of the per-fold RMSE.
    pub rmse_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub removed_correlated: Vec<CorrelatedPair>,
    pub constant_features: Vec<String>,
    /// Selected features, importance descending, top = 100.
    pub ranking: Vec<RankedFeature>,
    pub selected: Vec<String>,
    pub cv_curve: Vec<CvPoint>,
    pub optimal_size: usize,
}

impl SelectionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// One feature name per line, as read back by [`read_feature_list`].
    pub fn selected_list(&self) -> String {
        let mut s = self.selected.join("\n");
        s.push('\n');
        s
    }
}

pub fn read_feature_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let names: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect();
    if names.is_empty() {
        return Err(Error::Validation(format!("{} lists no features", path.display())));
    }
    Ok(names)
}

/// Descending candidate sizes for `p` features.
fn size_grid(params: &RfeParams, p: usize) -> Result<Vec<usize>> {
    let mut sizes = match &params.sizes {
        Some(s) => {
            if s.is_empty() {
                return Err(Error::Config("RFE needs at least one candidate size".into()));
            }
            if let Some(bad) = s.iter().find(|&&k| k > p || k == 0) {
                return Err(Error::Config(format!(
                    "RFE subset size {bad} is not in 1..={p} (feature count)"
                )));
            }
            s.clone()
        }
        None => DEFAULT_SIZES.iter().copied().filter(|&k| k < p).chain([p]).collect(),
    };
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes.dedup();
    Ok(sizes)
}

fn importances(
    model: &ForestModel,
    x: &[Vec<f64>],
    y: &[f64],
    kind: ImportanceKind,
    seed: u64,
) -> Vec<f64> {
    match kind {
        ImportanceKind::Impurity => model.importances.clone(),
        ImportanceKind::Permutation => {
            let mse = |rows: &[Vec<f64>]| {
                rows.iter().zip(y).map(|(r, t)| (model.predict_row(r) - t).powi(2)).sum::<f64>() / y.len() as f64
            };
            let base = mse(x);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..model.n_features)
                .map(|f| {
                    let mut col: Vec<f64> = x.iter().map(|r| r[f]).collect();
                    col.shuffle(&mut rng);
                    let shuffled: Vec<Vec<f64>> = x
                        .iter()
                        .zip(&col)
                        .map(|(r, v)| {
                            let mut r = r.clone();
                            r[f] = *v;
                            r
                        })
                        .collect();
                    (mse(&shuffled) - base).max(0.0)
                })
                .collect()
        }
    }
}

/// Features (as column indices into `x`) ordered by importance, stable on ties.
fn rank(imp: &[f64], cols: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cols.len()).collect();
    order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
    order.into_iter().map(|k| cols[k]).collect()
}

fn project(x: &[Vec<f64>], cols: &[usize]) -> Vec<Vec<f64>> {
    x.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect()
}

/// One elimination path through `sizes` (descending). Each fit ranks the
/// surviving columns for the next cut; `visit(size, columns, model)` sees the
/// model fitted at every grid size.
fn eliminate(
    x: &[Vec<f64>],
    y: &[f64],
    sizes: &[usize],
    params: &RfeParams,
    seed: u64,
    mut visit: impl FnMut(usize, &[usize], &ForestModel) -> Result<()>,
) -> Result<()> {
    let p = x[0].len();
    let mut step = 0u64;
    let mut fit = |cols: &[usize]| -> Result<(ForestModel, Vec<usize>)> {
        step += 1;
        let xs = project(x, cols);
        let s = derive_seed(seed, step);
        let m = fit_forest(&xs, y, &params.forest, s)?;
        let imp = importances(&m, &xs, y, params.importance, s);
        let order = rank(&imp, cols);
        Ok((m, order))
    };
    let mut cols: Vec<usize> = (0..p).collect();
    let mut current = fit(&cols)?;
    for &size in sizes {
        while cols.len() > size {
            let keep = if params.one_at_a_time { cols.len() - 1 } else { size };
            cols = current.1[..keep].to_vec();
            cols.sort_unstable();
            current = fit(&cols)?;
        }
        visit(size, &cols, &current.0)?;
    }
    Ok(())
}

/// Correlation pruning followed by cross-validated recursive feature
/// elimination with random-forest importances.
///
/// The chosen size is the smallest one whose mean CV RMSE lies within
/// `tie_se` standard errors of the best mean; the returned ranking comes from a final
/// elimination on all rows.
pub fn rfe_select(table: &FeatureTable, params: &RfeParams, seed: u64) -> Result<SelectionReport> {
    let (pruned, prune) = prune_correlated(table, params.correlation_threshold)?;
    let names = pruned.feature_names.clone();
    if names.is_empty() {
        return Err(Error::Config("no features left to select from".into()));
    }
    if !(params.tie_se >= 0.0) {
        return Err(Error::Config(format!("tie_se must be >= 0, got {}", params.tie_se)));
    }
    let p = names.len();
    let sizes = size_grid(params, p)?;
    let n = pruned.n_rows();
    if params.folds < 2 || params.folds > n {
        return Err(Error::Config(format!(
            "RFE needs 2 <= folds <= subjects, got {} folds for {n} subjects",
            params.folds
        )));
    }
    let x = pruned.design(&names)?;
    let y = pruned.targets()?;
    let fold_of = kfold_assignment(n, params.folds, derive_seed(seed, 0))?;

    // errors[f][s] = hold-out RMSE of fold f at sizes[s]
    let errors: Vec<Vec<f64>> = (0..params.folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let mut out = Vec::with_capacity(sizes.len());
            eliminate(&xt, &yt, &sizes, params, derive_seed(seed, 1 + f as u64), |_, cols, m| {
                let se: f64 = test
                    .iter()
                    .map(|&i| {
                        let row: Vec<f64> = cols.iter().map(|&c| x[i][c]).collect();
                        (m.predict_row(&row) - y[i]).powi(2)
                    })
                    .sum();
                out.push((se / test.len() as f64).sqrt());
                Ok(())
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let k = params.folds as f64;
    let cv_curve: Vec<CvPoint> = sizes
        .iter()
        .enumerate()
        .map(|(s, &size)| {
            let v: Vec<f64> = errors.iter().map(|e| e[s]).collect();
            let mean = v.iter().sum::<f64>() / k;
            let var = v.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0);
            CvPoint {
                size,
                rmse: mean,
                rmse_se: (var / k).sqrt(),
            }
        })
        .rev()
        .collect();
    let best = cv_curve
        .iter()
        .min_by(|a, b| a.rmse.total_cmp(&b.rmse).then(a.size.cmp(&b.size)))
        .expect("nonempty grid");
    let optimal_size = cv_curve
        .iter()
        .find(|c| c.rmse <= best.rmse + params.tie_se * best.rmse_se)
        .map_or(best.size, |c| c.size);

    let final_sizes: Vec<usize> = sizes.iter().copied().filter(|&s| s >= optimal_size).collect();
    let mut ranking = Vec::new();
    eliminate(&x, &y, &final_sizes, params, derive_seed(seed, u64::MAX), |size, cols, m| {
        if size == optimal_size {
            let imp = importances(m, &project(&x, cols), &y, params.importance, derive_seed(seed, u64::MAX - 1));
            let top = imp.iter().copied().fold(0.0, f64::max);
            let mut r: Vec<RankedFeature> = cols
                .iter()
                .zip(&imp)
                .map(|(&c, &v)| RankedFeature {
                    name: names[c].clone(),
                    importance: if top > 0.0 { 100.0 * v / top } else { 0.0 },
                })
                .collect();
            r.sort_by(|a, b| b.importance.total_cmp(&a.importance));
            if let Some(first) = r.first_mut().filter(|_| top > 0.0) {
                first.importance = 100.0;
            }
            ranking = r;
        }
        Ok(())
    })?;
    let selected = ranking.iter().map(|r| r.name.clone()).collect();
    Ok(SelectionReport {
        removed_correlated: prune.removed_correlated,
        constant_features: prune.constant_features,
        ranking,
        selected,
        cv_curve,
        optimal_size,
    })
}
