use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::check_xy;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means `ceil(p / 3)`.
    pub mtry: Option<usize>,
    /// Minimum (bootstrap-weighted) sample count in a leaf.
    pub min_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_leaf: 5,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1))
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Split feature, or `u32::MAX` for a leaf.
    pub feature: u32,
    /// Rows with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Mean target of the training samples reaching the node.
    pub value: f64,
    /// Bootstrap-weighted sample count.
    pub weight: u32,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut k = 0usize;
        loop {
            let n = &self.nodes[k];
            if n.is_leaf() {
                return n.value;
            }
            k = if x[n.feature as usize] <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub mtry: usize,
    pub seed: u64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Mean decrease in squared error per feature, summing to 1 unless no
    /// split was ever made.
    pub importances: Vec<f64>,
}

impl ForestModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Column-major copy of the training data with per-feature dense ranks.
struct Columns {
    n: usize,
    values: Vec<f64>,
    ranks: Vec<u32>,
}

impl Columns {
    fn new(x: &[Vec<f64>], p: usize) -> Self {
        let n = x.len();
        let mut values = vec![0.0; n * p];
        let mut ranks = vec![0u32; n * p];
        let mut order: Vec<usize> = (0..n).collect();
        for f in 0..p {
            let col = &mut values[f * n..(f + 1) * n];
            for (r, row) in x.iter().enumerate() {
                col[r] = row[f];
            }
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let mut rank = 0u32;
            for (k, &r) in order.iter().enumerate() {
                if k > 0 && col[r] != col[order[k - 1]] {
                    rank += 1;
                }
                ranks[f * n + r] = rank;
            }
        }
        Self { n, values, ranks }
    }

    fn value(&self, f: usize, r: u32) -> f64 {
        self.values[f * self.n + r as usize]
    }

    fn rank(&self, f: usize, r: u32) -> u32 {
        self.ranks[f * self.n + r as usize]
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    /// Number of members (in sorted order) going left.
    left_len: usize,
    gain: f64,
}

struct Grower<'a> {
    cols: &'a Columns,
    y: &'a [f64],
    weight: Vec<u32>,
    p: usize,
    mtry: usize,
    min_leaf: u32,
    importance: Vec<f64>,
    nodes: Vec<Node>,
    features: Vec<usize>,
}

impl Grower<'_> {
    fn node_stats(&self, members: &[u32]) -> (u32, f64, f64) {
        let (mut w, mut s, mut ss) = (0u32, 0.0, 0.0);
        for &r in members {
            let k = self.weight[r as usize];
            let yv = self.y[r as usize];
            w += k;
            s += k as f64 * yv;
            ss += k as f64 * yv * yv;
        }
        (w, s, ss)
    }

    fn best_split(&mut self, members: &mut [u32], w: u32, s: f64, rng: &mut ChaCha8Rng) -> Option<Split> {
        let parent = s * s / w as f64;
        let mut best: Option<Split> = None;
        // partial Fisher-Yates draw of mtry distinct features
        for k in 0..self.mtry {
            let pick = rng.random_range(k..self.p);
            self.features.swap(k, pick);
            let f = self.features[k];
            let cols = self.cols;
            members.sort_unstable_by_key(|&r| (cols.rank(f, r), r));
            let (mut wl, mut sl) = (0u32, 0.0);
            for i in 0..members.len() - 1 {
                let r = members[i];
                let kw = self.weight[r as usize];
                wl += kw;
                sl += kw as f64 * self.y[r as usize];
                let next = members[i + 1];
                if cols.rank(f, r) == cols.rank(f, next) {
                    continue;
                }
                let wr = w - wl;
                if wl < self.min_leaf || wr < self.min_leaf {
                    continue;
                }
                let sr = s - sl;
                let gain = sl * sl / wl as f64 + sr * sr / wr as f64 - parent;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let (a, b) = (cols.value(f, r), cols.value(f, next));
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        left_len: i + 1,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, members: &mut [u32], rng: &mut ChaCha8Rng) -> u32 {
        let (w, s, ss) = self.node_stats(members);
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value: s / w as f64,
            weight: w,
        });
        let sse = ss - s * s / w as f64;
        if w < 2 * self.min_leaf || members.len() < 2 || sse <= 1e-12 * ss.abs().max(1.0) {
            return id;
        }
        let Some(split) = self.best_split(members, w, s, rng) else {
            return id;
        };
        if !(split.gain > 0.0) {
            return id;
        }
        let f = split.feature;
        let cols = self.cols;
        members.sort_unstable_by_key(|&r| (cols.rank(f, r), r));
        self.importance[f] += split.gain;
        let (l, r) = members.split_at_mut(split.left_len);
        let left = self.grow(l, rng);
        let right = self.grow(r, rng);
        let node = &mut self.nodes[id as usize];
        node.feature = f as u32;
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        id
    }
}

/// Stream of tree `t` for forest seed `seed`.
pub fn tree_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

/// Bagged regression trees with variance-reduction splits over `mtry`
/// random features per node. Trees grow in parallel but each draws from its
/// own seed stream, so the result does not depend on the thread count.
pub fn fit_forest(x: &[Vec<f64>], y: &[f64], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    let p = check_xy(x, y)?;
    let n = x.len();
    if params.n_trees == 0 {
        return Err(Error::Config("n_trees must be at least 1".into()));
    }
    if params.min_leaf == 0 {
        return Err(Error::Config("min_leaf must be at least 1".into()));
    }
    if n < 2 * params.min_leaf {
        return Err(Error::Validation(format!(
            "random forest needs at least {} samples for min_leaf {}, got {n}",
            2 * params.min_leaf,
            params.min_leaf
        )));
    }
    if p == 0 {
        return Err(Error::Shape("random forest needs at least one predictor".into()));
    }
    let mtry = params.resolved_mtry(p);
    let cols = Columns::new(x, p);
    let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let mut weight = vec![0u32; n];
            if params.bootstrap {
                for _ in 0..n {
                    weight[rng.random_range(0..n)] += 1;
                }
            } else {
                weight.fill(1);
            }
            let mut members: Vec<u32> = (0..n as u32).filter(|&r| weight[r as usize] > 0).collect();
            let mut g = Grower {
                cols: &cols,
                y,
                weight,
                p,
                mtry,
                min_leaf: params.min_leaf as u32,
                importance: vec![0.0; p],
                nodes: Vec::new(),
                features: (0..p).collect(),
            };
            g.grow(&mut members, &mut rng);
            (Tree { nodes: g.nodes }, g.importance)
        })
        .collect();
    let mut importances = vec![0.0; p];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, imp) in grown {
        for (a, b) in importances.iter_mut().zip(imp) {
            *a += b;
        }
        trees.push(tree);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    Ok(ForestModel {
        params: *params,
        mtry,
        seed,
        n_features: p,
        trees,
        importances,
    })
}
