//! Quantile regression forest for the censoring time.
//!
//! Each tree is grown by CART variance splitting on a bootstrap resample of
//! the training fold, trying `mtry` random features per node. Once grown,
//! every *original* training unit is routed through the tree and stored in
//! its leaf, so each training index sits in exactly one leaf per tree.
//!
//! The conditional distribution of `C` at `x` puts weight
//! `(1/T) * sum_t 1{i in leaf_t(x)} / |leaf_t(x)|` on training unit `i`.

use std::sync::OnceLock;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::quantile::MASS_TOLERANCE;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// `None` grows until leaves cannot be split further.
    pub max_depth: Option<usize>,
    /// Features tried per split; `None` means `ceil(p / 3)`.
    pub mtry: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            min_leaf: 10,
            max_depth: None,
            mtry: None,
        }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { members: Vec<u32> },
}

/// A regression tree stored as a node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_index(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return id,
            }
        }
    }

    pub fn leaf(&self, x: &[f64]) -> &[u32] {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { members } => members,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CensoringForest {
    pub params: ForestParams,
    pub seed: u64,
    pub p: usize,
    /// Censoring times of the training fold, indexed like the leaf members.
    pub ctimes: Vec<f64>,
    pub trees: Vec<Tree>,
    #[serde(skip)]
    order: OnceLock<Vec<u32>>,
}

struct Grower<'a> {
    rows: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a ForestParams,
    mtry: usize,
}

impl Grower<'_> {
    fn grow(&self, rng: &mut rng::ChaCha8Rng) -> Tree {
        let n = self.y.len();
        let bag: Vec<u32> = (0..n).map(|_| rng.random_range(0..n) as u32).collect();
        let mut nodes = vec![Node::Leaf { members: Vec::new() }];
        let mut stack = vec![(0usize, bag, 0usize)];
        while let Some((id, samples, depth)) = stack.pop() {
            let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
            if !depth_ok || samples.len() < 2 * self.params.min_leaf {
                continue;
            }
            let Some((feature, threshold)) = self.best_split(&samples, rng) else {
                continue;
            };
            let (l, r): (Vec<u32>, Vec<u32>) = samples
                .into_iter()
                .partition(|&i| self.rows[i as usize][feature] <= threshold);
            let left = nodes.len();
            nodes.push(Node::Leaf { members: Vec::new() });
            nodes.push(Node::Leaf { members: Vec::new() });
            nodes[id] = Node::Split {
                feature,
                threshold,
                left,
                right: left + 1,
            };
            stack.push((left + 1, r, depth + 1));
            stack.push((left, l, depth + 1));
        }
        let mut tree = Tree { nodes };
        for (i, row) in self.rows.iter().enumerate() {
            let leaf = tree.leaf_index(row);
            if let Node::Leaf { members } = &mut tree.nodes[leaf] {
                members.push(i as u32);
            }
        }
        tree
    }

    fn best_split(&self, samples: &[u32], rng: &mut rng::ChaCha8Rng) -> Option<(usize, f64)> {
        let m = samples.len();
        let min_leaf = self.params.min_leaf.max(1);
        let total: f64 = samples.iter().map(|&i| self.y[i as usize]).sum();
        let total_sq: f64 = samples.iter().map(|&i| self.y[i as usize].powi(2)).sum();
        let sse = total_sq - total * total / m as f64;
        if !(sse > 0.0) {
            return None;
        }
        let parent_score = total * total / m as f64;
        let min_gain = 1e-10 * sse;

        let p = self.rows[0].len();
        let features = index::sample(rng, p, self.mtry);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(m);
        for feature in features.iter() {
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (self.rows[i as usize][feature], self.y[i as usize])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for k in 1..m {
                left_sum += pairs[k - 1].1;
                if k < min_leaf || m - k < min_leaf || pairs[k - 1].0 == pairs[k].0 {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / k as f64 + right_sum * right_sum / (m - k) as f64;
                let gain = score - parent_score;
                if gain > min_gain && best.is_none_or(|b| gain > b.0) {
                    let (lo, hi) = (pairs[k - 1].0, pairs[k].0);
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((gain, feature, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Grows a forest on the training fold's censoring times.
pub fn fit_censoring_forest(train: &Dataset, params: &ForestParams, seed: u64) -> Result<CensoringForest> {
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::InvalidArgument("forest needs n_trees >= 1 and min_leaf >= 1".into()));
    }
    if train.len() < 2 * params.min_leaf || train.is_empty() {
        return Err(Error::TooSmall {
            what: "training fold size for the censoring forest (2 * min_leaf)",
            got: train.len(),
            need: (2 * params.min_leaf).max(1),
        });
    }
    let rows: Vec<Vec<f64>> = train.iter().map(|r| r.x.clone()).collect();
    let y = train.ctimes();
    if y.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("censoring forest needs finite ctime values".into()));
    }
    let grower = Grower {
        rows: &rows,
        y: &y,
        params,
        mtry: params.resolved_mtry(train.p()),
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| grower.grow(&mut rng::stream(seed, t as u64)))
        .collect();
    Ok(CensoringForest {
        params: *params,
        seed,
        p: train.p(),
        ctimes: y,
        trees,
        order: OnceLock::new(),
    })
}

/// Discrete conditional distribution of the censoring time at one `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDistribution {
    /// Distinct support points, ascending.
    values: Vec<f64>,
    /// Cumulative mass at each support point; the last entry is exactly 1.
    cumulative: Vec<f64>,
}

impl ConditionalDistribution {
    /// `P(C >= t)`.
    pub fn survival(&self, t: f64) -> f64 {
        let k = self.values.partition_point(|&v| v < t);
        if k == 0 {
            1.0
        } else {
            1.0 - self.cumulative[k - 1]
        }
    }

    /// `min { v : P(C <= v) >= b }`.
    pub fn quantile(&self, b: f64) -> f64 {
        let target = b * (1.0 - MASS_TOLERANCE);
        let k = self.cumulative.partition_point(|&c| c < target);
        self.values[k.min(self.values.len() - 1)]
    }

    pub fn support(&self) -> &[f64] {
        &self.values
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cumulative
    }
}

impl CensoringForest {
    fn order(&self) -> &[u32] {
        self.order.get_or_init(|| {
            let mut o: Vec<u32> = (0..self.ctimes.len() as u32).collect();
            o.sort_by(|&a, &b| self.ctimes[a as usize].total_cmp(&self.ctimes[b as usize]));
            o
        })
    }

    pub fn n_train(&self) -> usize {
        self.ctimes.len()
    }

    /// Unnormalized leaf co-membership weights (sum = number of trees).
    fn accumulate(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.ctimes.len()];
        for tree in &self.trees {
            let leaf = tree.leaf(x);
            let w = 1.0 / leaf.len() as f64;
            for &i in leaf {
                acc[i as usize] += w;
            }
        }
        acc
    }

    /// Nonzero forest weights `(training index, weight)`, ascending by index.
    ///
    /// The last weight is set to one minus the sequential sum of the others,
    /// so summing in the returned order gives exactly 1.
    pub fn weights(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let t = self.trees.len() as f64;
        let mut w: Vec<(usize, f64)> = self
            .accumulate(x)
            .into_iter()
            .enumerate()
            .filter(|&(_, v)| v > 0.0)
            .map(|(i, v)| (i, v / t))
            .collect();
        if let Some(last) = w.len().checked_sub(1) {
            let rest: f64 = w[..last].iter().map(|e| e.1).sum();
            w[last].1 = 1.0 - rest;
        }
        w
    }

    pub fn conditional(&self, x: &[f64]) -> ConditionalDistribution {
        let acc = self.accumulate(x);
        let mut values: Vec<f64> = Vec::new();
        let mut cumulative: Vec<f64> = Vec::new();
        let mut running = 0.0;
        for &i in self.order() {
            let w = acc[i as usize];
            if w <= 0.0 {
                continue;
            }
            running += w;
            let c = self.ctimes[i as usize];
            if values.last() == Some(&c) {
                *cumulative.last_mut().unwrap() = running;
            } else {
                values.push(c);
                cumulative.push(running);
            }
        }
        for v in &mut cumulative {
            *v /= running;
        }
        ConditionalDistribution { values, cumulative }
    }

    /// Estimated `P(C >= t | X = x)`.
    pub fn censoring_survival(&self, x: &[f64], t: f64) -> f64 {
        self.conditional(x).survival(t)
    }

    /// Estimated conditional `b`-quantile of `C`.
    pub fn conditional_quantile(&self, x: &[f64], b: f64) -> f64 {
        self.conditional(x).quantile(b)
    }
}
