//! Gradient-boosted regression trees on the logistic loss.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostingConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for BoostingConfig {
    fn default() -> Self {
        BoostingConfig { n_trees: 100, max_depth: 2, learning_rate: 0.1, subsample: 1.0, min_samples_leaf: 1, seed: 0 }
    }
}

impl BoostingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig("n_trees, max_depth and min_samples_leaf must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0 and subsample in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, data: &Dataset, row: usize) -> f64 {
        let mut n = 0;
        loop {
            match self.nodes[n] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    n = if data.value(row, feature) <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub feature_names: Vec<alloc::string::String>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Mean training log-loss after the base score and after every stage.
    pub train_loss: Vec<f64>,
}

impl Ensemble {
    pub fn decision_function(&self, data: &Dataset, row: usize) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict_row(data, row)).sum::<f64>()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

fn log_loss(y: &[bool], f: &[f64]) -> f64 {
    let n = y.len() as f64;
    y.iter()
        .zip(f)
        .map(|(&yi, &fi)| {
            // log(1 + e^{-s·f}) computed stably
            let m = if yi { -fi } else { fi };
            if m > 0.0 {
                m + libm::log1p(libm::exp(-m))
            } else {
                libm::log1p(libm::exp(m))
            }
        })
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestSplit {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Exhaustive least-squares split of `target` over `rows`: maximizes
/// `S_L²/n_L + S_R²/n_R − S²/n` over all features and all midpoints between
/// consecutive distinct values. Ties keep the earliest feature and the
/// lowest threshold.
pub fn best_split(data: &Dataset, rows: &[usize], target: &[f64], min_leaf: usize) -> Option<BestSplit> {
    let n = rows.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let total: f64 = rows.iter().map(|&r| target[r]).sum();
    let base = total * total / n as f64;
    let mut best: Option<BestSplit> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for feature in 0..data.n_features() {
        let col = data.column(feature);
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        let mut left = 0.0;
        for i in 0..n - 1 {
            left += target[order[i]];
            let (xa, xb) = (col[order[i]], col[order[i + 1]]);
            let nl = i + 1;
            if xa == xb || nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let right = total - left;
            let gain = left * left / nl as f64 + right * right / (n - nl) as f64 - base;
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(BestSplit { feature, threshold: xa + (xb - xa) / 2.0, gain });
            }
        }
    }
    best.filter(|b| b.gain > 1e-12)
}

struct Grower<'a> {
    data: &'a Dataset,
    grad: &'a [f64],
    hess: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let split = if depth < self.max_depth { best_split(self.data, rows, self.grad, self.min_leaf) } else { None };
        match split {
            Some(s) => {
                let col = self.data.column(s.feature);
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] <= s.threshold);
                let left = self.grow(&l, depth + 1);
                let right = self.grow(&r, depth + 1);
                self.nodes[id] = Node::Split { feature: s.feature, threshold: s.threshold, left, right };
            }
            None => {
                // Newton step for the logistic loss.
                let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
                let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
                self.nodes[id] = Node::Leaf { value: g / h.max(1e-12) };
            }
        }
        id
    }
}

/// Stage-wise boosting: each tree is fit to the negative gradient
/// `y − p` of the logistic loss, with Newton leaf values.
pub fn fit_boosting(data: &Dataset, cfg: &BoostingConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let y = data.labels();
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::DegenerateLabels);
    }
    let n = y.len();
    let p0 = positives as f64 / n as f64;
    let base_score = libm::log(p0 / (1.0 - p0));
    let mut f = vec![base_score; n];
    let mut train_loss = vec![log_loss(y, &f)];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut all_rows: Vec<usize> = (0..n).collect();
    let sample_size = ((cfg.subsample * n as f64) as usize).clamp(1, n);
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for _ in 0..cfg.n_trees {
        let p: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
        let grad: Vec<f64> = y.iter().zip(&p).map(|(&yi, &pi)| if yi { 1.0 - pi } else { -pi }).collect();
        let hess: Vec<f64> = p.iter().map(|&pi| pi * (1.0 - pi)).collect();
        let rows: Vec<usize> = if sample_size < n {
            all_rows.shuffle(&mut rng);
            let mut s = all_rows[..sample_size].to_vec();
            s.sort_unstable();
            s
        } else {
            (0..n).collect()
        };
        let mut grower = Grower {
            data,
            grad: &grad,
            hess: &hess,
            max_depth: cfg.max_depth,
            min_leaf: cfg.min_samples_leaf,
            nodes: Vec::new(),
        };
        grower.grow(&rows, 0);
        let tree = Tree { nodes: grower.nodes };
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += cfg.learning_rate * tree.predict_row(data, i);
        }
        train_loss.push(log_loss(y, &f));
        trees.push(tree);
    }
    Ok(Ensemble {
        feature_names: data.feature_names().to_vec(),
        base_score,
        learning_rate: cfg.learning_rate,
        trees,
        train_loss,
    })
}
