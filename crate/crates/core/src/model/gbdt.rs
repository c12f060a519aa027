//! Gradient-boosted regression trees for logistic loss.
//!
//! Each round fits a least-squares tree to the residuals `y − p`, sets leaf
//! values by a Newton step scaled by the learning rate, and halves any leaf
//! value that would raise the training loss inside its leaf.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_binary_labels, ModelError};
use crate::scalar::{lit, Scalar};
use crate::vectorize::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Fraction of rows drawn (without replacement) to grow each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig { rounds: 200, max_depth: 3, learning_rate: 0.1, min_samples_leaf: 1, subsample: 1.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode<T> {
    /// Rows with `x[feature] <= threshold` go left. Absent entries are 0.
    Split { feature: usize, threshold: T, left: usize, right: usize },
    Leaf { value: T },
}

/// Root at index 0. Leaf values already include the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree<T> {
    pub nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> RegressionTree<T> {
    fn leaf_of(&self, x: &SparseMatrix<T>, r: usize) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x.get(r, *feature) <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict_row(&self, x: &SparseMatrix<T>, r: usize) -> T {
        match &self.nodes[self.leaf_of(x, r)] {
            TreeNode::Leaf { value } => *value,
            TreeNode::Split { .. } => unreachable!("leaf_of stops at a leaf"),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[TreeNode<T>], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel<T> {
    pub input_dim: usize,
    /// Initial log-odds of class 1.
    pub base_score: T,
    pub trees: Vec<RegressionTree<T>>,
    pub config: GbdtConfig,
    /// Training loss before the first round and after each round.
    pub loss_history: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logloss(f: f64, y: f64) -> f64 {
    f.max(0.0) + (-f.abs()).exp().ln_1p() - y * f
}

impl<T: Scalar> GbdtModel<T> {
    fn check_width(&self, x: &SparseMatrix<T>) -> Result<(), ModelError> {
        if x.cols() != self.input_dim {
            return Err(ModelError::DimensionMismatch { expected: self.input_dim, found: x.cols() });
        }
        Ok(())
    }

    /// Additive log-odds score per row.
    pub fn raw_scores(&self, x: &SparseMatrix<T>) -> Result<Vec<T>, ModelError> {
        self.check_width(x)?;
        Ok((0..x.rows())
            .map(|r| self.trees.iter().fold(self.base_score, |acc, t| acc + t.predict_row(x, r)))
            .collect())
    }

    pub fn predict_proba(&self, x: &SparseMatrix<T>) -> Result<Vec<T>, ModelError> {
        Ok(self.raw_scores(x)?.into_iter().map(|f| T::from_f64_lossy(sigmoid(f.to_f64_lossy()))).collect())
    }

    pub fn predict(&self, x: &SparseMatrix<T>) -> Result<Vec<u8>, ModelError> {
        Ok(self.raw_scores(x)?.into_iter().map(|f| u8::from(f >= T::zero())).collect())
    }
}

/// Per-feature nonzero entries sorted by value.
fn sorted_columns<T: Scalar>(x: &SparseMatrix<T>) -> Vec<Vec<(usize, T)>> {
    let mut cols: Vec<Vec<(usize, T)>> = vec![Vec::new(); x.cols()];
    for r in 0..x.rows() {
        for (c, v) in x.row_iter(r) {
            cols[c].push((r, v));
        }
    }
    for col in &mut cols {
        col.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite values").then(a.0.cmp(&b.0)));
    }
    cols
}

#[derive(Clone, Copy)]
struct Candidate<T> {
    gain: f64,
    feature: usize,
    threshold: T,
}

struct NodeStats {
    count: usize,
    sum: f64,
}

/// Best split of one node on one feature given its nonzero entries
/// `(value, residual)` in ascending value order.
fn best_split_for_feature<T: Scalar>(
    entries: &[(T, f64)],
    node: &NodeStats,
    feature: usize,
    min_leaf: usize,
    best: &mut Option<Candidate<T>>,
) {
    let nz_sum: f64 = entries.iter().map(|e| e.1).sum();
    let zero_count = node.count - entries.len();
    let zero_sum = node.sum - nz_sum;
    let parent = node.sum * node.sum / node.count as f64;

    let mut groups: Vec<(T, usize, f64)> = Vec::new();
    let mut zero_done = zero_count == 0;
    for &(v, r) in entries {
        if !zero_done && v > T::zero() {
            groups.push((T::zero(), zero_count, zero_sum));
            zero_done = true;
        }
        match groups.last_mut() {
            Some(g) if g.0 == v => {
                g.1 += 1;
                g.2 += r;
            }
            _ => groups.push((v, 1, r)),
        }
    }
    if !zero_done {
        groups.push((T::zero(), zero_count, zero_sum));
    }

    let (mut left_n, mut left_s) = (0usize, 0.0f64);
    for w in 0..groups.len().saturating_sub(1) {
        left_n += groups[w].1;
        left_s += groups[w].2;
        let right_n = node.count - left_n;
        if left_n < min_leaf || right_n < min_leaf {
            continue;
        }
        let right_s = node.sum - left_s;
        let gain = left_s * left_s / left_n as f64 + right_s * right_s / right_n as f64 - parent;
        if best.is_none_or(|b| gain > b.gain) {
            let (lo, hi) = (groups[w].0, groups[w + 1].0);
            let mid = lo + (hi - lo) / lit(2.0);
            let threshold = if mid < hi { mid } else { lo };
            *best = Some(Candidate { gain, feature, threshold });
        }
    }
}

struct Grower<'a, T> {
    x: &'a SparseMatrix<T>,
    columns: &'a [Vec<(usize, T)>],
    residual: &'a [f64],
    config: &'a GbdtConfig,
}

impl<'a, T: Scalar> Grower<'a, T> {
    /// Grows the tree structure on `rows`; leaves carry placeholder zeros.
    fn grow(&self, rows: Vec<usize>) -> RegressionTree<T> {
        let mut nodes = vec![TreeNode::Leaf { value: T::zero() }];
        let mut frontier: Vec<(usize, Vec<usize>)> = vec![(0, rows)];
        let mut slot_of = vec![usize::MAX; self.x.rows()];
        let min_leaf = self.config.min_samples_leaf.max(1);
        for _depth in 0..self.config.max_depth {
            let active: Vec<(usize, Vec<usize>)> =
                frontier.drain(..).filter(|(_, r)| r.len() >= 2 * min_leaf).collect();
            if active.is_empty() {
                break;
            }
            let stats: Vec<NodeStats> = active
                .iter()
                .map(|(_, rows)| NodeStats { count: rows.len(), sum: rows.iter().map(|&r| self.residual[r]).sum() })
                .collect();
            for (slot, (_, rows)) in active.iter().enumerate() {
                for &r in rows {
                    slot_of[r] = slot;
                }
            }
            let mut best: Vec<Option<Candidate<T>>> = vec![None; active.len()];
            let mut buckets: Vec<Vec<(T, f64)>> = vec![Vec::new(); active.len()];
            for (feature, col) in self.columns.iter().enumerate() {
                for b in &mut buckets {
                    b.clear();
                }
                for &(r, v) in col {
                    let s = slot_of[r];
                    if s != usize::MAX {
                        buckets[s].push((v, self.residual[r]));
                    }
                }
                for (s, bucket) in buckets.iter().enumerate() {
                    if bucket.is_empty() {
                        continue;
                    }
                    best_split_for_feature(bucket, &stats[s], feature, min_leaf, &mut best[s]);
                }
            }
            for (_, rows) in &active {
                for &r in rows {
                    slot_of[r] = usize::MAX;
                }
            }
            for ((node, rows), cand) in active.into_iter().zip(best) {
                let Some(c) = cand.filter(|c| c.gain > 1e-12) else { continue };
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&row| self.x.get(row, c.feature) <= c.threshold);
                let left = nodes.len();
                nodes.push(TreeNode::Leaf { value: T::zero() });
                nodes.push(TreeNode::Leaf { value: T::zero() });
                nodes[node] = TreeNode::Split { feature: c.feature, threshold: c.threshold, left, right: left + 1 };
                frontier.push((left, l));
                frontier.push((left + 1, r));
            }
        }
        RegressionTree { nodes }
    }
}

/// Labels are 1 (class A) or 0 (class B).
pub fn train_gbdt<T: Scalar>(x: &SparseMatrix<T>, y: &[u8], config: &GbdtConfig) -> Result<GbdtModel<T>, ModelError> {
    check_binary_labels(x.rows(), y)?;
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite())
        || !(config.subsample > 0.0 && config.subsample <= 1.0)
    {
        return Err(ModelError::InvalidConfig(format!("{config:?}")));
    }
    let n = x.rows();
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let pos = yf.iter().sum::<f64>() / n as f64;
    let base_score = T::from_f64_lossy((pos / (1.0 - pos)).ln());
    let mut scores = vec![base_score; n];
    let total_loss = |scores: &[T]| -> f64 { scores.iter().zip(&yf).map(|(f, &t)| logloss(f.to_f64_lossy(), t)).sum::<f64>() / n as f64 };
    let mut loss_history = vec![total_loss(&scores)];
    let columns = sorted_columns(x);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let eta = config.learning_rate;
    let mut trees = Vec::with_capacity(config.rounds);

    for _ in 0..config.rounds {
        let prob: Vec<f64> = scores.iter().map(|f| sigmoid(f.to_f64_lossy())).collect();
        let residual: Vec<f64> = yf.iter().zip(&prob).map(|(t, p)| t - p).collect();
        let rows: Vec<usize> = if config.subsample < 1.0 {
            let k = ((n as f64 * config.subsample).round() as usize).clamp(1, n);
            let mut s = sample(&mut rng, n, k).into_vec();
            s.sort_unstable();
            s
        } else {
            (0..n).collect()
        };
        let mut sampled = vec![false; n];
        for &r in &rows {
            sampled[r] = true;
        }
        let grower = Grower { x, columns: &columns, residual: &residual, config };
        let mut tree = grower.grow(rows);

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
        for r in 0..n {
            members[tree.leaf_of(x, r)].push(r);
        }
        for (leaf, rows) in members.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let (num, den) = rows
                .iter()
                .filter(|&&r| sampled[r])
                .fold((0.0, 0.0), |(a, b), &r| (a + residual[r], b + prob[r] * (1.0 - prob[r])));
            let gamma = if den > 1e-12 { num / den } else { 0.0 };
            let mut value = T::from_f64_lossy(eta * gamma);
            let leaf_loss = |v: T| -> f64 { rows.iter().map(|&r| logloss((scores[r] + v).to_f64_lossy(), yf[r])).sum() };
            let before = leaf_loss(T::zero());
            let mut halvings = 0;
            while value != T::zero() && !(leaf_loss(value) <= before) {
                value = if halvings < 60 { value / lit(2.0) } else { T::zero() };
                halvings += 1;
            }
            tree.nodes[leaf] = TreeNode::Leaf { value };
        }
        for r in 0..n {
            scores[r] += tree.predict_row(x, r);
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(ModelError::NonFinite("gbdt scores".into()));
        }
        loss_history.push(total_loss(&scores));
        trees.push(tree);
    }
    Ok(GbdtModel { input_dim: x.cols(), base_score, trees, config: *config, loss_history })
}
