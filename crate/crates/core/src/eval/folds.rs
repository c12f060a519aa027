use std::collections::BTreeMap;
use std::fmt::Debug;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::label::{ClassLabel, LabeledUser};

/// Downsamples the majority class, without replacement, to the minority
/// size. Kept users stay in input order.
pub fn balance_classes(labeled: &[LabeledUser], seed: u64) -> Result<Vec<LabeledUser>, EvalError> {
    let a: Vec<usize> = (0..labeled.len()).filter(|&i| labeled[i].label == ClassLabel::A).collect();
    let b: Vec<usize> = (0..labeled.len()).filter(|&i| labeled[i].label == ClassLabel::B).collect();
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::SingleClass);
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; labeled.len()];
    for &i in &small {
        keep[i] = true;
    }
    for k in sample(&mut rng, large.len(), small.len()) {
        keep[large[k]] = true;
    }
    Ok(labeled.iter().zip(keep).filter(|(_, k)| *k).map(|(u, _)| u.clone()).collect())
}

/// `k` disjoint folds of row indices covering every row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Ascending row indices per fold.
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// Every row outside `fold`, ascending.
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        let mut rows: Vec<usize> =
            self.folds.iter().enumerate().filter(|&(f, _)| f != fold).flat_map(|(_, r)| r.iter().copied()).collect();
        rows.sort_unstable();
        rows
    }

    pub fn n_rows(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }
}

/// Shuffles each class with the seed and deals its rows round-robin,
/// continuing from where the previous class stopped, so every fold holds
/// floor or ceil of (class count / k) rows of each class.
pub fn stratified_kfold<L: Ord + Clone + Debug>(labels: &[L], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFolds(k));
    }
    let mut by_class: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if let Some((label, rows)) = by_class.iter().find(|(_, rows)| rows.len() < k) {
        return Err(EvalError::TooFewSamples { class: format!("{label:?}"), count: rows.len(), k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for rows in by_class.values_mut() {
        rows.shuffle(&mut rng);
        for &r in rows.iter() {
            folds[next].push(r);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { k, seed, folds })
}
