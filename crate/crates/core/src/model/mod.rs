//! Linear SVM, one-hidden-layer MLP and gradient-boosted trees, plus
//! versioned model files and SVM coefficient rankings.

mod gbdt;
mod mlp;
mod persist;
mod svm;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gbdt::{train_gbdt, GbdtConfig, GbdtModel, RegressionTree, TreeNode};
pub use mlp::{train_mlp, MlpConfig, MlpGradient, MlpModel};
pub use persist::{load_model, read_container, save_model, write_container, MODEL_MAGIC, MODEL_VERSION};
pub use svm::{primal_objective, svm_decision, svm_predict, train_linear_svm, LinearSvmModel, SvmConfig, SvmDiagnostics};

use crate::scalar::Scalar;
use crate::vectorize::SparseMatrix;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model: training labels contain a single class")]
    SingleClass,
    #[error("model: label {value} at row {index} is not valid for this classifier")]
    InvalidLabel { index: usize, value: i8 },
    #[error("model: dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model: non-finite value in {0}")]
    NonFinite(String),
    #[error("model: invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model: version error: {0}")]
    Version(String),
    #[error("model: corrupt model file: {0}")]
    Corrupt(String),
    #[error("model: io failure: {0}")]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_signed_labels(rows: usize, y: &[i8]) -> Result<(), ModelError> {
    check_labels(rows, y, [-1, 1])
}

pub(crate) fn check_binary_labels(rows: usize, y: &[u8]) -> Result<(), ModelError> {
    let signed: Vec<i8> = y.iter().map(|&v| v.min(127) as i8).collect();
    check_labels(rows, &signed, [0, 1])
}

fn check_labels(rows: usize, y: &[i8], allowed: [i8; 2]) -> Result<(), ModelError> {
    if y.len() != rows {
        return Err(ModelError::DimensionMismatch { expected: rows, found: y.len() });
    }
    if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| !allowed.contains(v)) {
        return Err(ModelError::InvalidLabel { index, value });
    }
    if !(y.contains(&allowed[0]) && y.contains(&allowed[1])) {
        return Err(ModelError::SingleClass);
    }
    Ok(())
}

/// Strongest features on each side of an SVM hyperplane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport<T> {
    /// Non-negative weights, largest first.
    pub positive: Vec<(String, T)>,
    /// Negative weights, most negative first.
    pub negative: Vec<(String, T)>,
}

/// Up to `k` features per sign ordered by |weight| descending, ties broken
/// by feature name. Unnamed columns are reported as `#<index>`.
pub fn top_coefficients<T: Scalar>(model: &LinearSvmModel<T>, k: usize) -> CoefficientReport<T> {
    let name = |i: usize| model.feature_names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
    let mut pos: Vec<(String, T)> = Vec::new();
    let mut neg: Vec<(String, T)> = Vec::new();
    for (i, &w) in model.weights.iter().enumerate() {
        if w >= T::zero() {
            pos.push((name(i), w));
        } else {
            neg.push((name(i), w));
        }
    }
    let order = |a: &(String, T), b: &(String, T)| {
        b.1.abs().partial_cmp(&a.1.abs()).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0))
    };
    pos.sort_by(order);
    neg.sort_by(order);
    pos.truncate(k);
    neg.truncate(k);
    CoefficientReport { positive: pos, negative: neg }
}

/// Any trained classifier behind one interface. Binary predictions use
/// 1 for class A and 0 for class B throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum Classifier<T> {
    Svm(LinearSvmModel<T>),
    Mlp(MlpModel<T>),
    Gbdt(GbdtModel<T>),
}

impl<T: Scalar> Classifier<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Svm(_) => "svm",
            Classifier::Mlp(_) => "mlp",
            Classifier::Gbdt(_) => "gbdt",
        }
    }

    /// Real-valued score; positive favours class A.
    pub fn score(&self, x: &SparseMatrix<T>) -> Result<Vec<T>, ModelError> {
        match self {
            Classifier::Svm(m) => m.decision(x),
            Classifier::Mlp(m) => m.logits(x),
            Classifier::Gbdt(m) => m.raw_scores(x),
        }
    }

    /// 1 for class A, 0 for class B.
    pub fn predict_binary(&self, x: &SparseMatrix<T>) -> Result<Vec<u8>, ModelError> {
        match self {
            Classifier::Svm(m) => Ok(m.predict(x)?.into_iter().map(|s| u8::from(s > 0)).collect()),
            Classifier::Mlp(m) => m.predict(x),
            Classifier::Gbdt(m) => m.predict(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(weights: Vec<f64>, names: &[&str]) -> LinearSvmModel<f64> {
        LinearSvmModel {
            weights,
            bias: 0.0,
            c: 1.0,
            feature_names: names.iter().map(|s| s.to_string()).collect(),
            diagnostics: SvmDiagnostics { iterations: 0, primal_objective: 0.0, dual_objective: 0.0, relative_gap: 0.0, converged: true },
        }
    }

    #[test]
    fn coefficient_ranking() {
        let m = model(vec![0.5, -2.0, 3.0, -0.1, 0.5], &["e", "b", "c", "d", "a"]);
        let r = top_coefficients(&m, 2);
        assert_eq!(r.positive, vec![("c".to_string(), 3.0), ("a".to_string(), 0.5)]);
        assert_eq!(r.negative, vec![("b".to_string(), -2.0), ("d".to_string(), -0.1)]);
        let r = top_coefficients(&m, 0);
        assert!(r.positive.is_empty() && r.negative.is_empty());
        let r = top_coefficients(&m, 100);
        assert_eq!(r.positive.len() + r.negative.len(), 5);
    }

    #[test]
    fn zero_weights_are_name_sorted() {
        let m = model(vec![0.0; 3], &["z", "m", "a"]);
        let names: Vec<String> = top_coefficients(&m, 3).positive.into_iter().map(|p| p.0).collect();
        assert_eq!(names, ["a", "m", "z"]);
    }

    #[test]
    fn label_checks() {
        assert!(check_signed_labels(2, &[1, -1]).is_ok());
        assert!(matches!(check_binary_labels(2, &[1, 1]), Err(ModelError::SingleClass)));
        assert!(matches!(check_binary_labels(2, &[1, 2]), Err(ModelError::InvalidLabel { index: 1, value: 2 })));
    }
}
