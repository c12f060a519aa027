//! Class balancing, stratified folds, leakage-free cross-validation and
//! grid search.

mod folds;
mod grid;
mod pipeline;

use thiserror::Error;

pub use folds::{balance_classes, stratified_kfold, FoldPlan};
pub use grid::{grid_search, ConfigResult, EvalReport, GridSpec};
pub use pipeline::{
    cross_validate, fit_pipeline, ClassifierConfig, ClassifierKind, Confusion, CvResult, Dataset, FittedPipeline,
    PipelineConfig, VectorizerKind, PIPELINE_KIND,
};

use crate::features::FeatureError;
use crate::model::ModelError;
use crate::vectorize::VectorizeError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("eval: labels contain a single class")]
    SingleClass,
    #[error("eval: class {class} has {count} samples, fewer than k={k}")]
    TooFewSamples { class: String, count: usize, k: usize },
    #[error("eval: k must be at least 2, got {0}")]
    InvalidFolds(usize),
    #[error("eval: the grid has no configurations")]
    EmptyGrid,
    #[error("eval: fold plan covers {plan} rows but the dataset has {data}")]
    PlanMismatch { plan: usize, data: usize },
    #[error("eval: labeled user {0} is not in the corpus")]
    UnknownUser(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Features(#[from] FeatureError),
}
