//! Latent attribute inference from social payment notes.

pub mod corpus;
pub mod eval;
pub mod features;
pub mod label;
pub mod lexicon;
pub mod model;
pub mod scalar;
pub mod seed;
pub mod tokenize;
pub mod vectorize;

pub use scalar::Scalar;

pub type SparseMatrix = vectorize::SparseMatrix<f64>;
pub type SparseMatrixF32 = vectorize::SparseMatrix<f32>;
pub type ScalerStats = vectorize::ScalerStats<f64>;
pub type EngineeredFeatures = features::EngineeredFeatures<f64>;
pub type LinearSvmModel = model::LinearSvmModel<f64>;
pub type MlpModel = model::MlpModel<f64>;
pub type GbdtModel = model::GbdtModel<f64>;
pub type Classifier = model::Classifier<f64>;
pub type Dataset = eval::Dataset<f64>;
pub type FittedPipeline = eval::FittedPipeline<f64>;
