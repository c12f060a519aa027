//! Command-line driver for the payattr pipeline and the planted-signal
//! corpus generator used by the end-to-end tests.

pub mod commands;
pub mod config;
pub mod synth;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{run, Cli, Command};
pub use config::FileConfig;
pub use synth::{generate_synthetic_corpus, SynthCorpus, SynthError, SynthSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cli: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cli: bad configuration: {0}")]
    Config(String),
    #[error("cli: bad label file: {0}")]
    Labels(String),
    #[error("cli: {0}")]
    Usage(String),
    #[error("cli: csv failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("cli: json failure: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Corpus(#[from] payattr_core::corpus::CorpusError),
    #[error(transparent)]
    Label(#[from] payattr_core::label::LabelError),
    #[error(transparent)]
    Lexicon(#[from] payattr_core::lexicon::LexiconError),
    #[error(transparent)]
    Features(#[from] payattr_core::features::FeatureError),
    #[error(transparent)]
    Vectorize(#[from] payattr_core::vectorize::VectorizeError),
    #[error(transparent)]
    Model(#[from] payattr_core::model::ModelError),
    #[error(transparent)]
    Eval(#[from] payattr_core::eval::EvalError),
    #[error(transparent)]
    Harvest(#[from] payattr_harvest::HarvestError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
