//! Optional JSON configuration file. Command-line flags win over file
//! values, which win over built-in defaults.

use std::path::{Path, PathBuf};

use payattr_core::eval::{GridSpec, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::synth::SynthSpec;
use crate::CliError;

/// Environment variable naming the directory relative paths resolve against.
pub const DATA_DIR_ENV: &str = "PAYATTR_DATA_DIR";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Root seed; every stage derives its own seed from it.
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub balance: Option<bool>,
    pub region: Option<String>,
    pub names: Option<PathBuf>,
    pub lexicons: Option<PathBuf>,
    pub include_actor: Option<bool>,
    pub pipeline: Option<PipelineConfig>,
    pub grid: Option<GridSpec>,
    pub synth: Option<SynthSpec>,
    pub harvest: Option<HarvestSettings>,
    pub mock: Option<MockSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestSettings {
    pub rate: f64,
    pub burst: f64,
    pub max_retries: u32,
    pub workers: usize,
}

impl Default for HarvestSettings {
    fn default() -> Self {
        HarvestSettings { rate: 5.0, burst: 1.0, max_retries: 5, workers: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    pub page_size: usize,
    pub refresh_secs: f64,
    pub rate_limit: Option<f64>,
    pub burst: f64,
}

impl Default for MockSettings {
    fn default() -> Self {
        MockSettings { page_size: 20, refresh_secs: 900.0, rate_limit: None, burst: 10.0 }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Resolves file arguments against an optional data directory.
#[derive(Debug, Clone, Default)]
pub struct Paths {
    pub data_dir: Option<PathBuf>,
}

impl Paths {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.data_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }
}
