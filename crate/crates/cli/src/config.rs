//! TOML pipeline configuration. Every key is optional; flags win over config
//! values and config values win over built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub tau: Option<usize>,
    pub names: Option<Vec<String>>,
    pub kernels: Option<Vec<String>>,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
    pub mkl_iters: Option<usize>,
    pub refine_epochs: Option<usize>,
    pub tol: Option<f64>,
    pub step: Option<f64>,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub paths: PathsConfig,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: Option<usize>,
    pub superclusters: Option<usize>,
    pub samples_per_class: Option<usize>,
    pub dim: Option<usize>,
    pub intra_spread: Option<f64>,
    pub inter_spread: Option<f64>,
    pub noise: Option<f64>,
    pub within_supercluster: Option<f64>,
    pub confusion: Option<Vec<String>>,
    pub groups: Option<Vec<String>>,
}

/// Artifact locations shared by the stages of a pipeline.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub out_dir: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub hierarchy: Option<PathBuf>,
    pub tree: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub distances: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Format(format!("config {}: {}", path.display(), e.message())))
    }
}
