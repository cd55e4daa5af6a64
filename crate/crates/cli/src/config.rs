//! Run configuration: a TOML file supplying defaults that individual
//! flags override. Every referenced path must exist at invocation, and
//! the config hash plus seeds flow into every emitted report.

use crate::errors::CliError;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, serde::Deserialize)]
pub struct RunConfig {
    /// Sandbox worker-pool size; exported as FRONTIER_WORKERS.
    pub workers: Option<usize>,
    /// Runner command template with a {program} placeholder.
    pub runner: Option<String>,
    /// Finite threshold exponents; infinity is always appended.
    pub thresholds: Option<Vec<u32>>,
    pub seed: Option<u64>,
    pub problems: Option<PathBuf>,
    pub submissions: Option<PathBuf>,
    pub checkpoints: Option<PathBuf>,
    pub results: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Hex SHA-256 of the raw config bytes; empty string when no config
    /// file was given.
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::Digest;
    let mut hasher = sha2::Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_config(path: Option<&Path>) -> Result<LoadedConfig, CliError> {
    let Some(path) = path else {
        return Ok(LoadedConfig::default());
    };
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Data(format!("config {} is not UTF-8", path.display())))?;
    let config: RunConfig = toml::from_str(&text)
        .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;

    for referenced in [
        &config.problems,
        &config.submissions,
        &config.checkpoints,
        &config.results,
    ]
    .into_iter()
    .flatten()
    {
        if !referenced.exists() {
            return Err(CliError::Data(format!(
                "config references missing path {}",
                referenced.display()
            )));
        }
    }
    if let Some(workers) = config.workers {
        if std::env::var_os(frontier_core::verifier::WORKERS_ENV).is_none() {
            std::env::set_var(frontier_core::verifier::WORKERS_ENV, workers.to_string());
        }
    }
    Ok(LoadedConfig {
        config,
        hash: sha256_hex(&bytes),
    })
}

impl LoadedConfig {
    /// Flag value, config fallback, or the built-in default runner.
    pub fn runner(&self, flag: &Option<String>) -> String {
        flag.clone()
            .or_else(|| self.config.runner.clone())
            .unwrap_or_else(|| "python3 {program}".to_string())
    }

    /// Flag value or config fallback for a required path.
    pub fn required_path(
        &self,
        flag: &Option<PathBuf>,
        from_config: &Option<PathBuf>,
        what: &str,
    ) -> Result<PathBuf, CliError> {
        flag.clone()
            .or_else(|| from_config.clone())
            .ok_or_else(|| CliError::Usage(format!("--{what} is required (flag or config)")))
    }

    pub fn thresholds(&self, flag: &Option<String>) -> String {
        flag.clone()
            .or_else(|| {
                self.config
                    .thresholds
                    .as_ref()
                    .map(|t| t.iter().map(u32::to_string).collect::<Vec<_>>().join(","))
            })
            .unwrap_or_else(|| "2,3,4,5,6".to_string())
    }
}
