use std::fs;
use std::path::{Path, PathBuf};

use iris::data::SyntheticConfig;
use iris::pipeline::{ModelVariant, TrainConfig};
use serde::Deserialize;

use crate::commands::CliError;
use crate::{ReportFormat, SplitArgs};

/// Run configuration file. Every field is optional; flags given on the
/// command line override the file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub variant: Option<String>,
    pub format: Option<ReportFormat>,
    pub train_count: Option<usize>,
    pub split_seed: Option<u64>,
    pub train: TrainConfig,
    pub generator: SyntheticConfig,
    pub generator_seed: Option<u64>,
}

/// Resolved split settings.
#[derive(Debug, Clone, Copy)]
pub struct Split {
    pub train_count: Option<usize>,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn split(&self, args: &SplitArgs) -> Split {
        Split {
            train_count: args.train_count.or(self.train_count),
            seed: args.split_seed.or(self.split_seed).unwrap_or(0),
        }
    }
}

pub fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Validation(format!("{flag} is required")))
}

pub fn existing_dir(path: Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    let path = required(path, flag)?;
    if !path.is_dir() {
        return Err(CliError::Validation(format!(
            "dataset directory {} does not exist",
            path.display()
        )));
    }
    Ok(path)
}

pub fn existing_file(path: PathBuf) -> Result<PathBuf, CliError> {
    if !path.is_file() {
        return Err(CliError::Validation(format!(
            "{} does not exist",
            path.display()
        )));
    }
    Ok(path)
}

pub fn variant(name: &str) -> Result<ModelVariant, CliError> {
    name.parse().map_err(CliError::Validation)
}
