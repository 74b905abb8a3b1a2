//! Flat TOML experiment config. Command-line flags override file values,
//! which override built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub scales: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
    pub mode: Option<String>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub branch: Option<String>,
    pub readout_affine: Option<bool>,
    pub topology: Option<String>,
    pub patch: Option<usize>,
    pub threshold: Option<f64>,
    pub center: Option<usize>,
    pub samples_per_class: Option<usize>,
    pub classes: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub blob_scales: Option<Vec<usize>>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub train_fraction: Option<f64>,
    pub image: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io_at(p, e))?;
                Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {}", p.display(), e.message)))
            }
        }
    }
}

/// `flag`, else `file`, else `default`.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Like [`pick`] for values with no default.
pub fn require<T>(flag: Option<T>, file: Option<T>, name: &str) -> CliResult<T> {
    flag.or(file)
        .ok_or_else(|| CliError::usage(format!("missing required value `{name}` (flag or config key)")))
}

pub fn parse_f64_list(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("not a number: `{t}`")))
        })
        .collect()
}

/// Semicolon-separated comma lists: `0.5;0.5,1.0;0.5,1.0,1.5`.
pub fn parse_scale_sets(text: &str) -> CliResult<Vec<Vec<f64>>> {
    text.split(';')
        .map(|set| {
            if set.trim().is_empty() {
                Ok(Vec::new())
            } else {
                parse_f64_list(set)
            }
        })
        .collect()
}

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::io(format!("{}: no such file or directory", path.display())))
    }
}

/// Creates `dir` (and parents) so outputs can be written.
pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io_at(dir, e))
}

pub fn ensure_parent(file: &Path) -> CliResult<()> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}
