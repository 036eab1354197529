//! Run configuration: a JSON file merged with command-line flags, plus the
//! manifest every command writes next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Every key a command may read. Flags override the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub graph: Option<PathBuf>,
    pub series: Option<PathBuf>,
    pub actions: Option<PathBuf>,
    /// Model JSON, or a fit report whose `model` key holds one.
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,

    pub alpha: Option<Vec<f64>>,
    pub decay: Option<f64>,
    pub tau: Option<usize>,
    /// `sensed`, `fitted` or a number in `[-1, 1]`.
    pub surround: Option<String>,
    pub initial: Option<Vec<f64>>,

    pub kernel: Option<String>,
    pub eps: Option<Vec<f64>>,
    pub phi_rate: Option<f64>,
    pub samples: Option<usize>,

    pub restarts: Option<usize>,
    pub max_sweeps: Option<usize>,
    pub teacher_forcing: Option<bool>,
    pub window: Option<usize>,
    pub basis: Option<Vec<String>>,
    pub max_iters: Option<usize>,
}

macro_rules! overlay {
    ($base:expr, $flags:expr, $($field:ident),*) => {
        $(if $flags.$field.is_some() { $base.$field = $flags.$field.clone(); })*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn merge(mut self, flags: &RunConfig) -> Self {
        overlay!(
            self, flags, graph, series, actions, model, out, seed, alpha, decay, tau, surround,
            initial, kernel, eps, phi_rate, samples, restarts, max_sweeps, teacher_forcing,
            window, basis, max_iters
        );
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn require_path(&self, what: &str, value: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        let path = value
            .clone()
            .ok_or_else(|| CliError::Validation(format!("missing --{what}")))?;
        if !path.exists() {
            return Err(CliError::Validation(format!(
                "{what} file {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self
            .out
            .clone()
            .ok_or_else(|| CliError::Validation("missing --out".into()))?;
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub config_hash: String,
    pub config: &'a RunConfig,
    pub outputs: Vec<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n")
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    outputs: &[&str],
) -> Result<(), CliError> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed(),
        config_hash: config.hash(),
        config,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}
