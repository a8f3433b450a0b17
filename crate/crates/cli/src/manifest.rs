use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use nmcdse::characterize::SIGNATURE_SCHEMA_VERSION;

use crate::{CliError, CliResult};

/// Reproducibility record written next to every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: Vec<String>,
    pub config: Option<String>,
    pub overrides: Vec<String>,
    pub output: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub schema_version: u32,
    pub wall_clock_seconds: f64,
}

pub struct ManifestBuilder {
    started: Instant,
    subcommand: String,
    config: Option<String>,
    overrides: Vec<String>,
    seed: Option<u64>,
}

impl ManifestBuilder {
    pub fn start(subcommand: &str, config: Option<&Path>, overrides: &[String]) -> Self {
        ManifestBuilder {
            started: Instant::now(),
            subcommand: subcommand.to_string(),
            config: config.map(|p| p.display().to_string()),
            overrides: overrides.to_vec(),
            seed: None,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Writes `<output>.manifest.json`.
    pub fn write(&self, inputs: &[PathBuf], output: &Path) -> CliResult<()> {
        let manifest = RunManifest {
            subcommand: self.subcommand.clone(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            config: self.config.clone(),
            overrides: self.overrides.clone(),
            output: output.display().to_string(),
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: SIGNATURE_SCHEMA_VERSION,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = sidecar_path(output);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, json + "\n")
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}
