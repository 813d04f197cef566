use std::fs;
use std::path::PathBuf;

use clap::Args;
use qflow::config::{preset, RunConfig};

use crate::error::CliError;

/// Where a run's configuration comes from.
#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct ConfigSource {
    /// Config file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Bundled preset name (see `qflow presets`).
    #[arg(long)]
    pub preset: Option<String>,
}

impl ConfigSource {
    pub fn load(&self) -> Result<RunConfig, CliError> {
        match (&self.config, &self.preset) {
            (Some(path), _) => load_file(path),
            (None, Some(name)) => Ok(preset(name)?),
            (None, None) => Err(CliError::Usage("one of --config or --preset is required".into())),
        }
    }

    /// Preset name, used to expand preset-specific sweeps.
    pub fn name(&self) -> &str {
        self.preset.as_deref().unwrap_or("")
    }
}

pub fn load_file(path: &PathBuf) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::from_toml(&text).map_err(|source| CliError::ConfigFile { path: path.clone(), source })
}

/// Seed precedence: `--seed`, then `QFLOW_SEED`, then the config file.
pub fn resolve_seed(flag: Option<u64>, cfg: &RunConfig) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("QFLOW_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("invalid value for `QFLOW_SEED`: {v:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(cfg.seed),
        Err(e) => Err(CliError::Usage(format!("invalid value for `QFLOW_SEED`: {e}"))),
    }
}
