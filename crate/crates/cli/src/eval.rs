use std::fs;
use std::path::Path;

use qflow::config::{EnvVisitor, RunConfig};
use qflow::env::Environment;
use qflow::trainer::{checkpoint_meta, MetricsRecord, Trainer};

use crate::error::CliError;

/// Run config stored in a checkpoint written by `train`.
pub fn checkpoint_config(path: &Path, bytes: &[u8]) -> Result<RunConfig, CliError> {
    let meta = checkpoint_meta(bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    RunConfig::from_toml(&meta)
        .map_err(|e| CliError::Runtime(format!("{}: stored run config is unusable: {e}", path.display())))
}

/// Metrics of a saved model, as CSV text with a header.
pub fn eval(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    let cfg = checkpoint_config(path, &bytes)?;
    let env = cfg.build_env()?;
    let record = env.visit(Job { bytes })?;
    Ok(MetricsRecord::to_csv(&[record]))
}

struct Job {
    bytes: Vec<u8>,
}

impl EnvVisitor for Job {
    type Output = Result<MetricsRecord, CliError>;

    fn visit<E: Environment + Clone + 'static>(self, env: E) -> Self::Output {
        let mut t = Trainer::from_checkpoint_bytes(&self.bytes, env)?;
        Ok(t.evaluate()?)
    }
}
