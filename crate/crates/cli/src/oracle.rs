use std::fs;
use std::path::Path;

use qflow::config::{EnvVisitor, RunConfig};
use qflow::env::{
    geometric_mean_target, reward_target, terminating_probabilities, uniform_policy, Dag, Environment,
};
use qflow::trainer::Trainer;

use crate::error::CliError;
use crate::eval::checkpoint_config;

pub const ORACLE_HEADER: [&str; 4] = ["state", "encoding", "probability", "target"];

/// Exact terminating distribution of the uniform policy, or of a saved
/// model, next to the target distribution. The target is `R/Z` for
/// deterministic rewards and `∝ exp(E[log R])` otherwise.
pub fn dp(cfg: Option<RunConfig>, checkpoint: Option<&Path>) -> Result<Vec<u8>, CliError> {
    let (cfg, bytes) = match (cfg, checkpoint) {
        (_, Some(path)) => {
            let bytes = fs::read(path).map_err(CliError::io(path))?;
            (checkpoint_config(path, &bytes)?, Some(bytes))
        }
        (Some(cfg), None) => (cfg, None),
        (None, None) => return Err(CliError::Usage("oracle dp needs --config, --preset or --checkpoint".into())),
    };
    let env = cfg.build_env()?;
    env.visit(Job { bytes })
}

struct Job {
    bytes: Option<Vec<u8>>,
}

impl EnvVisitor for Job {
    type Output = Result<Vec<u8>, CliError>;

    fn visit<E: Environment + Clone + 'static>(self, env: E) -> Self::Output {
        let dag = Dag::build(&env).map_err(|e| CliError::Runtime(format!("cannot enumerate: {e}")))?;
        let probs = match self.bytes {
            None => terminating_probabilities(&env, &dag, |s| uniform_policy(&env, s))
                .map_err(|e| CliError::Runtime(e.to_string()))?,
            Some(bytes) => {
                let t = Trainer::from_checkpoint_bytes(&bytes, env.clone())?;
                t.exact_terminating()?.ok_or_else(|| {
                    CliError::Runtime("model too large for exact evaluation; raise train.exact_limit".into())
                })?
            }
        };
        let target = if env.has_stochastic_reward() {
            geometric_mean_target(&env, &dag)
        } else {
            reward_target(&env, &dag)
        }
        .map_err(|e| CliError::Runtime(e.to_string()))?;

        let mut w = csv::Writer::from_writer(Vec::new());
        let to_csv = |e: csv::Error| CliError::Runtime(e.to_string());
        w.write_record(ORACLE_HEADER).map_err(to_csv)?;
        for ((x, p), t) in dag.terminal_states().zip(&probs).zip(&target) {
            let hex: String = env.encode(x).iter().map(|b| format!("{b:02x}")).collect();
            w.write_record([env.display(x), hex, p.to_string(), t.to_string()]).map_err(to_csv)?;
        }
        w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
    }
}
