use std::fs;
use std::path::{Path, PathBuf};

use qflow::config::{AlgoConfig, EnvVisitor, RunConfig, TrainConfig};
use qflow::env::Environment;
use qflow::trainer::{TrainError, Trainer, CSV_HEADER};

use crate::error::CliError;
use crate::output::{create_dir, write_atomic};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.qfc";
pub const CONFIG_FILE: &str = "config.toml";
pub const DUMP_FILE: &str = "nonfinite_dump.txt";

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub resume: bool,
    pub quiet: bool,
}

/// Outcome of a finished run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub step: u64,
}

/// The config actually run: one seed, optional step override.
pub fn pin(cfg: &RunConfig, seed: u64, steps: Option<usize>) -> RunConfig {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    cfg.seeds.clear();
    if let Some(s) = steps {
        cfg.train.steps = s;
    }
    cfg
}

/// Trains one seed into `opts.out`: metrics CSV, checkpoint and resolved config.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let (env, algo, train) = cfg.resolve(None)?;
    create_dir(&opts.out)?;
    let meta = cfg.to_toml();
    write_atomic(&opts.out.join(CONFIG_FILE), meta.as_bytes())?;
    env.visit(Job { algo, train, meta, opts: opts.clone() })
}

struct Job {
    algo: AlgoConfig,
    train: TrainConfig,
    meta: String,
    opts: RunOptions,
}

impl EnvVisitor for Job {
    type Output = Result<RunSummary, CliError>;

    fn visit<E: Environment + Clone + 'static>(self, env: E) -> Self::Output {
        let out = &self.opts.out;
        let ckpt = out.join(CHECKPOINT_FILE);
        let metrics = out.join(METRICS_FILE);

        let (mut trainer, mut rows) = if self.opts.resume && ckpt.exists() {
            let mut t = Trainer::load(&ckpt, env)?;
            check_resumable(&t, &self.algo, &self.train)?;
            t.extend_steps(self.train.steps);
            t.set_meta(self.meta);
            let rows = rows_up_to(&metrics, t.step())?;
            if !self.opts.quiet {
                eprintln!("resuming from step {}", t.step());
            }
            (t, rows)
        } else {
            let mut t = Trainer::new(env, self.algo, self.train)?;
            t.set_meta(self.meta);
            (t, Vec::new())
        };

        while !trainer.is_finished() {
            if let Err(e) = trainer.train_step() {
                if let TrainError::NonFinite { dump, .. } = &e {
                    write_atomic(&out.join(DUMP_FILE), dump.as_bytes())?;
                }
                return Err(e.into());
            }
            if trainer.eval_due() {
                let m = trainer.evaluate()?;
                let row = m.csv_row();
                if !self.opts.quiet {
                    eprintln!("{row}");
                }
                rows.push(row);
                // Metrics first: a crash in between leaves rows past the
                // checkpoint, which a resume discards and recomputes.
                write_atomic(&metrics, metrics_text(&rows).as_bytes())?;
                trainer.save(&ckpt)?;
            }
        }
        if !metrics.exists() {
            write_atomic(&metrics, metrics_text(&rows).as_bytes())?;
        }
        Ok(RunSummary { step: trainer.step() })
    }
}

fn check_resumable<E: Environment>(t: &Trainer<E>, algo: &AlgoConfig, train: &TrainConfig) -> Result<(), CliError> {
    let mut saved = t.config().clone();
    saved.steps = train.steps;
    if t.algo() != algo || &saved != train {
        return Err(CliError::Runtime(
            "checkpoint was written with different settings; use a fresh --out directory".into(),
        ));
    }
    if t.step() > train.steps as u64 {
        return Err(CliError::Runtime(format!(
            "checkpoint is at step {}, past the requested {} steps",
            t.step(),
            train.steps
        )));
    }
    Ok(())
}

fn metrics_text(rows: &[String]) -> String {
    let mut s = String::with_capacity(CSV_HEADER.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>());
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    s
}

/// Data rows of an existing metrics file whose step is at most `step`.
fn rows_up_to(path: &Path, step: u64) -> Result<Vec<String>, CliError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(CliError::Runtime(format!("{}: unexpected header", path.display())));
    }
    let mut rows = Vec::new();
    for line in lines {
        let s: u64 = line
            .split(',')
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| CliError::Runtime(format!("{}: bad row {line:?}", path.display())))?;
        if s <= step {
            rows.push(line.to_string());
        }
    }
    Ok(rows)
}
