use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::Duration;

use qflow::config::{expand_sweep, RunConfig};

use crate::error::CliError;
use crate::output::{create_dir, write_atomic};
use crate::train::{self, RunOptions, CONFIG_FILE, METRICS_FILE};

pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub out: PathBuf,
    pub parallel: usize,
    pub steps: Option<usize>,
    pub quiet: bool,
}

struct Job {
    seed: u64,
    config: PathBuf,
    out: PathBuf,
}

/// Runs every seed of every variant and writes per-variant aggregates.
/// Returns the aggregate file paths.
pub fn sweep(preset_name: &str, cfg: &RunConfig, opts: &SweepOptions) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let mut variants = Vec::new();
    let mut jobs = Vec::new();
    for (label, mut variant) in expand_sweep(preset_name, cfg) {
        if let Some(s) = opts.steps {
            variant.train.steps = s;
        }
        variant.validate()?;
        let dir = if label.is_empty() { opts.out.clone() } else { opts.out.join(&label) };
        create_dir(&dir)?;
        let config = dir.join(CONFIG_FILE);
        write_atomic(&config, variant.to_toml().as_bytes())?;
        let seeds = variant.seed_list();
        for &seed in &seeds {
            jobs.push(Job { seed, config: config.clone(), out: dir.join(format!("seed-{seed}")) });
        }
        variants.push((dir, variant, seeds));
    }

    if opts.parallel <= 1 {
        for (dir, variant, seeds) in &variants {
            for &seed in seeds {
                if !opts.quiet {
                    eprintln!("{}: seed {seed}", dir.display());
                }
                let run_opts = RunOptions { out: dir.join(format!("seed-{seed}")), resume: false, quiet: opts.quiet };
                train::run(&train::pin(variant, seed, None), &run_opts)?;
            }
        }
    } else {
        run_processes(&jobs, opts.parallel)?;
    }

    let mut written = Vec::new();
    for (dir, _, seeds) in &variants {
        let files: Vec<PathBuf> = seeds.iter().map(|s| dir.join(format!("seed-{s}")).join(METRICS_FILE)).collect();
        let path = dir.join(AGGREGATE_FILE);
        write_atomic(&path, aggregate(&files)?.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Runs `train` child processes, at most `parallel` at a time.
fn run_processes(jobs: &[Job], parallel: usize) -> Result<(), CliError> {
    let exe = std::env::current_exe().map_err(|e| CliError::Runtime(format!("cannot locate executable: {e}")))?;
    let mut running: Vec<(Child, &Job)> = Vec::new();
    let mut failures = Vec::new();
    let mut pending = jobs.iter();
    loop {
        while running.len() < parallel {
            let Some(job) = pending.next() else { break };
            let child = Command::new(&exe)
                .arg("train")
                .arg("--config")
                .arg(&job.config)
                .arg("--seed")
                .arg(job.seed.to_string())
                .arg("--out")
                .arg(&job.out)
                .arg("--quiet")
                .stdout(Stdio::null())
                .spawn()
                .map_err(|e| CliError::Runtime(format!("cannot start seed {}: {e}", job.seed)))?;
            running.push((child, job));
        }
        if running.is_empty() {
            break;
        }
        let mut i = 0;
        while i < running.len() {
            let status = running[i].0.try_wait().map_err(|e| CliError::Runtime(e.to_string()))?;
            match status {
                Some(s) => {
                    let (_, job) = running.swap_remove(i);
                    if !s.success() {
                        failures.push(format!("{} ({s})", job.out.display()));
                    }
                }
                None => i += 1,
            }
        }
        thread::sleep(Duration::from_millis(20));
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("failed runs: {}", failures.join(", "))))
    }
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::Reader::from_path(path).map_err(CliError::csv(path))?;
    let header = r.headers().map_err(CliError::csv(path))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(CliError::csv(path))?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Reads metrics CSVs that must share a header; returns the header and
/// each file's rows.
pub fn read_consistent(files: &[PathBuf]) -> Result<(Vec<String>, Vec<Vec<Vec<String>>>), CliError> {
    let mut header: Option<(Vec<String>, &PathBuf)> = None;
    let mut tables = Vec::with_capacity(files.len());
    for f in files {
        let (h, rows) = read_table(f)?;
        match &header {
            Some((h0, f0)) if *h0 != h => {
                return Err(CliError::Runtime(format!(
                    "inconsistent columns: {} has [{}] but {} has [{}]",
                    f0.display(),
                    h0.join(","),
                    f.display(),
                    h.join(",")
                )))
            }
            Some(_) => {}
            None => header = Some((h, f)),
        }
        tables.push(rows);
    }
    let header = header.map(|h| h.0).ok_or_else(|| CliError::Usage("no input files".into()))?;
    Ok((header, tables))
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

/// Per-step mean and sample standard deviation of every column across
/// seed runs. Empty cells are skipped; a statistic with too few values is
/// left empty.
pub fn aggregate(files: &[PathBuf]) -> Result<String, CliError> {
    let (header, tables) = read_consistent(files)?;
    if header.first().map(String::as_str) != Some("step") {
        return Err(CliError::Runtime("metrics files must start with a `step` column".into()));
    }
    let steps: Vec<&String> = tables[0].iter().map(|r| &r[0]).collect();
    for (f, t) in files.iter().zip(&tables) {
        if t.len() != steps.len() || t.iter().zip(&steps).any(|(r, s)| &r[0] != *s) {
            return Err(CliError::Runtime(format!(
                "{} has different evaluation steps from {}",
                f.display(),
                files[0].display()
            )));
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| CliError::Runtime(e.to_string());
    let mut out_header = vec!["step".to_string()];
    for c in &header[1..] {
        out_header.push(format!("{c}_mean"));
        out_header.push(format!("{c}_std"));
    }
    w.write_record(&out_header).map_err(to_err)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (i, step) in steps.iter().enumerate() {
        let mut rec = vec![step.to_string()];
        for c in 1..header.len() {
            let mut values = Vec::with_capacity(tables.len());
            for (f, t) in files.iter().zip(&tables) {
                let cell = &t[i][c];
                if cell.is_empty() {
                    continue;
                }
                values.push(cell.parse::<f64>().map_err(|_| {
                    CliError::Runtime(format!("{}: `{}` is not a number in column {}", f.display(), cell, header[c]))
                })?);
            }
            let (m, s) = mean_std(&values);
            rec.push(fmt(m));
            rec.push(fmt(s));
        }
        w.write_record(&rec).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))
}
