use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use qflow::config::RunConfig;

use crate::error::CliError;
use crate::sweep::read_consistent;
use crate::train::CONFIG_FILE;

pub const PLOT_HEADER: [&str; 4] = ["series", "seed", "x", "y"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum XAxis {
    Step,
    StatesVisited,
}

impl XAxis {
    fn column(self) -> &'static str {
        match self {
            XAxis::Step => "step",
            XAxis::StatesVisited => "states_visited",
        }
    }
}

/// `(config label, seed)` of a metrics file. Runs written by `sweep` live in
/// `<config>/seed-<n>/`; otherwise the seed comes from a sibling config file,
/// falling back to the input position.
fn run_identity(path: &Path, index: usize) -> (String, u64) {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let name = |p: Option<&Path>| p.and_then(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned());
    if let Some(d) = dir {
        if let Some(seed) = name(Some(d)).and_then(|n| n.strip_prefix("seed-").and_then(|s| s.parse().ok())) {
            let label = name(d.parent()).unwrap_or_else(|| "run".into());
            return (label, seed);
        }
    }
    let seed = dir
        .and_then(|d| fs::read_to_string(d.join(CONFIG_FILE)).ok())
        .and_then(|t| RunConfig::from_toml(&t).ok())
        .map_or(index as u64, |c| c.seed);
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    (name(dir).unwrap_or(stem), seed)
}

/// Tidy long-format rows `series,seed,x,y`, one series per
/// (config, metric). Empty metric cells are skipped.
pub fn plot_data(files: &[PathBuf], x: XAxis, metrics: &[String]) -> Result<Vec<u8>, CliError> {
    if files.is_empty() {
        return Err(CliError::Usage("plot-data needs at least one metrics file".into()));
    }
    let (header, tables) = read_consistent(files)?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let xi = col(x.column())
        .ok_or_else(|| CliError::Runtime(format!("metrics files have no `{}` column", x.column())))?;
    let chosen: Vec<&str> = if metrics.is_empty() {
        header.iter().map(String::as_str).filter(|h| *h != "step" && *h != "states_visited").collect()
    } else {
        metrics.iter().map(String::as_str).collect()
    };
    let mut columns = Vec::with_capacity(chosen.len());
    for m in &chosen {
        let i = col(m).ok_or_else(|| {
            CliError::Usage(format!("unknown metric `{m}`; available: {}", header.join(", ")))
        })?;
        columns.push((*m, i));
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(PLOT_HEADER).map_err(to_err)?;
    for (k, (f, rows)) in files.iter().zip(&tables).enumerate() {
        let (label, seed) = run_identity(f, k);
        let seed = seed.to_string();
        for &(metric, i) in &columns {
            let series = format!("{label}/{metric}");
            for r in rows {
                if !r[i].is_empty() {
                    w.write_record([series.as_str(), seed.as_str(), r[xi].as_str(), r[i].as_str()])
                        .map_err(to_err)?;
                }
            }
        }
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}
