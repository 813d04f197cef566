//! `qflow`: train, evaluate and inspect GFlowNet samplers.

mod error;
mod eval;
mod oracle;
mod output;
mod plot;
mod source;
mod sweep;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qflow::config::{preset_names, PRESETS};

use error::CliError;
use output::write_atomic;
use plot::XAxis;
use source::ConfigSource;

#[derive(Parser, Debug)]
#[command(name = "qflow", version, about = "Quantile-flow GFlowNet experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one seed; writes metrics.csv, checkpoint.qfc and config.toml under --out.
    Train(TrainArgs),
    /// Recompute metrics from a checkpoint.
    Eval(EvalArgs),
    /// Exact oracles.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Train every seed of a config and aggregate the metrics.
    Sweep(SweepArgs),
    /// Merge metrics CSVs into long-format `series,seed,x,y` rows.
    PlotData(PlotArgs),
    /// List bundled presets, or print one.
    Presets {
        name: Option<String>,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Overrides `QFLOW_SEED` and the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `train.steps`.
    #[arg(long)]
    steps: Option<usize>,
    /// Continue from the checkpoint in --out if there is one.
    #[arg(long)]
    resume: bool,
    /// Do not print metrics while training.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Also write eval.csv into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum OracleCommand {
    /// Exact terminating distribution (uniform policy, or a checkpoint's) and the target.
    Dp(DpArgs),
}

#[derive(Args, Debug)]
struct DpArgs {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Use this model's policy instead of the uniform one.
    #[arg(long, conflicts_with_all = ["config", "preset"])]
    checkpoint: Option<PathBuf>,
    /// Output directory; the result goes to oracle_dp.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    source: ConfigSource,
    #[arg(long)]
    out: PathBuf,
    /// Number of seed runs in flight, each in its own process.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Metrics CSV files.
    files: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = XAxis::StatesVisited)]
    x: XAxis,
    /// Metric columns to emit; all of them by default.
    #[arg(long = "metric")]
    metrics: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// File name inside --out.
    #[arg(long, default_value = "plot_data.csv")]
    name: String,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => {
            let cfg = a.source.load()?;
            let seed = source::resolve_seed(a.seed, &cfg)?;
            let opts = train::RunOptions { out: a.out, resume: a.resume, quiet: a.quiet };
            let summary = train::run(&train::pin(&cfg, seed, a.steps), &opts)?;
            println!("finished step {} in {}", summary.step, opts.out.display());
        }
        Command::Eval(a) => {
            let text = eval::eval(&a.checkpoint)?;
            if let Some(out) = &a.out {
                write_atomic(&out.join("eval.csv"), text.as_bytes())?;
            }
            print!("{text}");
        }
        Command::Oracle(OracleCommand::Dp(a)) => {
            let cfg = if a.checkpoint.is_some() {
                None
            } else {
                let src = ConfigSource { config: a.config, preset: a.preset };
                Some(src.load()?)
            };
            let bytes = oracle::dp(cfg, a.checkpoint.as_deref())?;
            let path = a.out.join("oracle_dp.csv");
            write_atomic(&path, &bytes)?;
            println!("wrote {}", path.display());
        }
        Command::Sweep(a) => {
            let cfg = a.source.load()?;
            let opts = sweep::SweepOptions { out: a.out, parallel: a.parallel.max(1), steps: a.steps, quiet: a.quiet };
            for path in sweep::sweep(a.source.name(), &cfg, &opts)? {
                println!("wrote {}", path.display());
            }
        }
        Command::PlotData(a) => {
            let bytes = plot::plot_data(&a.files, a.x, &a.metrics)?;
            let path = a.out.join(&a.name);
            write_atomic(&path, &bytes)?;
            println!("wrote {}", path.display());
        }
        Command::Presets { name: None } => {
            for n in preset_names() {
                println!("{n}");
            }
        }
        Command::Presets { name: Some(n) } => {
            let text = PRESETS
                .iter()
                .find(|p| p.0 == n)
                .map(|p| p.1)
                .ok_or_else(|| CliError::Config(qflow::config::ConfigError::UnknownPreset(n)))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
