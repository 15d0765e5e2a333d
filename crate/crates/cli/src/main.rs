use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use uqnet_cli::commands::{self, Outcome};
use uqnet_cli::RunConfig;
use uqnet_core::par::{with_threads, Exec};

#[derive(Parser)]
#[command(name = "uqnet", version, about = "Uncertainty quantification experiments for EEG classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (1 runs sequentially).
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic population as an EPOC file.
    Generate(Common),
    /// Train every (held-out subject, method) cell.
    Train {
        #[command(flatten)]
        common: Common,
        /// Checkpoint root [default: <out>/checkpoints].
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Score trained checkpoints and write report.json, accuracy.csv, auroc.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Print result tables and write rejection-curve SVGs.
    Report {
        /// Path to report.json.
        #[arg(long)]
        report: PathBuf,
        /// SVG directory [default: the report's directory].
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

struct Resolved {
    cfg: RunConfig,
    out: PathBuf,
    jobs: usize,
}

fn resolve(c: &Common) -> Result<Resolved> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let out = c.out.clone().unwrap_or_else(|| cfg.output.clone());
    Ok(Resolved { cfg, out, jobs: c.jobs.max(1) })
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Generate(c) => {
            let r = resolve(&c)?;
            commands::generate(&r.cfg, &r.out)
        }
        Command::Train { common, checkpoints } => {
            let r = resolve(&common)?;
            let ck = checkpoints.unwrap_or_else(|| r.out.join("checkpoints"));
            with_threads(r.jobs, || commands::train(&r.cfg, &ck, Exec::from_jobs(r.jobs)))
        }
        Command::Evaluate { common, checkpoints } => {
            let r = resolve(&common)?;
            let ck = checkpoints.unwrap_or_else(|| r.out.join("checkpoints"));
            with_threads(r.jobs, || commands::evaluate(&r.cfg, &ck, &r.out, Exec::from_jobs(r.jobs))).map(|(o, _)| o)
        }
        Command::Report { report, out } => {
            let dir = out.unwrap_or_else(|| report.parent().map(PathBuf::from).unwrap_or_default());
            let (outcome, tables) = commands::report(&report, &dir)?;
            print!("{tables}");
            Ok(outcome)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("UQNET_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(o) => {
            for p in &o.written {
                log::info!("wrote {}", p.display());
            }
            if o.failed_cells > 0 {
                eprintln!("error: {} cell(s) failed", o.failed_cells);
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
