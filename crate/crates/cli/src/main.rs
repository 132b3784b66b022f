use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geomatch_cli::commands::{eval, matching, report, synth};
use geomatch_cli::{init_threads, Result};

#[derive(Parser)]
#[command(name = "geomatch", version, about = "Geometry-aware dense matching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic pair-sweep dataset.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `synth.seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Every integer offset with 25 pairs each, instead of the desk-scale sweep.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Run the enabled matching methods on every pair of a dataset.
    Match {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of baseline, geo, geo+anchors, anchors-concat, gt.
        #[arg(long)]
        methods: Option<String>,
    },
    /// Compute one metric over a match directory and write it as CSV.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        matches: PathBuf,
        #[arg(long, value_enum)]
        metric: eval::Metric,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render plots and a summary from evaluation CSVs.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Synth {
            config,
            out,
            seed,
            paper_scale,
        } => {
            let m = synth::run(config.as_deref(), &out, &synth::SynthOptions { seed, paper_scale })?;
            eprintln!("wrote {} pairs to {}", m.pairs.len(), out.display());
        }
        Command::Match {
            dataset,
            config,
            out,
            methods,
        } => {
            let s = matching::run(&dataset, config.as_deref(), &out, methods.as_deref())?;
            eprintln!("matched {} pairs, {} failures", s.succeeded, s.failures.len());
        }
        Command::Eval {
            dataset,
            matches,
            metric,
            config,
            out,
        } => eval::run(&dataset, &matches, metric, config.as_deref(), &out)?,
        Command::Report { out, inputs } => {
            for p in report::run(&out, &inputs)? {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
