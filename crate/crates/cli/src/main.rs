use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rankcollapse_cli::{execute, Experiment, RunOptions};

#[derive(Parser)]
#[command(name = "rankcollapse", version, about = "Weight-decay rank-collapse sweeps and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Squared spectral tails over a (lambda, sigma) grid
    SweepFig1(Common),
    /// Full versus centroid linear minimizers
    SweepFig2(Common),
    /// Spectral tails and class WCSS during training
    TraceFig3(Common),
    /// Mean softrank across hidden widths
    SweepWidth(Common),
    /// Mean softrank across depths
    SweepDepth(Common),
    /// Run the verification suite
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration field, e.g. --set train.max_epochs=100
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (must exist)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a single seed
    #[arg(long)]
    seed: Option<u64>,
    /// Paper-scale defaults (784-dim input, 400-300-400 hidden)
    #[arg(long)]
    full_scale: bool,
    /// Worker threads for grid cells
    #[arg(long)]
    workers: Option<usize>,
    /// Also run the corrupted checks, which must fail
    #[arg(long)]
    negative_controls: bool,
    /// Keep wall-clock runtimes in the verify report
    #[arg(long)]
    timings: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let (experiment, common) = match cli.command {
        Command::SweepFig1(c) => (Experiment::Fig1Sweep, c),
        Command::SweepFig2(c) => (Experiment::Fig2Linear, c),
        Command::TraceFig3(c) => (Experiment::Fig3Trace, c),
        Command::SweepWidth(c) => (Experiment::WidthSweep, c),
        Command::SweepDepth(c) => (Experiment::DepthSweep, c),
        Command::Verify(c) => (Experiment::VerifyAll, c),
    };
    if let Some(n) = common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let opts = RunOptions {
        config: common.config,
        overrides: common.overrides,
        out: common.out,
        seed: common.seed,
        full_scale: common.full_scale,
        negative_controls: common.negative_controls,
        timings: common.timings,
    };
    match execute(experiment, &opts) {
        Ok(summary) => {
            println!("{}", summary.artifact.display());
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("one or more checks failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
