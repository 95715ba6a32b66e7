//! Sweeps reproducing the rank-collapse experiments and the verification
//! suite, behind the `rankcollapse` binary.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

use anyhow::Result;

pub use config::{Experiment, ExperimentConfig};

/// Command-line options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub full_scale: bool,
    pub negative_controls: bool,
    pub timings: bool,
}

/// Where the artifact went and whether every check passed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub artifact: PathBuf,
    pub passed: bool,
}

pub fn resolve_config(experiment: Experiment, opts: &RunOptions) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(experiment, opts.full_scale, opts.config.as_deref(), &opts.overrides)?;
    if let Some(dir) = &opts.out {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = opts.seed {
        cfg.seeds = vec![seed];
    }
    if opts.negative_controls {
        cfg.negative_controls = true;
    }
    Ok(cfg)
}

/// Runs one experiment and writes its artifact.
pub fn execute(experiment: Experiment, opts: &RunOptions) -> Result<RunSummary> {
    let cfg = resolve_config(experiment, opts)?;
    let path = output::output_path(&cfg)?;
    let mut passed = true;
    match experiment {
        Experiment::Fig1Sweep => output::write_fig1(&path, cfg.epsilon, &experiments::run_fig1_sweep(&cfg)?)?,
        Experiment::Fig2Linear => output::write_fig2(&path, &experiments::run_fig2_linear(&cfg)?)?,
        Experiment::Fig3Trace => output::write_fig3(&path, &experiments::run_fig3_trace(&cfg)?)?,
        Experiment::WidthSweep | Experiment::DepthSweep => {
            output::write_softrank(&path, cfg.epsilon, &experiments::run_width_depth_sweep(&cfg)?)?
        }
        Experiment::VerifyAll => {
            let outcome = experiments::run_verify_all(&cfg)?;
            output::write_verify(&path, &outcome, opts.timings)?;
            passed = outcome.passed;
        }
    }
    Ok(RunSummary { artifact: path, passed })
}
