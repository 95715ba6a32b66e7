//! Experiment configuration: per-experiment defaults, a TOML file merged on
//! top, then `--set key=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rankcollapse::verify::{geometric_grid, SuiteConfig};
use rankcollapse::{Activation, MixtureTask, TrainConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Fig1Sweep,
    Fig2Linear,
    Fig3Trace,
    WidthSweep,
    DepthSweep,
    VerifyAll,
}

impl Experiment {
    pub fn output_file(self) -> &'static str {
        match self {
            Experiment::Fig1Sweep => "fig1_sweep.csv",
            Experiment::Fig2Linear => "fig2_linear.csv",
            Experiment::Fig3Trace => "fig3_trace.csv",
            Experiment::WidthSweep => "width_sweep.csv",
            Experiment::DepthSweep => "depth_sweep.csv",
            Experiment::VerifyAll => "verify.json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    /// Hidden widths; input and output sizes follow from the data.
    pub hidden_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden_widths: vec![16, 12, 16],
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
        }
    }
}

impl Architecture {
    pub fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(&self.hidden_widths);
        w.push(output);
        w
    }
}

/// IDX image and label files used instead of the synthetic mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub images: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub lambda_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub architecture: Architecture,
    pub mixture: MixtureTask,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Rank at which squared tails are read off.
    pub rank: usize,
    /// Softrank threshold.
    pub epsilon: f64,
    pub widths: Vec<usize>,
    /// Hidden layers in each network of the width sweep.
    pub width_sweep_depth: usize,
    pub depths: Vec<usize>,
    /// Hidden width in each network of the depth sweep.
    pub depth_sweep_width: usize,
    /// Replaces the mixture for the trace and width/depth sweeps.
    pub idx: Option<IdxSource>,
    pub verify: SuiteConfig,
    pub negative_controls: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::defaults(Experiment::Fig1Sweep, false)
    }
}

impl ExperimentConfig {
    /// Built-in defaults of an experiment at reduced or paper scale.
    pub fn defaults(experiment: Experiment, full_scale: bool) -> Self {
        let mut cfg = Self {
            experiment,
            lambda_grid: vec![1e-4, 3e-3, 0.1],
            sigma_grid: vec![0.05, 0.15, 0.5],
            architecture: Architecture::default(),
            mixture: MixtureTask::default(),
            train: TrainConfig {
                learning_rate: 0.05,
                max_epochs: 6000,
                grad_tol: 1e-4,
                ..TrainConfig::default()
            },
            seeds: vec![0, 1],
            output_dir: PathBuf::from("out"),
            rank: 4,
            epsilon: 0.1,
            widths: vec![16, 32, 64],
            width_sweep_depth: 3,
            depths: vec![2, 3, 4],
            depth_sweep_width: 16,
            idx: None,
            verify: SuiteConfig::default(),
            negative_controls: false,
        };
        match experiment {
            Experiment::Fig1Sweep | Experiment::VerifyAll => {}
            Experiment::Fig2Linear => {
                cfg.lambda_grid = geometric_grid(1e-3, 1e-1, 4);
                cfg.sigma_grid = geometric_grid(0.05, 0.5, 4);
                cfg.architecture = Architecture {
                    hidden_widths: vec![],
                    hidden_activation: Activation::Identity,
                    output_activation: Activation::Identity,
                };
                cfg.mixture = MixtureTask {
                    dim: 16,
                    k: 4,
                    per_cluster: 125,
                    sigma: 0.05,
                    mean_radius: 2.5,
                    autoencoder: false,
                };
                cfg.train = TrainConfig {
                    learning_rate: 0.3,
                    max_epochs: 100_000,
                    grad_tol: 1e-9,
                    train_biases: false,
                    ..TrainConfig::default()
                };
                cfg.seeds = vec![0];
            }
            Experiment::Fig3Trace => {
                cfg.lambda_grid = vec![5e-4, 5e-3, 5e-2];
                cfg.sigma_grid = vec![0.15];
                cfg.seeds = vec![0];
                cfg.train = TrainConfig {
                    learning_rate: 0.05,
                    max_epochs: 3000,
                    grad_tol: 1e-6,
                    record_every: 100,
                    ..TrainConfig::default()
                };
            }
            Experiment::WidthSweep | Experiment::DepthSweep => {
                cfg.lambda_grid = vec![0.01, 0.05, 0.1];
                cfg.sigma_grid = vec![0.05];
                cfg.seeds = vec![0];
                cfg.train = TrainConfig {
                    learning_rate: 0.05,
                    max_epochs: 3000,
                    grad_tol: 1e-4,
                    ..TrainConfig::default()
                };
            }
        }
        if full_scale {
            cfg.mixture.dim = 784;
            cfg.mixture.k = 10;
            cfg.mixture.per_cluster = 1000;
            cfg.rank = 10;
            if experiment != Experiment::Fig2Linear {
                cfg.architecture.hidden_widths = vec![400, 300, 400];
                cfg.widths = vec![100, 200, 400];
                cfg.depth_sweep_width = 400;
            }
        }
        cfg
    }

    /// Defaults, then the file (if any), then each `key=value` override.
    pub fn load(experiment: Experiment, full_scale: bool, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let defaults = Self::defaults(experiment, full_scale);
        let mut value = Value::try_from(&defaults).context("serializing defaults")?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let table: Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
            merge(&mut value, Value::Table(table));
        }
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        let cfg: Self = value.try_into().context("invalid configuration")?;
        if cfg.experiment != experiment {
            bail!(
                "config file is for {:?} but the subcommand runs {:?}",
                cfg.experiment,
                experiment
            );
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let needs_grids = self.experiment != Experiment::VerifyAll;
        if needs_grids && (self.lambda_grid.is_empty() || self.sigma_grid.is_empty() || self.seeds.is_empty()) {
            bail!("lambda_grid, sigma_grid and seeds must be non-empty");
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            bail!("lambda_grid entries must be finite and >= 0");
        }
        if self.sigma_grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            bail!("sigma_grid entries must be finite and >= 0");
        }
        match self.experiment {
            Experiment::WidthSweep if self.widths.is_empty() => bail!("widths must be non-empty"),
            Experiment::DepthSweep if self.depths.is_empty() => bail!("depths must be non-empty"),
            Experiment::Fig2Linear
                if self.architecture.hidden_activation != Activation::Identity
                    || self.architecture.output_activation != Activation::Identity =>
            {
                bail!("fig2_linear needs identity activations")
            }
            _ => {}
        }
        Ok(())
    }
}

fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Table(b), Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(existing) => merge(existing, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `a.b.c=value`, where `value` is read as a TOML value and falls back to a
/// bare string.
fn apply_override(root: &mut Value, item: &str) -> Result<()> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| anyhow!("--set expects key=value, got {item:?}"))?;
    let parsed: Value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("malformed key {path:?}");
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| anyhow!("{path}: {key} is not inside a table"))?;
        node = table
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| anyhow!("{path}: parent is not a table"))?;
    table.insert(keys[keys.len() - 1].to_string(), parsed);
    Ok(())
}
