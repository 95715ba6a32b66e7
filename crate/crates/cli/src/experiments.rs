//! The sweeps behind each subcommand. Each returns its rows already sorted
//! by the key columns in declared order.

use std::cmp::Ordering;

use anyhow::{bail, Context, Result};
use rankcollapse::datasets::{autoencoder_labels, load_idx};
use rankcollapse::linear_theory::CentroidProblem;
use rankcollapse::network::train;
use rankcollapse::verify::{centroid_distance_cell, CheckReport, RankCollapseGrid, RankCollapseRow, SoftrankRow, SoftrankSweep};
use rankcollapse::{Dataset, Error, MixtureTask, MlpParams, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};

fn by_keys(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Training data for the trace and width/depth sweeps: the IDX files when
/// configured, otherwise the mixture at the first sigma.
fn experiment_data(cfg: &ExperimentConfig) -> Result<Box<dyn Fn(u64) -> rankcollapse::Result<Dataset> + Sync>> {
    match &cfg.idx {
        Some(src) => {
            let ds = load_idx(&src.images, &src.labels, src.limit)
                .with_context(|| format!("loading {}", src.images.display()))?;
            let ds = if cfg.mixture.autoencoder { autoencoder_labels(&ds) } else { ds };
            Ok(Box::new(move |_| Ok(ds.clone())))
        }
        None => {
            let task = MixtureTask {
                sigma: cfg.sigma_grid[0],
                ..cfg.mixture.clone()
            };
            Ok(Box::new(move |seed| task.sample(seed)))
        }
    }
}

fn output_dim(task: &MixtureTask) -> usize {
    if task.autoencoder {
        task.dim
    } else {
        task.k
    }
}

pub fn run_fig1_sweep(cfg: &ExperimentConfig) -> Result<Vec<RankCollapseRow>> {
    let grid = RankCollapseGrid {
        task: cfg.mixture.clone(),
        widths: cfg.architecture.widths(cfg.mixture.dim, output_dim(&cfg.mixture)),
        hidden_activation: cfg.architecture.hidden_activation,
        output_activation: cfg.architecture.output_activation,
        lambdas: cfg.lambda_grid.clone(),
        sigmas: cfg.sigma_grid.clone(),
        seeds: cfg.seeds.clone(),
        train: cfg.train.clone(),
        rank: cfg.rank,
        epsilon: cfg.epsilon,
    };
    let mut rows = grid.run_cells()?;
    rows.sort_by(|a, b| {
        by_keys(
            &[a.lambda, a.sigma, a.seed as f64, a.layer as f64],
            &[b.lambda, b.sigma, b.seed as f64, b.layer as f64],
        )
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Row {
    pub lambda: f64,
    pub sigma: f64,
    pub seed: u64,
    /// Distance between the trained products; NaN when training diverged.
    pub distance_trained: f64,
    pub distance_closed_form: f64,
    pub thm53_bound: f64,
    pub converged: bool,
}

fn trained_product(cfg: &ExperimentConfig, ds: &Dataset, lambda: f64, seed: u64) -> Result<Option<(rankcollapse::Matrix, bool)>> {
    let widths = cfg.architecture.widths(ds.input_dim(), ds.output_dim());
    let theta0 = MlpParams::init(&widths, cfg.architecture.hidden_activation, cfg.architecture.output_activation, seed)?;
    let tc = TrainConfig {
        weight_decay: lambda,
        seed,
        ..cfg.train.clone()
    };
    match train(&theta0, ds, &tc) {
        Ok((theta, records)) => Ok(Some((theta.product(), records.last().map_or(false, |r| r.converged)))),
        Err(Error::Diverged { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Full-data versus centroid-data linear models over the `(lambda, sigma)`
/// grid, both trained and in closed form.
pub fn run_fig2_linear(cfg: &ExperimentConfig) -> Result<Vec<Fig2Row>> {
    if cfg.lambda_grid.iter().any(|&l| l <= 0.0) {
        bail!("fig2_linear needs lambda > 0");
    }
    let mut cells = Vec::new();
    for &lambda in &cfg.lambda_grid {
        for &sigma in &cfg.sigma_grid {
            for &seed in &cfg.seeds {
                cells.push((lambda, sigma, seed));
            }
        }
    }
    let mut rows: Vec<Fig2Row> = cells
        .par_iter()
        .map(|&(lambda, sigma, seed)| -> Result<Fig2Row> {
            let ds = MixtureTask {
                sigma,
                ..cfg.mixture.clone()
            }
            .sample(seed)?;
            let (closed, bound, _) = centroid_distance_cell(&ds, lambda)?;
            let cp = CentroidProblem::new(&ds.x, &ds.y, ds.class_labels.as_ref().expect("mixture labels"))?;
            let centroid_ds = Dataset::new(cp.x_bar.clone(), cp.y_bar.clone(), ds.class_labels.clone())?;
            let full = trained_product(cfg, &ds, lambda, seed)?;
            let cent = trained_product(cfg, &centroid_ds, lambda, seed)?;
            let (distance_trained, converged) = match (full, cent) {
                (Some((a, ca)), Some((b, cb))) => (a.sub(&b).frobenius_norm(), ca && cb),
                _ => (f64::NAN, false),
            };
            Ok(Fig2Row {
                lambda,
                sigma,
                seed,
                distance_trained,
                distance_closed_form: closed,
                thm53_bound: bound,
                converged,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| by_keys(&[a.lambda, a.sigma, a.seed as f64], &[b.lambda, b.sigma, b.seed as f64]));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Row {
    pub epoch: usize,
    /// 0-based weight index.
    pub layer: usize,
    pub lambda: f64,
    /// `e(1), ..., e(n + 1)`.
    pub e_tail: Vec<f64>,
    /// Class-partition WCSS of the representation entering this weight.
    pub class_wcss: f64,
}

/// Spectral tails and class WCSS per layer, recorded during training, for
/// each weight decay at the first seed.
pub fn run_fig3_trace(cfg: &ExperimentConfig) -> Result<Vec<Fig3Row>> {
    let seed = cfg.seeds[0];
    let ds = experiment_data(cfg)?(seed)?;
    if ds.class_labels.is_none() {
        bail!("fig3_trace needs class labels");
    }
    let per_lambda: Vec<Vec<Fig3Row>> = cfg
        .lambda_grid
        .par_iter()
        .map(|&lambda| -> Result<Vec<Fig3Row>> {
            let widths = cfg.architecture.widths(ds.input_dim(), ds.output_dim());
            let theta0 = MlpParams::init(&widths, cfg.architecture.hidden_activation, cfg.architecture.output_activation, seed)?;
            let tc = TrainConfig {
                weight_decay: lambda,
                seed,
                ..cfg.train.clone()
            };
            let (_, records) = train(&theta0, &ds, &tc)?;
            let mut rows = Vec::new();
            for rec in &records {
                let tcv = rec.per_layer_tcv.as_ref().expect("labelled data records class WCSS");
                for (layer, spectrum) in rec.per_layer_spectra.iter().enumerate() {
                    rows.push(Fig3Row {
                        epoch: rec.epoch,
                        layer,
                        lambda,
                        e_tail: spectrum.e_tail.clone(),
                        class_wcss: tcv[layer],
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<Fig3Row> = per_lambda.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        by_keys(
            &[a.epoch as f64, a.layer as f64, a.lambda],
            &[b.epoch as f64, b.layer as f64, b.lambda],
        )
    });
    Ok(rows)
}

/// Mean hidden-layer softrank over widths or depths.
pub fn run_width_depth_sweep(cfg: &ExperimentConfig) -> Result<Vec<SoftrankRow>> {
    let mut sweep = match cfg.experiment {
        Experiment::WidthSweep => SoftrankSweep::widths(&cfg.widths, cfg.width_sweep_depth),
        Experiment::DepthSweep => SoftrankSweep::depths(&cfg.depths, cfg.depth_sweep_width),
        other => bail!("{other:?} is not a width or depth sweep"),
    };
    sweep.task = MixtureTask {
        sigma: cfg.sigma_grid[0],
        ..cfg.mixture.clone()
    };
    sweep.lambdas = cfg.lambda_grid.clone();
    sweep.seeds = cfg.seeds.clone();
    sweep.train = cfg.train.clone();
    sweep.epsilon = cfg.epsilon;
    let data = experiment_data(cfg)?;
    let mut rows = sweep.run_with(|seed| data(seed))?;
    rows.sort_by(|a, b| {
        by_keys(
            &[a.width_or_depth as f64, a.lambda, a.seed as f64],
            &[b.width_or_depth as f64, b.lambda, b.seed as f64],
        )
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOutcome {
    pub seed: u64,
    /// True when every check passes (or is not applicable) and every
    /// negative control fails.
    pub passed: bool,
    pub checks: Vec<CheckReport>,
    pub negative_controls: Vec<CheckReport>,
}

pub fn run_verify_all(cfg: &ExperimentConfig) -> Result<VerifyOutcome> {
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let checks = cfg.verify.run(seed)?;
    let negative_controls = if cfg.negative_controls {
        cfg.verify.run_negative_controls(seed)?
    } else {
        Vec::new()
    };
    let passed = checks.iter().chain(&negative_controls).all(CheckReport::acceptable);
    Ok(VerifyOutcome {
        seed,
        passed,
        checks,
        negative_controls,
    })
}
