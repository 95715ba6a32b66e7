//! Self-contained checks that evaluate the rank-collapse statements on
//! seeded synthetic problems and report the outcome as [`CheckReport`]s.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{build_partition, class_partition_wcss, gaussian_tcv_bound, label_tcv, wcss, DEFAULT_RESTARTS};
use crate::datasets::{sample_gaussian_mixture, Dataset, GaussianMixtureSpec, MixtureTask};
use crate::error::Result;
use crate::linear_theory::{
    centroid_minimizer, rank_constrained_minimizer, ridge_minimizer, thm53_bound, thm54_bound, CentroidProblem,
    RidgeProblem,
};
use crate::network::{
    batch_gradient, estimate_hessian_constant, lemma33_residual, stationarity_residual, train, Activation, MlpParams,
    TrainConfig,
};
use crate::numerics::{svd, Matrix};
use crate::rng::{stream, stream_id, NormalSampler};

const DATA_STREAM: u16 = 0x7664;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

/// How a report counts toward the suite verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckRole {
    /// Must pass.
    Check,
    /// Deliberately corrupted check that must fail.
    NegativeControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub status: CheckStatus,
    pub role: CheckRole,
    pub observed: BTreeMap<String, f64>,
    pub bounds: BTreeMap<String, f64>,
    pub config_digest: String,
    pub runtime_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl CheckReport {
    fn new(name: &str, digest: String) -> Self {
        Self {
            name: name.to_string(),
            passed: false,
            status: CheckStatus::Fail,
            role: CheckRole::Check,
            observed: BTreeMap::new(),
            bounds: BTreeMap::new(),
            config_digest: digest,
            runtime_ms: 0,
            reason: None,
        }
    }

    fn observe(&mut self, key: impl Into<String>, value: f64) {
        self.observed.insert(key.into(), value);
    }

    fn bound(&mut self, key: impl Into<String>, value: f64) {
        self.bounds.insert(key.into(), value);
    }

    fn finish(mut self, passed: bool, started: Instant) -> Self {
        self.passed = passed;
        self.status = if passed { CheckStatus::Pass } else { CheckStatus::Fail };
        self.runtime_ms = started.elapsed().as_millis() as u64;
        self
    }

    fn not_applicable(mut self, reason: &str, started: Instant) -> Self {
        self.passed = false;
        self.status = CheckStatus::NotApplicable;
        self.reason = Some(reason.to_string());
        self.runtime_ms = started.elapsed().as_millis() as u64;
        self
    }

    pub fn as_negative_control(mut self) -> Self {
        self.role = CheckRole::NegativeControl;
        self.name = format!("{}_negative_control", self.name);
        self
    }

    /// True when the report does not spoil the suite: checks must pass (or be
    /// not applicable), negative controls must fail.
    pub fn acceptable(&self) -> bool {
        match self.role {
            CheckRole::Check => self.status != CheckStatus::Fail,
            CheckRole::NegativeControl => self.status == CheckStatus::Fail,
        }
    }
}

/// Hex SHA-256 prefix of the check name, its configuration and the seed.
pub fn config_digest<T: Serialize>(name: &str, config: &T, seed: u64) -> String {
    let payload = serde_json::json!({ "name": name, "config": config, "seed": seed });
    let hash = Sha256::digest(payload.to_string().as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Least-squares slope of `ln y` against `ln x`; `None` without two distinct
/// positive abscissae or with a non-positive ordinate.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if den == 0.0 {
        return None;
    }
    Some(lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / den)
}

/// Largest relative increase along a sequence that should not increase:
/// `max_i (v_{i+1} - v_i) / max(|v_i|, floor)`, or 0 when it never rises.
pub fn max_relative_rise(values: &[f64], floor: f64) -> f64 {
    values
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0].abs().max(floor))
        .fold(0.0, f64::max)
}

/// `n` points geometrically spaced from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo * (hi / lo).powf(i as f64 / (n - 1) as f64)
                }
            })
            .collect(),
    }
}

fn gaussian_matrix(rows: usize, cols: usize, seed: u64, tag: u32) -> Matrix {
    let mut s = NormalSampler::new(stream(seed, stream_id(DATA_STREAM, tag, 0)));
    Matrix::from_fn(rows, cols, |_, _| s.next())
}

/// Small batches give low-rank gradients: the batch gradient of every layer
/// has numerical rank at most the batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Prop31Check {
    /// Representation widths from input to output.
    pub widths: Vec<usize>,
    pub samples: usize,
    pub batch_sizes: Vec<usize>,
    pub rel_tol: f64,
}

impl Default for Prop31Check {
    fn default() -> Self {
        Self {
            widths: vec![8, 8, 6, 8],
            samples: 20,
            batch_sizes: vec![1, 2, 5],
            rel_tol: 1e-8,
        }
    }
}

impl Prop31Check {
    pub const NAME: &'static str = "prop31_gradient_rank";

    pub fn run(&self, seed: u64) -> Result<CheckReport> {
        let started = Instant::now();
        let mut report = CheckReport::new(Self::NAME, config_digest(Self::NAME, self, seed));
        let theta = MlpParams::init(&self.widths, Activation::Tanh, Activation::Tanh, seed)?;
        let d_in = self.widths[0];
        let d_out = *self.widths.last().unwrap();
        let ds = Dataset::new(
            gaussian_matrix(d_in, self.samples, seed, 0),
            gaussian_matrix(d_out, self.samples, seed, 1),
            None,
        )?;
        let mut ok = true;
        for &k in &self.batch_sizes {
            let batch: Vec<usize> = (0..k).collect();
            let grads = batch_gradient(&theta, &ds, &batch)?;
            let mut worst_ratio = 0.0f64;
            let mut worst_rank = 0usize;
            for g in &grads {
                let s = svd(g)?.singular_values;
                let rank = crate::numerics::rank_of_values(&s, self.rel_tol);
                let ratio = match (s.first(), s.get(k)) {
                    (Some(&top), Some(&next)) if top > 0.0 => next / top,
                    _ => 0.0,
                };
                worst_rank = worst_rank.max(rank);
                worst_ratio = worst_ratio.max(ratio);
                ok &= rank <= k && ratio <= self.rel_tol;
            }
            report.observe(format!("max_rank_k{k}"), worst_rank as f64);
            report.bound(format!("max_rank_k{k}"), k as f64);
            report.observe(format!("max_tail_ratio_k{k}"), worst_ratio);
            report.bound(format!("max_tail_ratio_k{k}"), self.rel_tol);
        }
        Ok(report.finish(ok, started))
    }
}

pub fn check_prop31(seed: u64) -> Result<CheckReport> {
    Prop31Check::default().run(seed)
}

/// Converged training satisfies `grad L_0 + 2 lambda W_l = 0` on every layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StationarityCheck {
    pub task: MixtureTask,
    pub hidden: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub grad_tol: f64,
    pub tolerance: f64,
}

impl Default for StationarityCheck {
    fn default() -> Self {
        Self {
            task: MixtureTask {
                dim: 16,
                k: 4,
                per_cluster: 50,
                sigma: 0.2,
                mean_radius: 1.0,
                autoencoder: true,
            },
            hidden: 8,
            lambda: 0.05,
            learning_rate: 0.2,
            max_epochs: 200_000,
            grad_tol: 1e-6,
            tolerance: 1e-4,
        }
    }
}

impl StationarityCheck {
    pub const NAME: &'static str = "stationarity_equation";

    pub fn run(&self, seed: u64) -> Result<CheckReport> {
        let started = Instant::now();
        let report = CheckReport::new(Self::NAME, config_digest(Self::NAME, self, seed));
        if !(self.lambda > 0.0) {
            return Ok(report.not_applicable("weight decay must be positive", started));
        }
        let mut report = report;
        let ds = self.task.sample(seed)?;
        let d = self.task.dim;
        let theta0 = MlpParams::init(&[d, self.hidden, ds.output_dim()], Activation::Tanh, Activation::Identity, seed)?;
        let cfg = TrainConfig {
            weight_decay: self.lambda,
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            grad_tol: self.grad_tol,
            seed,
            ..TrainConfig::default()
        };
        let (theta, records) = train(&theta0, &ds, &cfg)?;
        let last = records.last().expect("train always records the final state");
        let residual = stationarity_residual(&theta, &ds, self.lambda)?;
        report.observe("residual", residual);
        report.bound("residual", self.tolerance);
        report.observe("grad_norm", last.grad_norm);
        report.bound("grad_norm", self.grad_tol);
        report.observe("epochs", last.epoch as f64);
        if !last.converged {
            report.reason = Some(format!("gradient norm {:.3e} after {} epochs", last.grad_norm, last.epoch));
        }
        Ok(report.finish(last.converged && residual <= self.tolerance, started))
    }
}

pub fn check_stationarity(seed: u64) -> Result<CheckReport> {
    StationarityCheck::default().run(seed)
}

/// Gradient descent on a single linear layer reaches the closed-form ridge
/// minimizer, where the gradient vanishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClosedFormCheck {
    pub dim: usize,
    pub out_dim: usize,
    pub n: usize,
    pub noise: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
    pub closed_form_grad_tol: f64,
}

impl Default for ClosedFormCheck {
    fn default() -> Self {
        Self {
            dim: 8,
            out_dim: 3,
            n: 100,
            noise: 0.1,
            lambda: 0.01,
            learning_rate: 0.3,
            max_epochs: 20_000,
            grad_tol: 1e-10,
            rel_tol: 1e-3,
            closed_form_grad_tol: 1e-8,
        }
    }
}

impl ClosedFormCheck {
    pub const NAME: &'static str = "closed_form_ridge";

    pub fn dataset(&self, seed: u64) -> Result<Dataset> {
        let x = gaussian_matrix(self.dim, self.n, seed, 20);
        let map = gaussian_matrix(self.out_dim, self.dim, seed, 21);
        let y = map.matmul(&x).add(&gaussian_matrix(self.out_dim, self.n, seed, 22).scale(self.noise));
        Dataset::new(x, y, None)
    }

    pub fn run(&self, seed: u64) -> Result<CheckReport> {
        let started = Instant::now();
        let mut report = CheckReport::new(Self::NAME, config_digest(Self::NAME, self, seed));
        let ds = self.dataset(seed)?;
        let problem = RidgeProblem::new(ds.x.clone(), ds.y.clone(), self.lambda)?;
        let closed = ridge_minimizer(&problem)?;
        let theta0 = MlpParams::init(&[self.dim, self.out_dim], Activation::Identity, Activation::Identity, seed)?;
        let cfg = TrainConfig {
            weight_decay: self.lambda,
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            grad_tol: self.grad_tol,
            seed,
            train_biases: false,
            ..TrainConfig::default()
        };
        let (theta, records) = train(&theta0, &ds, &cfg)?;
        let rel = theta.weights[0].sub(&closed).frobenius_norm() / closed.frobenius_norm();
        let grad_at_closed = problem.loss_gradient(&closed).frobenius_norm();
        report.observe("relative_distance", rel);
        report.bound("relative_distance", self.rel_tol);
        report.observe("closed_form_grad_norm", grad_at_closed);
        report.bound("closed_form_grad_norm", self.closed_form_grad_tol);
        report.observe("epochs", records.last().map_or(0, |r| r.epoch) as f64);
        Ok(report.finish(rel <= self.rel_tol && grad_at_closed <= self.closed_form_grad_tol, started))
    }
}

pub fn check_closed_form(seed: u64) -> Result<CheckReport> {
    ClosedFormCheck::default().run(seed)
}

/// Full and centroid gradients differ by an amount linear in the WCSS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lemma33Check {
    pub task: MixtureTask,
    pub widths: Vec<usize>,
    pub sigmas: Vec<f64>,
    /// Representation whose clusters are used (0 = input).
    pub repr: usize,
    /// 0-based weight matrix whose gradient is compared.
    pub weight: usize,
    pub slope_target: f64,
    pub slope_tol: f64,
    pub degenerate_tol: f64,
    pub hessian_samples: usize,
}

impl Default for Lemma33Check {
    fn default() -> Self {
        Self {
            task: MixtureTask {
                dim: 16,
                k: 4,
                per_cluster: 50,
                sigma: 0.0,
                mean_radius: 2.0,
                autoencoder: true,
            },
            widths: vec![16, 8, 16],
            sigmas: vec![0.05, 0.1, 0.2, 0.4],
            repr: 0,
            weight: 0,
            slope_target: 1.0,
            slope_tol: 0.3,
            degenerate_tol: 1e-8,
            hessian_samples: 4,
        }
    }
}

impl Lemma33Check {
    pub const NAME: &'static str = "lemma33_centroid_gradient";

    fn residual_at(&self, theta: &MlpParams, sigma: f64, seed: u64) -> Result<(f64, f64, Dataset, crate::Partition)> {
        let task = MixtureTask {
            sigma,
            ..self.task.clone()
        };
        let ds = task.sample(seed)?;
        let z = crate::network::forward(theta, &ds.x)?.z.swap_remove(self.repr);
        let p = build_partition(&z, &ds.y, ds.class_labels.as_ref().expect("mixture labels"))?;
        let (r, w) = lemma33_residual(theta, &ds, &p, self.repr, self.weight)?;
        Ok((r, w, ds, p))
    }

    pub fn run(&self, seed: u64) -> Result<CheckReport> {
        let started = Instant::now();
        let mut report = CheckReport::new(Self::NAME, config_digest(Self::NAME, self, seed));
        let theta = MlpParams::init(&self.widths, Activation::Tanh, Activation::Identity, seed)?;

        let (degenerate, _, _, _) = self.residual_at(&theta, 0.0, seed)?;
        report.observe("degenerate_residual", degenerate);
        report.bound("degenerate_residual", self.degenerate_tol);

        let mut residuals = Vec::new();
        let mut wcss_values = Vec::new();
        for (i, &sigma) in self.sigmas.iter().enumerate() {
            let (r, w, ds, p) = self.residual_at(&theta, sigma, seed)?;
            report.observe(format!("residual_{i}"), r);
            report.observe(format!("wcss_{i}"), w);
            if self.hessian_samples > 0 {
                // informational: a lower estimate of the constant need not dominate
                let z = crate::network::forward(&theta, &ds.x)?.z.swap_remove(self.repr);
                let m = estimate_hessian_constant(&theta, &z, &ds.y, &p, self.repr, self.weight, self.hessian_samples, seed)?;
                report.observe(format!("hessian_estimate_{i}"), m);
                report.observe(format!("info_residual_over_estimate_bound_{i}"), r / (m * w).max(f64::MIN_POSITIVE));
            }
            residuals.push(r);
            wcss_values.push(w);
        }
        let increasing = residuals.windows(2).all(|w| w[1] > w[0]);
        report.observe("monotone_in_sigma", if increasing { 1.0 } else { 0.0 });
        report.bound("monotone_in_sigma", 1.0);
        let slope = loglog_slope(&wcss_values, &residuals).unwrap_or(f64::NAN);
        report.observe("loglog_slope", slope);
        report.bound("loglog_slope_min", self.slope_target - self.slope_tol);
        report.bound("loglog_slope_max", self.slope_target + self.slope_tol);
        let ok = degenerate <= self.degenerate_tol && increasing && (slope - self.slope_target).abs() <= self.slope_tol;
        Ok(report.finish(ok, started))
    }
}

pub fn check_lemma33(seed: u64) -> Result<CheckReport> {
    Lemma33Check::default().run(seed)
}

/// One cell of the full-versus-centroid minimizer comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidDistanceCell {
    pub lambda: f64,
    pub sigma: f64,
    pub distance: f64,
    pub bound: f64,
    pub wcss: f64,
}

/// Distance between the full ridge minimizer and the centroid-based
/// minimizer (generating-cluster partition), with the cluster-variation bound.
pub fn centroid_distance_cell(ds: &Dataset, lambda: f64) -> Result<(f64, f64, f64)> {
    let labels = ds.class_labels.as_ref().expect("mixture labels");
    let cp = CentroidProblem::new(&ds.x, &ds.y, labels)?;
    let full = ridge_minimizer(&RidgeProblem::new(ds.x.clone(), ds.y.clone(), lambda)?)?;
    let centroid = centroid_minimizer(&cp, lambda, ds.n())?;
    let distance = full.sub(&centroid).frobenius_norm();
    let w = wcss(&ds.x, &ds.y, &cp.partition)?;
    let bound = thm53_bound(
        w,
        lambda,
        ds.input_dim(),
        ds.n(),
        cp.x_bar.frobenius_norm(),
        cp.y_bar.frobenius_norm(),
    )?;
    Ok((distance, bound, w))
}

/// Full and centroid-based ridge minimizers are within the cluster-variation
/// bound on every cell of a `lambda x sigma` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thm53Check {
    pub task: MixtureTask,
    pub lambdas: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Multiplies the bound; 1 for the real check.
    pub bound_scale: f64,
}

impl Default for Thm53Check {
    fn default() -> Self {
        Self {
            task: MixtureTask {
                dim: 16,
                k: 4,
                per_cluster: 125,
                sigma: 0.0,
                mean_radius: 2.5,
                autoencoder: false,
            },
            lambdas: geometric_grid(1e-3, 1e-1, 4),
            sigmas: geometric_grid(0.05, 0.5, 4),
            bound_scale: 1.0,
        }
    }
}

impl Thm53Check {
    pub const NAME: &'static str = "thm53_centroid_minimizer_distance";

    /// Cells in `(sigma, lambda)` row-major order.
    pub fn cells(&self, seed: u64) -> Result<Vec<CentroidDistanceCell>> {
        let mut out = Vec::new();
        for &sigma in &self.sigmas {
            let task = MixtureTask {
                sigma,
                ..self.task.clone()
            };
            let ds = task.sample(seed)?;
            for &lambda in &self.lambdas {
                let (distance, bound, wcss) = centroid_distance_cell(&ds, lambda)?;
                out.push(CentroidDistanceCell {
                    lambda,
                    sigma,
                    distance,
                    bound: bound * self.bound_scale,
                    wcss,
                });
            }
        }
        Ok(out)
    }

    pub fn run(&self, seed: u64) -> Result<CheckReport> {
        let started = Instant::now();
        let mut report = CheckReport::new(Self::NAME, config_digest(Self::NAME, self, seed));
        let cells = self.cells(seed)?;
        let max_ratio = cells
            .iter()
            .map(|c| if c.bound > 0.0 { c.distance / c.bound } else if c.distance > 0.0 { f64::INFINITY } else { 0.0 })
            .fold(0.0, f64::max);
        let holds = cells.iter().all(|c| c.distance <= c.bound);
        report.observe("max_distance_over_bound", max_ratio);
        report.bound("max_distance_over_bound", 1.0);

        let trends = CentroidTrends::from_cells(&cells, &self.lambdas, &self.sigmas);
        for (i, s) in trends.sigma_slopes.iter().enumerate() {
            report.observe(format!("trend_sigma_slope_lambda_{i}"), *s);
        }
        report.observe("trend_sigma_slope_mean", trends.mean_sigma_slope);
        report.observe("trend_max_rise_in_lambda", trends.max_rise_in_lambda);
        Ok(report.finish(holds, started))
    }
}

/// Trend statistics of the full-versus-centroid distance over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidTrends {
    /// Log-log slope in sigma for each lambda.
    pub sigma_slopes: Vec<f64>,
    pub mean_sigma_slope: f64,
    /// Largest relative increase of the distance along lambda, over sigma rows.
    pub max_rise_in_lambda: f64,
}

impl CentroidTrends {
    pub fn from_cells(cells: &[CentroidDistanceCell], lambdas: &[f64], sigmas: &[f64]) -> Self {
        let at = |si: usize, li: usize| cells[si * lambdas.len() + li].distance;
        let sigma_slopes: Vec<f64> = (0..lambdas.len())
            .map(|li| {
                let ys: Vec<f64> = (0..sigmas.len()).map(|si| at(si, li)).collect();
                loglog_slope(sigmas, &ys).unwrap_or(f64::NAN)
            })
            .collect();
        let mean_sigma_slope = sigma_slopes.iter().sum::<f64>() / sigma_slopes.len().max(1) as f64;
        let max_rise_in_lambda = (0..sigmas.len())
            .map(|si| {
                let row: Vec<f64> = (0..lambdas.len()).map(|li| at(si, li)).collect();
                max_relative_rise(&row, 1e-12)
            })
            .fold(0.0, f64::max);
        Self {
            sigma_slopes,
            mean_sigma_slope,
            max_rise_in_lambda,
        }
    }
}

pub fn check_thm53(seed: u64) -> Result<CheckReport> {
    Thm53Check::default().run(seed)
}

/// Full and rank-`K` constrained ridge minimizers are within the label
/// cluster-variation bound when labels are clustered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thm54Check {
    pub dim: usize,
    pub label_dim: usize,
    pub k: usize,
    pub n: usize,
    pub label_noise: f64,
    pub lambdas: Vec<f64>,
    pub restarts: usize,
    pub bound_scale: f64,
}

impl Default for Thm54Check {
    fn default() -> Self {
        Self {
            dim: 16,
            label_dim: 6,
            k: 3,
            n: 500,
            label_noise: 0.1,
            lambdas: geometric_grid(1e-3, 1e-1, 4),
            restarts: DEFAULT_RESTARTS,
            bound_scale: 1.0,
        }
    }
}

impl Thm54Check {
    pub const NAME: &'static str = "thm54_rank_constrained_distance";

    /// Inputs are standard normal; labels are `K` random centers plus
    /// isotropic noise, assigned round-robin.
    pub fn dataset(&self, seed: u64) -> Result<Dataset> {
        let x = gaussian_matrix(self.dim, self.n, seed, 10);
        let centers = gaussian_matrix(self.label_dim, self.k, seed, 11);
        let noise = gaussian_matrix(self.label_dim, self.n, seed, 12);
        let labels: Vec<usize> = (0..self.n).map(|i| i % self.k).collect();
        let y = Matrix::from_fn(self.label_dim, self.n, |r, j| centers[(r, labels[j])] + self.label_noise * noise[(r, j)]);
        Dataset::new(x, y, Some(labels))
    }

    pub fn run(&self, seed: u64) -> Result<CheckReport> {
        let started = Instant::now();
        let mut report = CheckReport::new(Self::NAME, config_digest(Self::NAME, self, seed));
        let ds = self.dataset(seed)?;
        let tcv = label_tcv(&ds.y, self.k, self.restarts, seed)?;
        report.observe("label_tcv", tcv);
        let mut holds = true;
        let mut max_ratio = 0.0f64;
        for (i, &lambda) in self.lambdas.iter().enumerate() {
            let p = RidgeProblem::new(ds.x.clone(), ds.y.clone(), lambda)?;
            let gap = ridge_minimizer(&p)?.sub(&rank_constrained_minimizer(&p, self.k)?).frobenius_norm();
            let bound = thm54_bound(self.dim, self.label_dim, lambda, tcv)? * self.bound_scale;
            report.observe(format!("distance_{i}"), gap);
            report.bound(format!("distance_{i}"), bound);
            holds &= gap <= bound;
            max_ratio = max_ratio.max(if bound > 0.0 { gap / bound } else { f64::INFINITY });
        }
        report.observe("max_distance_over_bound", max_ratio);
        report.bound("max_distance_over_bound", 1.0);
        Ok(report.finish(holds, started))
    }
}

pub fn check_thm54(seed: u64) -> Result<CheckReport> {
    Thm54Check::default().run(seed)
}

/// Empirical coverage of the Gaussian-mixture cluster-variation bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Prop41Check {
    pub dim: usize,
    pub k: usize,
    pub n: usize,
    pub sigma: f64,
    pub trials: usize,
    pub coverage: f64,
    pub bound_scale: f64,
}

impl Default for Prop41Check {
    fn default() -> Self {
        Self {
            dim: 16,
            k: 4,
            n: 800,
            sigma: 0.7,
            trials: 200,
            coverage: 0.95,
            bound_scale: 1.0,
        }
    }
}

impl Prop41Check {
    pub const NAME: &'static str = "prop41_gaussian_tcv_coverage";

    fn trial_spec(&self, seed: u64, trial: usize) -> GaussianMixtureSpec {
        let task = MixtureTask {
            dim: self.dim,
            k: self.k,
            per_cluster: self.n / self.k,
            sigma: self.sigma,
            mean_radius: 5.0 * self.sigma,
            autoencoder: false,
        };
        let mut spec = task.spec(seed);
        spec.seed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(trial as u64 + 1);
        spec
    }

    pub fn run(&self, seed: u64) -> Result<CheckReport> {
        let started = Instant::now();
        let mut report = CheckReport::new(Self::NAME, config_digest(Self::NAME, self, seed));
        if self.trials < 50 || self.n % self.k != 0 {
            return Ok(report.not_applicable("needs >= 50 trials and N divisible by K", started));
        }
        let covered: Vec<bool> = (0..self.trials)
            .into_par_iter()
            .map(|t| {
                let spec = self.trial_spec(seed, t);
                let ds = sample_gaussian_mixture(&spec)?;
                let w = class_partition_wcss(&ds.x, &ds.y, ds.class_labels.as_ref().unwrap())?;
                Ok(w <= gaussian_tcv_bound(&spec)? * self.bound_scale)
            })
            .collect::<Result<_>>()?;
        let fraction = covered.iter().filter(|&&c| c).count() as f64 / self.trials as f64;
        report.observe("coverage", fraction);
        report.bound("coverage", self.coverage);
        Ok(report.finish(fraction >= self.coverage, started))
    }
}

pub fn check_prop41(seed: u64, trials: usize) -> Result<CheckReport> {
    Prop41Check {
        trials,
        ..Prop41Check::default()
    }
    .run(seed)
}

/// Reduced replica of the weight-rank transition over `(lambda, sigma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankCollapseGrid {
    pub task: MixtureTask,
    /// Representation widths from input to output.
    pub widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub lambdas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Training template; weight decay, seed and epsilons are set per cell.
    pub train: TrainConfig,
    /// Rank at which squared tails are read off.
    pub rank: usize,
    pub epsilon: f64,
}

impl Default for RankCollapseGrid {
    fn default() -> Self {
        Self {
            task: MixtureTask {
                dim: 32,
                k: 4,
                per_cluster: 250,
                sigma: 0.0,
                mean_radius: 2.5,
                autoencoder: true,
            },
            widths: vec![32, 16, 12, 16, 32],
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
            lambdas: vec![1e-4, 3e-3, 0.1],
            sigmas: vec![0.05, 0.15, 0.5],
            seeds: vec![0, 1],
            train: TrainConfig {
                learning_rate: 0.05,
                max_epochs: 6000,
                grad_tol: 1e-4,
                ..TrainConfig::default()
            },
            rank: 4,
            epsilon: 0.1,
        }
    }
}

/// Per-layer outcome of one trained grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCollapseRow {
    pub lambda: f64,
    pub sigma: f64,
    pub seed: u64,
    /// 0-based weight index.
    pub layer: usize,
    pub tail_sq_at_k: f64,
    pub softrank: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

impl RankCollapseGrid {
    /// Trains every `(lambda, sigma, seed)` cell; rows are ordered by
    /// lambda, sigma, seed, layer as listed in the configuration.
    pub fn run_cells(&self) -> Result<Vec<RankCollapseRow>> {
        let mut cells = Vec::new();
        for &lambda in &self.lambdas {
            for &sigma in &self.sigmas {
                for &seed in &self.seeds {
                    cells.push((lambda, sigma, seed));
                }
            }
        }
        let per_cell: Vec<Vec<RankCollapseRow>> = cells
            .par_iter()
            .map(|&(lambda, sigma, seed)| self.run_cell(lambda, sigma, seed))
            .collect::<Result<_>>()?;
        Ok(per_cell.into_iter().flatten().collect())
    }

    fn run_cell(&self, lambda: f64, sigma: f64, seed: u64) -> Result<Vec<RankCollapseRow>> {
        let task = MixtureTask {
            sigma,
            ..self.task.clone()
        };
        let ds = task.sample(seed)?;
        let theta0 = MlpParams::init(&self.widths, self.hidden_activation, self.output_activation, seed)?;
        let cfg = TrainConfig {
            weight_decay: lambda,
            seed,
            epsilons: vec![self.epsilon],
            ..self.train.clone()
        };
        let (_, records) = train(&theta0, &ds, &cfg)?;
        let last = records.last().expect("final record");
        Ok(last
            .per_layer_spectra
            .iter()
            .enumerate()
            .map(|(layer, s)| RankCollapseRow {
                lambda,
                sigma,
                seed,
                layer,
                tail_sq_at_k: s.tail_sq_at(self.rank),
                softrank: s.rank_at(self.epsilon),
                grad_norm: last.grad_norm,
                converged: last.converged,
            })
            .collect())
    }
}

/// Mean over layers and seeds of the squared tail, indexed `[sigma][lambda]`.
pub fn mean_tail_table(grid: &RankCollapseGrid, rows: &[RankCollapseRow]) -> Vec<Vec<f64>> {
    grid.sigmas
        .iter()
        .map(|&s| {
            grid.lambdas
                .iter()
                .map(|&l| {
                    let v: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.sigma == s && r.lambda == l)
                        .map(|r| r.tail_sq_at_k)
                        .collect();
                    v.iter().sum::<f64>() / v.len().max(1) as f64
                })
                .collect()
        })
        .collect()
}

/// Pass conditions of the rank-collapse transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankCollapseCheck {
    pub grid: RankCollapseGrid,
    /// Tail at `(max lambda, min sigma)` must be below this.
    pub low_tail: f64,
    /// Tail at `(min lambda, max sigma)` must exceed `contrast` times the low corner.
    pub contrast: f64,
    pub trend_tol: f64,
    /// Fail when any cell stops before reaching `grad_tol`.
    pub require_convergence: bool,
}

impl Default for RankCollapseCheck {
    fn default() -> Self {
        Self {
            grid: RankCollapseGrid::default(),
            low_tail: 0.05,
            contrast: 5.0,
            trend_tol: 0.1,
            require_convergence: false,
        }
    }
}

impl RankCollapseCheck {
    pub const NAME: &'static str = "rank_collapse_trend";

    pub fn evaluate(&self, rows: &[RankCollapseRow], digest: String, started: Instant) -> CheckReport {
        let mut report = CheckReport::new(Self::NAME, digest);
        let table = mean_tail_table(&self.grid, rows);
        let (si_min, si_max) = argminmax(&self.grid.sigmas);
        let (li_min, li_max) = argminmax(&self.grid.lambdas);
        let low = table[si_min][li_max];
        let high = table[si_max][li_min];
        report.observe("tail_low_corner", low);
        report.bound("tail_low_corner", self.low_tail);
        report.observe("tail_high_corner", high);
        report.bound("tail_high_corner_min", self.contrast * low);
        let order = sorted_indices(&self.grid.lambdas);
        let rise = table
            .iter()
            .map(|row| {
                let ordered: Vec<f64> = order.iter().map(|&i| row[i]).collect();
                max_relative_rise(&ordered, 1e-3)
            })
            .fold(0.0, f64::max);
        report.observe("max_rise_in_lambda", rise);
        report.bound("max_rise_in_lambda", self.trend_tol);
        let unconverged = rows.iter().filter(|r| !r.converged && r.layer == 0).count();
        report.observe("unconverged_cells", unconverged as f64);
        let mut ok = low < self.low_tail && high > self.contrast * low && rise <= self.trend_tol;
        if self.require_convergence && unconverged > 0 {
            report.reason = Some(format!("{unconverged} cells stopped before reaching grad_tol"));
            ok = false;
        }
        report.finish(ok, started)
    }

    pub fn run(&self, seed: u64) -> Result<CheckReport> {
        let started = Instant::now();
        let mut grid = self.grid.clone();
        grid.seeds = grid.seeds.iter().map(|s| s.wrapping_add(seed)).collect();
        let rows = grid.run_cells()?;
        Ok(self.evaluate(&rows, config_digest(Self::NAME, self, seed), started))
    }
}

fn argminmax(values: &[f64]) -> (usize, usize) {
    let order = sorted_indices(values);
    (order[0], order[order.len() - 1])
}

fn sorted_indices(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

pub fn check_rank_collapse_trend(seed: u64) -> Result<CheckReport> {
    RankCollapseCheck::default().run(seed)
}

/// Trained softrank of the hidden-layer weights over a family of
/// architectures and weight decays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftrankSweep {
    pub task: MixtureTask,
    /// Hidden widths of each architecture.
    pub architectures: Vec<Vec<usize>>,
    /// Width or depth reported for each architecture.
    pub labels: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Training template; weight decay, seed and epsilons are set per cell.
    pub train: TrainConfig,
    pub epsilon: f64,
}

impl Default for SoftrankSweep {
    fn default() -> Self {
        Self::widths(&[16, 32, 64], 3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftrankRow {
    pub width_or_depth: usize,
    pub lambda: f64,
    pub seed: u64,
    pub mean_softrank: f64,
    pub converged: bool,
}

impl SoftrankSweep {
    fn base(architectures: Vec<Vec<usize>>, labels: Vec<usize>) -> Self {
        Self {
            task: RankCollapseGrid::default().task,
            architectures,
            labels,
            lambdas: vec![0.01, 0.05, 0.1],
            seeds: vec![0],
            train: TrainConfig {
                learning_rate: 0.05,
                max_epochs: 3000,
                grad_tol: 1e-4,
                ..TrainConfig::default()
            },
            epsilon: 0.1,
        }
    }

    /// `depth` equal hidden layers for each width.
    pub fn widths(widths: &[usize], depth: usize) -> Self {
        Self::base(widths.iter().map(|&w| vec![w; depth]).collect(), widths.to_vec())
    }

    /// Hidden layers of one width for each depth.
    pub fn depths(depths: &[usize], width: usize) -> Self {
        Self::base(depths.iter().map(|&d| vec![width; d]).collect(), depths.to_vec())
    }

    /// Rows ordered by architecture, lambda, seed, on the mixture task.
    pub fn run(&self) -> Result<Vec<SoftrankRow>> {
        self.run_with(|seed| self.task.sample(seed))
    }

    /// Same as [`SoftrankSweep::run`] with the dataset for each seed drawn
    /// from `sample`.
    pub fn run_with<F>(&self, sample: F) -> Result<Vec<SoftrankRow>>
    where
        F: Fn(u64) -> Result<Dataset> + Sync,
    {
        if self.labels.len() != self.architectures.len() {
            return Err(crate::error::precondition("one label per architecture"));
        }
        let mut cells = Vec::new();
        for a in 0..self.architectures.len() {
            for &lambda in &self.lambdas {
                for &seed in &self.seeds {
                    cells.push((a, lambda, seed));
                }
            }
        }
        cells
            .par_iter()
            .map(|&(a, lambda, seed)| self.run_cell(&sample(seed)?, a, lambda, seed))
            .collect()
    }

    fn run_cell(&self, ds: &Dataset, arch: usize, lambda: f64, seed: u64) -> Result<SoftrankRow> {
        let mut widths = vec![ds.input_dim()];
        widths.extend(&self.architectures[arch]);
        widths.push(ds.output_dim());
        let theta0 = MlpParams::init(&widths, Activation::Tanh, Activation::Identity, seed)?;
        let cfg = TrainConfig {
            weight_decay: lambda,
            seed,
            epsilons: vec![self.epsilon],
            ..self.train.clone()
        };
        let (_, records) = train(&theta0, ds, &cfg)?;
        let last = records.last().expect("final record");
        let hidden = &last.per_layer_spectra[..last.per_layer_spectra.len() - 1];
        let mean = hidden.iter().map(|s| s.rank_at(self.epsilon) as f64).sum::<f64>() / hidden.len() as f64;
        Ok(SoftrankRow {
            width_or_depth: self.labels[arch],
            lambda,
            seed,
            mean_softrank: mean,
            converged: last.converged,
        })
    }
}

/// Softrank depends only mildly on width and depth, and does not grow with
/// weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftrankCheck {
    pub width_sweep: SoftrankSweep,
    pub depth_sweep: SoftrankSweep,
    pub fixed_lambda: f64,
    pub spread_tol: f64,
    pub trend_tol: f64,
}

impl Default for SoftrankCheck {
    fn default() -> Self {
        Self {
            width_sweep: SoftrankSweep::widths(&[16, 32, 64], 3),
            depth_sweep: SoftrankSweep::depths(&[2, 3, 4], 16),
            fixed_lambda: 0.05,
            spread_tol: 2.0,
            trend_tol: 0.1,
        }
    }
}

/// Mean over seeds, indexed `[architecture][lambda]`.
pub fn mean_softrank_table(sweep: &SoftrankSweep, rows: &[SoftrankRow]) -> Vec<Vec<f64>> {
    sweep
        .labels
        .iter()
        .map(|&label| {
            sweep
                .lambdas
                .iter()
                .map(|&l| {
                    let v: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.width_or_depth == label && r.lambda == l)
                        .map(|r| r.mean_softrank)
                        .collect();
                    v.iter().sum::<f64>() / v.len().max(1) as f64
                })
                .collect()
        })
        .collect()
}

impl SoftrankCheck {
    pub const NAME: &'static str = "softrank_width_depth";

    fn summarize(&self, report: &mut CheckReport, tag: &str, sweep: &SoftrankSweep, rows: &[SoftrankRow]) -> bool {
        let table = mean_softrank_table(sweep, rows);
        let Some(li) = sweep.lambdas.iter().position(|&l| l == self.fixed_lambda) else {
            report.reason = Some(format!("{tag} sweep lacks lambda = {}", self.fixed_lambda));
            return false;
        };
        let at_fixed: Vec<f64> = table.iter().map(|row| row[li]).collect();
        for (label, v) in sweep.labels.iter().zip(&at_fixed) {
            report.observe(format!("{tag}_{label}_softrank"), *v);
        }
        let spread = at_fixed.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - at_fixed.iter().cloned().fold(f64::INFINITY, f64::min);
        let order = sorted_indices(&sweep.lambdas);
        let rise = table
            .iter()
            .map(|row| max_relative_rise(&order.iter().map(|&i| row[i]).collect::<Vec<_>>(), 1.0))
            .fold(0.0, f64::max);
        report.observe(format!("{tag}_spread"), spread);
        report.bound(format!("{tag}_spread"), self.spread_tol);
        report.observe(format!("{tag}_max_rise_in_lambda"), rise);
        report.bound(format!("{tag}_max_rise_in_lambda"), self.trend_tol);
        spread <= self.spread_tol && rise <= self.trend_tol
    }

    pub fn evaluate(&self, width_rows: &[SoftrankRow], depth_rows: &[SoftrankRow], digest: String, started: Instant) -> CheckReport {
        let mut report = CheckReport::new(Self::NAME, digest);
        let widths_ok = self.summarize(&mut report, "width", &self.width_sweep, width_rows);
        let depths_ok = self.summarize(&mut report, "depth", &self.depth_sweep, depth_rows);
        report.finish(widths_ok && depths_ok, started)
    }

    pub fn run(&self, seed: u64) -> Result<CheckReport> {
        let started = Instant::now();
        let shift = |s: &SoftrankSweep| SoftrankSweep {
            seeds: s.seeds.iter().map(|x| x.wrapping_add(seed)).collect(),
            ..s.clone()
        };
        let width_rows = shift(&self.width_sweep).run()?;
        let depth_rows = shift(&self.depth_sweep).run()?;
        Ok(self.evaluate(&width_rows, &depth_rows, config_digest(Self::NAME, self, seed), started))
    }
}

pub fn check_softrank(seed: u64) -> Result<CheckReport> {
    SoftrankCheck::default().run(seed)
}

/// Configuration of the whole suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SuiteConfig {
    pub prop31: Prop31Check,
    pub stationarity: StationarityCheck,
    pub closed_form: ClosedFormCheck,
    pub lemma33: Lemma33Check,
    pub thm53: Thm53Check,
    pub thm54: Thm54Check,
    pub prop41: Prop41Check,
    pub rank_collapse: RankCollapseCheck,
    pub softrank: SoftrankCheck,
    /// Skip the trained rank-collapse grid.
    pub skip_rank_collapse: bool,
    /// Skip the width and depth softrank sweeps.
    pub skip_softrank: bool,
}

impl SuiteConfig {
    /// Every check in a fixed order.
    pub fn run(&self, seed: u64) -> Result<Vec<CheckReport>> {
        let mut out = vec![
            self.prop31.run(seed)?,
            self.stationarity.run(seed)?,
            self.closed_form.run(seed)?,
            self.lemma33.run(seed)?,
            self.thm53.run(seed)?,
            self.thm54.run(seed)?,
            self.prop41.run(seed)?,
        ];
        if !self.skip_rank_collapse {
            out.push(self.rank_collapse.run(seed)?);
        }
        if !self.skip_softrank {
            out.push(self.softrank.run(seed)?);
        }
        Ok(out)
    }

    /// Corrupted variants that a working suite must reject: the Gaussian
    /// bound halved, and the two minimizer-distance bounds evaluated as if
    /// the cluster variation were zero.
    pub fn run_negative_controls(&self, seed: u64) -> Result<Vec<CheckReport>> {
        Ok(vec![
            Prop41Check {
                bound_scale: 0.5,
                ..self.prop41.clone()
            }
            .run(seed)?
            .as_negative_control(),
            Thm53Check {
                bound_scale: 0.0,
                ..self.thm53.clone()
            }
            .run(seed)?
            .as_negative_control(),
            Thm54Check {
                bound_scale: 0.0,
                ..self.thm54.clone()
            }
            .run(seed)?
            .as_negative_control(),
        ])
    }
}
