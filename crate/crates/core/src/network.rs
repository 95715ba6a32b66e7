//! Fully connected networks with weight decay: forward pass, backpropagation,
//! gradient-descent training and gradient-level probes.
//!
//! Representations are indexed `z[0..=L]` with `z[0]` the input; weight `l`
//! (0-based) maps `z[l]` to `z[l + 1] = act_l(W_l z[l] + b_l)`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{class_partition_wcss, wcss, Partition};
use crate::datasets::Dataset;
use crate::error::{precondition, shape, Error, Result};
use crate::numerics::{numerical_rank, spectral_report, svd, Matrix, SpectralReport};
use crate::rng::{dirichlet_flat, stream, stream_id, uniform_on_sphere, NormalSampler};

const INIT_STREAM: u16 = 0x696e;
const SHUFFLE_STREAM: u16 = 0x7368;
const HESSIAN_STREAM: u16 = 0x6865;

/// Relative singular-value threshold used by the rank probes.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation's output.
    fn slope_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(precondition(format!("unknown activation `{other}`"))),
        }
    }
}

/// Parameters `(W_1..W_L, b_1..b_L)` with one activation per layer.
///
/// Gradients share this type; their `activations` are copied from the point
/// they were taken at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub activations: Vec<Activation>,
}

impl MlpParams {
    pub fn new(weights: Vec<Matrix>, biases: Vec<Vec<f64>>, activations: Vec<Activation>) -> Result<Self> {
        let p = Self {
            weights,
            biases,
            activations,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.weights.len();
        if l == 0 || self.biases.len() != l || self.activations.len() != l {
            return Err(precondition(format!(
                "{} weights, {} biases, {} activations",
                l,
                self.biases.len(),
                self.activations.len()
            )));
        }
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if b.len() != w.rows() {
                return Err(shape(format!("layer {i}: bias length {} for {} rows", b.len(), w.rows())));
            }
            if i > 0 && w.cols() != self.weights[i - 1].rows() {
                return Err(shape(format!(
                    "layer {i} expects {} inputs, previous layer emits {}",
                    w.cols(),
                    self.weights[i - 1].rows()
                )));
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    /// Uniform `+-sqrt(6 / (fan_in + fan_out))` weights and zero biases.
    /// `widths` lists every representation size from input to output.
    pub fn init(widths: &[usize], hidden: Activation, output: Activation, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(precondition(format!("invalid layer widths {widths:?}")));
        }
        let depth = widths.len() - 1;
        let mut weights = Vec::with_capacity(depth);
        for l in 0..depth {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut rng = stream(seed, stream_id(INIT_STREAM, l as u32, 0));
            weights.push(Matrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..limit)));
        }
        let biases = widths[1..].iter().map(|&w| vec![0.0; w]).collect();
        let mut activations = vec![hidden; depth];
        activations[depth - 1] = output;
        Self::new(weights, biases, activations)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            activations: self.activations.clone(),
        }
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.depth() - 1].rows()
    }

    /// Representation sizes `d_0..d_L`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.weights.iter().map(Matrix::rows))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// `||Theta||^2 = sum_l ||W_l||_F^2 + ||b_l||^2`.
    pub fn norm_sq(&self) -> f64 {
        self.weights.iter().map(Matrix::norm_sq).sum::<f64>()
            + self.biases.iter().flatten().map(|v| v * v).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &MlpParams) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            w.axpy(s, o);
        }
        for (b, o) in self.biases.iter_mut().zip(&other.biases) {
            for (v, ov) in b.iter_mut().zip(o) {
                *v += s * ov;
            }
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w = w.scale(s));
        out.biases.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    /// All parameters flattened layer by layer (weights row-major, then bias).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    /// Inverse of [`MlpParams::to_flat`] using `self` for the shapes.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(shape(format!("{} values for {} parameters", flat.len(), self.num_params())));
        }
        let mut out = self.clone();
        let mut at = 0;
        for (w, b) in out.weights.iter_mut().zip(out.biases.iter_mut()) {
            let n = w.rows() * w.cols();
            w.as_mut_slice().copy_from_slice(&flat[at..at + n]);
            at += n;
            let len = b.len();
            b.copy_from_slice(&flat[at..at + len]);
            at += len;
        }
        Ok(out)
    }

    /// End-to-end matrix `W_L ... W_1`; meaningful for linear networks.
    pub fn product(&self) -> Matrix {
        self.weights[1..]
            .iter()
            .fold(self.weights[0].clone(), |acc, w| w.matmul(&acc))
    }
}

/// Representations and pre-activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub z: Vec<Matrix>,
    pub pre_activations: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.z.last().expect("trace holds the input")
    }
}

/// Forward pass through layers `from..L` starting at representation `z[from]`.
fn forward_from(theta: &MlpParams, from: usize, input: &Matrix) -> Result<ForwardTrace> {
    if from >= theta.depth() {
        return Err(precondition(format!("start layer {from} beyond depth {}", theta.depth())));
    }
    if input.rows() != theta.weights[from].cols() {
        return Err(precondition(format!(
            "input has {} rows, layer {from} expects {}",
            input.rows(),
            theta.weights[from].cols()
        )));
    }
    let mut z = vec![input.clone()];
    let mut pre = Vec::with_capacity(theta.depth() - from);
    for l in from..theta.depth() {
        let mut a = theta.weights[l].matmul(z.last().unwrap());
        let cols = a.cols();
        for (i, &b) in theta.biases[l].iter().enumerate() {
            a.row_mut(i).iter_mut().for_each(|v| *v += b);
        }
        debug_assert_eq!(a.cols(), cols);
        let act = theta.activations[l];
        z.push(a.map(|v| act.apply(v)));
        pre.push(a);
    }
    Ok(ForwardTrace {
        z,
        pre_activations: pre,
    })
}

/// `z^L = f(Theta, x)` together with every intermediate representation.
pub fn forward(theta: &MlpParams, x_batch: &Matrix) -> Result<ForwardTrace> {
    forward_from(theta, 0, x_batch)
}

fn check_targets(theta: &MlpParams, ds: &Dataset) -> Result<()> {
    if ds.y.rows() != theta.output_dim() {
        return Err(precondition(format!(
            "targets have {} rows, network emits {}",
            ds.y.rows(),
            theta.output_dim()
        )));
    }
    Ok(())
}

/// `(total, data)` with `data = (1/N) sum ||f(x_i) - y_i||^2` and
/// `total = data + lambda ||Theta||^2`.
pub fn loss(theta: &MlpParams, ds: &Dataset, lambda: f64) -> Result<(f64, f64)> {
    check_targets(theta, ds)?;
    let out = forward(theta, &ds.x)?;
    let n = ds.n().max(1) as f64;
    let data = out.output().sub(&ds.y).norm_sq() / n;
    Ok((data + lambda * theta.norm_sq(), data))
}

/// Gradients of `sum_i w_i ||f(z_i) - y_i||^2` for layers `from..L`, where
/// `input` holds the representations `z[from]`. Entries before `from` are zero.
fn backprop(theta: &MlpParams, from: usize, input: &Matrix, y: &Matrix, sample_weights: &[f64]) -> Result<MlpParams> {
    let trace = forward_from(theta, from, input)?;
    if y.rows() != theta.output_dim() || y.cols() != input.cols() {
        return Err(shape(format!(
            "targets are {}x{}, expected {}x{}",
            y.rows(),
            y.cols(),
            theta.output_dim(),
            input.cols()
        )));
    }
    let mut grad = theta.zeros_like();
    let steps = theta.depth() - from;
    // upstream = dLoss / dz for the current layer's output
    let mut upstream = trace.output().sub(y);
    for (j, &w) in sample_weights.iter().enumerate() {
        for i in 0..upstream.rows() {
            upstream[(i, j)] *= 2.0 * w;
        }
    }
    for s in (0..steps).rev() {
        let l = from + s;
        let act = theta.activations[l];
        let out = &trace.z[s + 1];
        let delta = upstream.zip_map(out, |u, o| u * act.slope_from_output(o));
        grad.weights[l] = delta.matmul_t(&trace.z[s]);
        grad.biases[l] = (0..delta.rows()).map(|i| delta.row(i).iter().sum()).collect();
        if s > 0 {
            upstream = theta.weights[l].t_matmul(&delta);
        }
    }
    Ok(grad)
}

/// Gradient of the unregularized data loss `(1/N) sum ||f(x_i) - y_i||^2`.
pub fn data_gradient(theta: &MlpParams, ds: &Dataset) -> Result<MlpParams> {
    check_targets(theta, ds)?;
    let n = ds.n();
    if n == 0 {
        return Ok(theta.zeros_like());
    }
    backprop(theta, 0, &ds.x, &ds.y, &vec![1.0 / n as f64; n])
}

/// Gradient of [`loss`] on the given batch.
pub fn gradient(theta: &MlpParams, ds_batch: &Dataset, lambda: f64) -> Result<MlpParams> {
    let mut g = data_gradient(theta, ds_batch)?;
    g.axpy(2.0 * lambda, theta);
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Mini-batch size; 0 means full batch.
    pub batch_size: usize,
    pub grad_tol: f64,
    pub seed: u64,
    /// Record every this many epochs; 0 records only the final state.
    pub record_every: usize,
    pub epsilons: Vec<f64>,
    /// When false, biases stay at their initial value and receive no updates.
    pub train_biases: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weight_decay: 0.01,
            learning_rate: 0.05,
            max_epochs: 5000,
            batch_size: 0,
            grad_tol: 1e-6,
            seed: 0,
            record_every: 0,
            epsilons: vec![0.1],
            train_biases: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(precondition(format!("learning_rate {} must be > 0", self.learning_rate)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(precondition(format!("grad_tol {} must be > 0", self.grad_tol)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(precondition(format!("weight_decay {} must be >= 0", self.weight_decay)));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(precondition(format!("epsilon {e} outside [0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_data: f64,
    /// Frobenius norm of the full-batch regularized gradient.
    pub grad_norm: f64,
    pub per_layer_spectra: Vec<SpectralReport>,
    /// Class-partition WCSS of `(z[l], y)`, the representation entering weight
    /// `l`; present when the dataset carries class labels. Upper-bounds the TCV.
    pub per_layer_tcv: Option<Vec<f64>>,
    /// Whether `grad_norm < grad_tol`.
    pub converged: bool,
}

fn strip_biases(g: &mut MlpParams) {
    g.biases.iter_mut().flatten().for_each(|v| *v = 0.0);
}

fn full_gradient(theta: &MlpParams, ds: &Dataset, cfg: &TrainConfig) -> Result<MlpParams> {
    let mut g = gradient(theta, ds, cfg.weight_decay)?;
    if !cfg.train_biases {
        strip_biases(&mut g);
    }
    Ok(g)
}

fn make_record(theta: &MlpParams, ds: &Dataset, cfg: &TrainConfig, epoch: usize, grad_norm: f64) -> Result<TrainRecord> {
    let (loss_total, loss_data) = loss(theta, ds, cfg.weight_decay)?;
    let per_layer_spectra = theta
        .weights
        .iter()
        .map(|w| spectral_report(w, &cfg.epsilons))
        .collect::<Result<_>>()?;
    let per_layer_tcv = match &ds.class_labels {
        Some(labels) => {
            let trace = forward(theta, &ds.x)?;
            Some(
                trace.z[..theta.depth()]
                    .iter()
                    .map(|z| class_partition_wcss(z, &ds.y, labels))
                    .collect::<Result<_>>()?,
            )
        }
        None => None,
    };
    Ok(TrainRecord {
        epoch,
        loss_total,
        loss_data,
        grad_norm,
        per_layer_spectra,
        per_layer_tcv,
        converged: grad_norm < cfg.grad_tol,
    })
}

/// Plain (stochastic) gradient descent `Theta <- Theta - eta grad`, stopping
/// once the full-batch gradient norm falls below `grad_tol`.
///
/// Records are taken every `record_every` epochs and always at the end; the
/// last record's `converged` flag tells whether the tolerance was met.
pub fn train(theta0: &MlpParams, ds: &Dataset, cfg: &TrainConfig) -> Result<(MlpParams, Vec<TrainRecord>)> {
    cfg.validate()?;
    theta0.validate()?;
    check_targets(theta0, ds)?;
    let n = ds.n();
    let full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;
    let mut theta = theta0.clone();
    let mut records = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch = 0;
    let mut last_finite = 0;
    loop {
        let g = full_gradient(&theta, ds, cfg)?;
        let grad_norm = g.norm();
        if !grad_norm.is_finite() || !theta.is_finite() {
            return Err(Error::Diverged {
                last_finite_epoch: last_finite,
            });
        }
        last_finite = epoch;
        let done = grad_norm < cfg.grad_tol || epoch >= cfg.max_epochs;
        if done || (cfg.record_every > 0 && epoch % cfg.record_every == 0) {
            let record = make_record(&theta, ds, cfg, epoch, grad_norm)?;
            if !record.loss_total.is_finite() {
                return Err(Error::Diverged {
                    last_finite_epoch: epoch.saturating_sub(1),
                });
            }
            records.push(record);
        }
        if done {
            break;
        }
        if full_batch {
            theta.axpy(-cfg.learning_rate, &g);
        } else {
            let mut rng = stream(cfg.seed, stream_id(SHUFFLE_STREAM, epoch as u32, 0));
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let batch = ds.select(chunk);
                let mut gb = gradient(&theta, &batch, cfg.weight_decay)?;
                if !cfg.train_biases {
                    strip_biases(&mut gb);
                }
                theta.axpy(-cfg.learning_rate, &gb);
            }
        }
        epoch += 1;
    }
    Ok((theta, records))
}

/// `max_l ||grad_{W_l} L_0 + 2 lambda W_l||_F / (2 lambda ||W_l||_F + eps)`.
pub fn stationarity_residual(theta: &MlpParams, ds: &Dataset, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(precondition("stationarity residual requires lambda > 0"));
    }
    let g = data_gradient(theta, ds)?;
    Ok(g
        .weights
        .iter()
        .zip(&theta.weights)
        .map(|(gw, w)| {
            let mut r = gw.clone();
            r.axpy(2.0 * lambda, w);
            r.frobenius_norm() / (2.0 * lambda * w.frobenius_norm() + f64::EPSILON)
        })
        .fold(0.0, f64::max))
}

/// Per-layer unregularized gradients of `sum_{i in batch} ||f(x_i) - y_i||^2`.
pub fn batch_gradient(theta: &MlpParams, ds: &Dataset, batch_indices: &[usize]) -> Result<Vec<Matrix>> {
    if batch_indices.is_empty() {
        return Err(precondition("batch must be non-empty"));
    }
    if let Some(&bad) = batch_indices.iter().find(|&&i| i >= ds.n()) {
        return Err(precondition(format!("batch index {bad} out of range for N={}", ds.n())));
    }
    check_targets(theta, ds)?;
    let batch = ds.select(batch_indices);
    let g = backprop(theta, 0, &batch.x, &batch.y, &vec![1.0; batch_indices.len()])?;
    Ok(g.weights)
}

/// Numerical rank (relative tolerance [`RANK_TOL`]) of every layer's batch gradient.
pub fn gradient_rank_probe(theta: &MlpParams, ds: &Dataset, batch_indices: &[usize]) -> Result<Vec<usize>> {
    batch_gradient(theta, ds, batch_indices)?
        .iter()
        .map(|g| numerical_rank(g, RANK_TOL))
        .collect()
}

fn check_layers(theta: &MlpParams, repr: usize, weight: usize) -> Result<()> {
    if repr > weight || weight >= theta.depth() {
        return Err(precondition(format!(
            "need representation index <= weight index < depth; got {repr}, {weight}, depth {}",
            theta.depth()
        )));
    }
    Ok(())
}

/// Gradient w.r.t. `W_weight` of `sum_k pi_k ||f(zbar_k) - ybar_k||^2`, where the
/// centroids `zbar_k` of representation `repr` are fed through layers
/// `repr..L`. The partition must be built on `(z_repr, y)`.
pub fn centroid_gradient(
    theta: &MlpParams,
    z_repr: &Matrix,
    y: &Matrix,
    p: &Partition,
    repr: usize,
    weight: usize,
) -> Result<Matrix> {
    check_layers(theta, repr, weight)?;
    if p.n() != z_repr.cols() || p.n() != y.cols() {
        return Err(shape("partition does not match the data"));
    }
    let g = backprop(theta, repr, &p.centroid_z_matrix(), &p.centroid_y_matrix(), &p.weights)?;
    Ok(g.weights[weight].clone())
}

/// `(||full grad_{W_weight} L_0 - centroid gradient||_F, WCSS of (z_repr, y))`.
pub fn lemma33_residual(theta: &MlpParams, ds: &Dataset, p: &Partition, repr: usize, weight: usize) -> Result<(f64, f64)> {
    check_layers(theta, repr, weight)?;
    let trace = forward(theta, &ds.x)?;
    let z = &trace.z[repr];
    let full = data_gradient(theta, ds)?;
    let centroid = centroid_gradient(theta, z, &ds.y, p, repr, weight)?;
    let residual = full.weights[weight].sub(&centroid).frobenius_norm();
    Ok((residual, wcss(z, &ds.y, p)?))
}

const HESSIAN_STEP: f64 = 1e-3;
const HESSIAN_POWER_ITERATIONS: usize = 6;

/// Sampling-based lower estimate of
/// `sup ||D^2_{(z, y)} grad_{W_weight} l(f(z), y)||` over the convex hulls of the
/// clusters of `(z_repr, y)`.
///
/// Each sample draws a cluster and a flat-Dirichlet convex combination of its
/// points, then maximizes `||D^2 g[u, v]||_F` over unit directions by an
/// alternating power iteration on central second differences. The result is
/// a maximum of attained values, so it never exceeds the true supremum (up to
/// finite-difference error) and never decreases when samples are added.
pub fn estimate_hessian_constant(
    theta: &MlpParams,
    z_repr: &Matrix,
    y: &Matrix,
    p: &Partition,
    repr: usize,
    weight: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_layers(theta, repr, weight)?;
    if p.n() != z_repr.cols() || p.n() != y.cols() {
        return Err(shape("partition does not match the data"));
    }
    let dz = z_repr.rows();
    let dim = dz + y.rows();
    let members = p.members();
    let grad_at = |point: &[f64]| -> Result<Matrix> {
        let zin = Matrix::from_vec(dz, 1, point[..dz].to_vec())?;
        let yin = Matrix::from_vec(y.rows(), 1, point[dz..].to_vec())?;
        Ok(backprop(theta, repr, &zin, &yin, &[1.0])?.weights[weight].clone())
    };
    let shifted = |base: &[f64], a: &[f64], sa: f64, b: &[f64], sb: f64| -> Vec<f64> {
        (0..dim).map(|i| base[i] + sa * a[i] + sb * b[i]).collect()
    };
    // D^2 g[u, v] by the four-point mixed central difference
    let mixed = |base: &[f64], u: &[f64], v: &[f64]| -> Result<Matrix> {
        let h = HESSIAN_STEP;
        let pp = grad_at(&shifted(base, u, h, v, h))?;
        let pm = grad_at(&shifted(base, u, h, v, -h))?;
        let mp = grad_at(&shifted(base, u, -h, v, h))?;
        let mm = grad_at(&shifted(base, u, -h, v, -h))?;
        Ok(pp.sub(&pm).sub(&mp).add(&mm).scale(1.0 / (4.0 * h * h)))
    };
    let unit = |e: usize| -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[e] = 1.0;
        v
    };
    let normalize = |v: Vec<f64>| -> Option<Vec<f64>> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (n > 0.0).then(|| v.into_iter().map(|x| x / n).collect())
    };
    // ascent direction for the first slot: sum_i e_i <D^2 g[e_i, other], current>
    let ascend = |base: &[f64], other: &[f64], current: &Matrix| -> Result<Option<Vec<f64>>> {
        let mut next = vec![0.0; dim];
        for (i, slot) in next.iter_mut().enumerate() {
            let t = mixed(base, &unit(i), other)?;
            *slot = t
                .as_slice()
                .iter()
                .zip(current.as_slice())
                .map(|(a, b)| a * b)
                .sum();
        }
        Ok(normalize(next))
    };

    let mut best = 0.0f64;
    for s in 0..samples {
        let mut sampler = NormalSampler::new(stream(seed, stream_id(HESSIAN_STREAM, s as u32, 0)));
        let cluster = sampler.rng_mut().random_range(0..p.k);
        let idx = &members[cluster];
        let alphas = dirichlet_flat(sampler.rng_mut(), idx.len());
        let mut base = vec![0.0; dim];
        for (&i, &a) in idx.iter().zip(&alphas) {
            for r in 0..dz {
                base[r] += a * z_repr[(r, i)];
            }
            for r in 0..y.rows() {
                base[dz + r] += a * y[(r, i)];
            }
        }
        let mut u = uniform_on_sphere(&mut sampler, dim, 1.0);
        let mut v = uniform_on_sphere(&mut sampler, dim, 1.0);
        let mut value = mixed(&base, &u, &v)?;
        best = best.max(value.frobenius_norm());
        for _ in 0..HESSIAN_POWER_ITERATIONS {
            match ascend(&base, &v, &value)? {
                Some(next) => u = next,
                None => break,
            }
            value = mixed(&base, &u, &v)?;
            // D^2 g is symmetric, so the same ascent serves the second slot
            match ascend(&base, &u, &value)? {
                Some(next) => v = next,
                None => break,
            }
            value = mixed(&base, &u, &v)?;
            best = best.max(value.frobenius_norm());
        }
    }
    Ok(best)
}

/// Numerical rank of `W_l` for every layer.
pub fn layer_ranks(theta: &MlpParams, rel_tol: f64) -> Result<Vec<usize>> {
    theta.weights.iter().map(|w| numerical_rank(w, rel_tol)).collect()
}

/// Singular values of every layer's weight matrix.
pub fn layer_singular_values(theta: &MlpParams) -> Result<Vec<Vec<f64>>> {
    theta.weights.iter().map(|w| Ok(svd(w)?.singular_values)).collect()
}
