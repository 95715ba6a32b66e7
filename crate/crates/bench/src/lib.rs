//! Fixtures shared by the benchmarks.

use rankcollapse::numerics::Matrix;
use rankcollapse::rng::{stream, NormalSampler};
use rankcollapse::{Activation, Dataset, MixtureTask, MlpParams};

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut s = NormalSampler::new(stream(seed, 0));
    Matrix::from_fn(rows, cols, |_, _| s.next())
}

/// The reduced autoencoder task and a freshly initialized 16-12-16 network.
pub fn reduced_problem(sigma: f64, seed: u64) -> (Dataset, MlpParams) {
    let task = MixtureTask {
        sigma,
        ..MixtureTask::default()
    };
    let ds = task.sample(seed).expect("valid task");
    let theta = MlpParams::init(&[32, 16, 12, 16, 32], Activation::Tanh, Activation::Identity, seed).expect("valid widths");
    (ds, theta)
}
