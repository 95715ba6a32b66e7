//! Dense linear algebra and spectral rank metrics.

mod matrix;
mod spd;
mod spectral;
mod svd;

pub use matrix::Matrix;
pub use spd::{cholesky, spd_inv_sqrt, spd_solve, spd_sqrt, symmetric_eigen, SymmetricEigen};
pub use spectral::{spectral_report, SpectralReport};
pub use svd::{svd, SvdResult};

use crate::error::{precondition, Result};

/// Best rank-`k` approximation (truncated SVD).
pub fn truncate_rank(a: &Matrix, k: usize) -> Result<Matrix> {
    if k == 0 {
        return Err(precondition("truncate_rank requires k >= 1"));
    }
    if k >= a.rows().min(a.cols()) {
        return Ok(a.clone());
    }
    Ok(svd(a)?.reconstruct_top(k))
}

/// Frobenius distance from `a` to the set of matrices of rank at most `k`.
pub fn dist_to_rank_k(a: &Matrix, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(precondition("dist_to_rank_k requires k >= 1"));
    }
    let s = svd(a)?.singular_values;
    Ok(s.iter().skip(k).map(|x| x * x).sum::<f64>().sqrt())
}

/// Number of singular values strictly above `rel_tol * s_1`.
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(precondition(format!("rel_tol {rel_tol} outside (0, 1)")));
    }
    let s = svd(a)?.singular_values;
    Ok(rank_of_values(&s, rel_tol))
}

pub(crate) fn rank_of_values(s: &[f64], rel_tol: f64) -> usize {
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&x| x > rel_tol * top).count(),
        _ => 0,
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::Matrix;
    use crate::rng::{stream, NormalSampler};

    pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut s = NormalSampler::new(stream(seed, 0xA11CE));
        Matrix::from_fn(rows, cols, |_, _| s.next())
    }

    /// `a^T a + I` for a random square `a`.
    pub fn random_spd(n: usize, seed: u64) -> Matrix {
        let a = random_matrix(n, n, seed);
        a.t_matmul(&a).add(&Matrix::identity(n))
    }
}
