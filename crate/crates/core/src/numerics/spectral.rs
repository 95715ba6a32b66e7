use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::svd::svd;
use crate::error::{precondition, Result};

/// Singular-value tail statistics of one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub singular_values: Vec<f64>,
    /// `e_tail[r - 1] = e(r) = sum_{i >= r} s_i / sum_i s_i` for `r = 1..=n+1`.
    pub e_tail: Vec<f64>,
    /// `tail_sq[r] = sum_{j > r} s_j^2 / sum_j s_j^2` for `r = 0..=n`.
    pub tail_sq: Vec<f64>,
    /// `(eps, rk(eps))` pairs in the order requested.
    pub softrank: Vec<(f64, usize)>,
}

impl SpectralReport {
    /// Builds the report from singular values sorted in non-increasing order.
    pub fn from_singular_values(singular_values: Vec<f64>, epsilons: &[f64]) -> Result<Self> {
        if let Some(&eps) = epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(precondition(format!("epsilon {eps} outside [0, 1]")));
        }
        let n = singular_values.len();
        let total: f64 = singular_values.iter().sum();
        let total_sq: f64 = singular_values.iter().map(|s| s * s).sum();

        let mut e_tail = vec![0.0; n + 1];
        let mut tail_sq = vec![0.0; n + 1];
        if total > 0.0 {
            let mut acc = 0.0;
            for r in (0..n).rev() {
                acc += singular_values[r];
                e_tail[r] = acc / total;
            }
            e_tail[0] = 1.0;
            let mut acc = 0.0;
            for r in (0..n).rev() {
                acc += singular_values[r] * singular_values[r];
                tail_sq[r] = acc / total_sq;
            }
            tail_sq[0] = 1.0;
        }
        let mut report = Self {
            singular_values,
            e_tail,
            tail_sq,
            softrank: Vec::with_capacity(epsilons.len()),
        };
        report.softrank = epsilons.iter().map(|&eps| (eps, report.rank_at(eps))).collect();
        Ok(report)
    }

    /// `e(r)`, 1-based; `r` in `1..=n+1`.
    pub fn e(&self, r: usize) -> f64 {
        self.e_tail[r - 1]
    }

    /// `rk(eps) = min { r >= 1 : e(r) <= eps }`.
    pub fn rank_at(&self, eps: f64) -> usize {
        self.e_tail
            .iter()
            .position(|&e| e <= eps)
            .map_or(self.e_tail.len(), |i| i + 1)
    }

    /// Squared tail beyond the first `k` values; clamps `k` to `n`.
    pub fn tail_sq_at(&self, k: usize) -> f64 {
        self.tail_sq[k.min(self.tail_sq.len() - 1)]
    }
}

/// Spectral report of `a`'s singular values.
pub fn spectral_report(a: &Matrix, epsilons: &[f64]) -> Result<SpectralReport> {
    SpectralReport::from_singular_values(svd(a)?.singular_values, epsilons)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_values() {
        let r = SpectralReport::from_singular_values(vec![3.0, 1.0], &[0.3]).unwrap();
        assert_eq!(r.e(1), 1.0);
        assert_eq!(r.e(2), 0.25);
        assert_eq!(r.e(3), 0.0);
        assert!((r.tail_sq[1] - 0.1).abs() < 1e-15);
        assert_eq!(r.tail_sq[0], 1.0);
        assert_eq!(r.tail_sq[2], 0.0);
        assert_eq!(r.softrank, vec![(0.3, 2)]);
    }

    #[test]
    fn single_value() {
        let r = SpectralReport::from_singular_values(vec![1.0], &[1.0]).unwrap();
        assert_eq!(r.e(1), 1.0);
        assert_eq!(r.e(2), 0.0);
        assert_eq!(r.rank_at(1.0), 1);
    }

    #[test]
    fn zero_matrix_convention() {
        let r = spectral_report(&Matrix::zeros(3, 2), &[0.1]).unwrap();
        assert!(r.e_tail.iter().all(|&e| e == 0.0));
        assert!(r.tail_sq.iter().all(|&e| e == 0.0));
        assert_eq!(r.rank_at(0.1), 1);
    }

    #[test]
    fn rejects_bad_epsilon() {
        assert!(SpectralReport::from_singular_values(vec![1.0], &[1.5]).is_err());
    }
}
