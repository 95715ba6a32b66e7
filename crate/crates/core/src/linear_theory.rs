//! Closed forms for linear models `f(x) = Theta x` under the loss
//! `(1/N)||Y - Theta X||^2 + lambda ||Theta||^2`: augmentation, the Q matrix,
//! ridge, rank-constrained and centroid-based minimizers, critical points, and
//! the distance bounds in terms of cluster variation.

use serde::{Deserialize, Serialize};

use crate::clustering::{build_partition, Partition};
use crate::error::{precondition, shape, Result};
use crate::numerics::{spd_inv_sqrt, spd_solve, svd, Matrix};

/// Relative eigenvalue floor below which an unregularized `XX^T` is singular.
pub const FULL_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeProblem {
    pub x: Matrix,
    pub y: Matrix,
    pub lambda: f64,
}

impl RidgeProblem {
    /// Fails when `lambda < 0`, shapes disagree, or `lambda = 0` with a
    /// numerically singular `XX^T`.
    pub fn new(x: Matrix, y: Matrix, lambda: f64) -> Result<Self> {
        if x.cols() != y.cols() {
            return Err(shape(format!("x has {} columns, y has {}", x.cols(), y.cols())));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(precondition(format!("lambda {lambda} must be finite and >= 0")));
        }
        if x.cols() == 0 {
            return Err(precondition("ridge problem needs at least one sample"));
        }
        if lambda == 0.0 {
            let s = svd(&x)?.singular_values;
            let top = s.first().copied().unwrap_or(0.0);
            let min = if x.rows() > x.cols() { 0.0 } else { *s.last().unwrap() };
            if top == 0.0 || min * min <= FULL_RANK_TOL * top * top {
                return Err(crate::Error::NotPositiveDefinite(format!(
                    "XX^T is singular at lambda = 0 (singular values {top:e} .. {min:e})"
                )));
            }
        }
        Ok(Self { x, y, lambda })
    }

    pub fn n(&self) -> usize {
        self.x.cols()
    }

    /// `X X^T + N lambda I = X_lambda X_lambda^T`.
    pub fn gram(&self) -> Matrix {
        let mut g = self.x.matmul_t(&self.x);
        let shift = self.n() as f64 * self.lambda;
        for i in 0..g.rows() {
            g[(i, i)] += shift;
        }
        g
    }

    /// `Y X^T = Y_lambda X_lambda^T`.
    pub fn cross(&self) -> Matrix {
        self.y.matmul_t(&self.x)
    }

    /// `L_lambda(Theta) = (1/N)||Y - Theta X||^2 + lambda ||Theta||^2`.
    pub fn loss(&self, theta: &Matrix) -> f64 {
        let fit = self.y.sub(&theta.matmul(&self.x)).norm_sq() / self.n() as f64;
        fit + self.lambda * theta.norm_sq()
    }

    /// `dL_lambda/dTheta = (2/N)(Theta (XX^T + N lambda I) - Y X^T)`.
    pub fn loss_gradient(&self, theta: &Matrix) -> Matrix {
        theta
            .matmul(&self.gram())
            .sub(&self.cross())
            .scale(2.0 / self.n() as f64)
    }
}

/// `X_lambda = [X, sqrt(N lambda) I]` and `Y_lambda = [Y, 0]`.
pub fn augment(p: &RidgeProblem) -> Result<(Matrix, Matrix)> {
    let d = p.x.rows();
    let block = Matrix::identity(d).scale((p.n() as f64 * p.lambda).sqrt());
    Ok((p.x.hcat(&block)?, p.y.hcat(&Matrix::zeros(p.y.rows(), d))?))
}

/// `Q_lambda = Y X^T (X X^T + N lambda I)^{-1/2}`.
pub fn q_matrix(p: &RidgeProblem) -> Result<Matrix> {
    Ok(p.cross().matmul(&spd_inv_sqrt(&p.gram())?))
}

/// `Theta* = Y X^T (X X^T + N lambda I)^{-1}`, via an SPD solve.
pub fn ridge_minimizer(p: &RidgeProblem) -> Result<Matrix> {
    // (XX^T + N lambda I) Theta^T = X Y^T
    Ok(spd_solve(&p.gram(), &p.x.matmul_t(&p.y))?.transpose())
}

/// Minimizer over matrices of rank at most `k`: the top-`k` truncation of
/// `Q_lambda` times `(X X^T + N lambda I)^{-1/2}`.
pub fn rank_constrained_minimizer(p: &RidgeProblem, k: usize) -> Result<Matrix> {
    if k == 0 {
        return Err(precondition("rank must be >= 1"));
    }
    let inv_sqrt = spd_inv_sqrt(&p.gram())?;
    let q = p.cross().matmul(&inv_sqrt);
    let qk = svd(&q)?.reconstruct_top(k);
    Ok(qk.matmul(&inv_sqrt))
}

/// A critical point built from a subset of `Q_lambda`'s singular triples.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoint {
    pub theta: Matrix,
    /// `(1/2)(Tr(YY^T) - sum_j s_j^2)`.
    pub loss_half: f64,
    /// `(1/N)(Tr(YY^T) - sum_j s_j^2)`, equal to `L_lambda(theta)`.
    pub loss_mean: f64,
}

/// `Theta = sum_j s_{i_j} u_{i_j} v_{i_j}^T (X X^T + N lambda I)^{-1/2}` for the
/// given distinct 0-based triple indices.
pub fn critical_point(p: &RidgeProblem, indices: &[usize]) -> Result<CriticalPoint> {
    let inv_sqrt = spd_inv_sqrt(&p.gram())?;
    let q = p.cross().matmul(&inv_sqrt);
    let dec = svd(&q)?;
    let r = dec.singular_values.len();
    let mut seen = vec![false; r];
    for &i in indices {
        if i >= r {
            return Err(precondition(format!("singular index {i} out of range (Q has {r})")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(precondition(format!("singular index {i} repeated")));
        }
    }
    let theta = dec.reconstruct_indices(indices).matmul(&inv_sqrt);
    let energy = p.y.norm_sq();
    let captured: f64 = indices.iter().map(|&i| dec.singular_values[i].powi(2)).sum();
    Ok(CriticalPoint {
        theta,
        loss_half: 0.5 * (energy - captured),
        loss_mean: (energy - captured) / p.n() as f64,
    })
}

/// Norm of the loss gradient projected onto the tangent space of the
/// fixed-rank manifold at `theta`:
/// `P[G] = U U^T G + G V V^T - U U^T G V V^T`.
pub fn tangent_gradient_norm(p: &RidgeProblem, theta: &Matrix, rel_tol: f64) -> Result<f64> {
    let dec = svd(theta)?;
    let rank = crate::numerics::rank_of_values(&dec.singular_values, rel_tol);
    if rank == 0 {
        return Ok(0.0);
    }
    let idx: Vec<usize> = (0..rank).collect();
    let u = dec.u.select_columns(&idx);
    let v = dec.vt.transpose().select_columns(&idx);
    let g = p.loss_gradient(theta);
    let ug = u.matmul(&u.t_matmul(&g));
    let gv = g.matmul(&v).matmul_t(&v);
    let ugv = u.matmul(&u.t_matmul(&g).matmul(&v)).matmul_t(&v);
    Ok(ug.add(&gv).sub(&ugv).frobenius_norm())
}

/// Data with every point replaced by its cluster centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidProblem {
    pub x_bar: Matrix,
    pub y_bar: Matrix,
    pub partition: Partition,
}

impl CentroidProblem {
    /// Centroid matrices of `(x, y)` under the given cluster assignments.
    pub fn new(x: &Matrix, y: &Matrix, assignments: &[usize]) -> Result<Self> {
        let partition = build_partition(x, y, assignments)?;
        Ok(Self::from_partition(partition))
    }

    pub fn from_partition(partition: Partition) -> Self {
        Self {
            x_bar: partition.repeated_z(),
            y_bar: partition.repeated_y(),
            partition,
        }
    }
}

/// `Theta*,C = Ybar Xbar^T (Xbar Xbar^T + n lambda I)^{-1}`.
pub fn centroid_minimizer(cp: &CentroidProblem, lambda: f64, n: usize) -> Result<Matrix> {
    if !(lambda > 0.0) {
        return Err(precondition("centroid minimizer requires lambda > 0"));
    }
    let mut g = cp.x_bar.matmul_t(&cp.x_bar);
    for i in 0..g.rows() {
        g[(i, i)] += n as f64 * lambda;
    }
    Ok(spd_solve(&g, &cp.x_bar.matmul_t(&cp.y_bar))?.transpose())
}

/// `(tcv / lambda) ((d / (N lambda)) ||Ybar|| ||Xbar|| + sqrt(d))`.
pub fn thm53_bound(tcv: f64, lambda: f64, d: usize, n: usize, xbar_norm: f64, ybar_norm: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(precondition("bound requires lambda > 0"));
    }
    let d = d as f64;
    Ok(tcv / lambda * (d / (n as f64 * lambda) * ybar_norm * xbar_norm + d.sqrt()))
}

/// `sqrt(d min(d, c) TCV_K(Y) / lambda)`.
pub fn thm54_bound(d: usize, c: usize, lambda: f64, label_tcv: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(precondition("bound requires lambda > 0"));
    }
    Ok((d as f64 * d.min(c) as f64 * label_tcv / lambda).sqrt())
}
