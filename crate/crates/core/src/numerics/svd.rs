//! One-sided (Hestenes) Jacobi SVD.
//!
//! Columns of the working matrix are rotated pairwise until every pair is
//! orthogonal to working precision. The singular values are then the column
//! norms and the normalized columns are the left singular vectors; the
//! accumulated rotations give the right singular vectors.

use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `a = u * diag(singular_values) * vt` with `r = min(rows, cols)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdResult {
    /// `m x r`, orthonormal columns.
    pub u: Matrix,
    /// Non-increasing, non-negative.
    pub singular_values: Vec<f64>,
    /// `r x n`, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    pub fn rank_capacity(&self) -> usize {
        self.singular_values.len()
    }

    /// `u * diag(s) * vt` using only the first `k` triples.
    pub fn reconstruct_top(&self, k: usize) -> Matrix {
        let k = k.min(self.singular_values.len());
        let (m, n) = (self.u.rows(), self.vt.cols());
        let mut out = Matrix::zeros(m, n);
        for t in 0..k {
            let s = self.singular_values[t];
            if s == 0.0 {
                continue;
            }
            let v = self.vt.row(t);
            for i in 0..m {
                let ui = self.u[(i, t)] * s;
                if ui == 0.0 {
                    continue;
                }
                for (o, &vj) in out.row_mut(i).iter_mut().zip(v) {
                    *o += ui * vj;
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_top(self.singular_values.len())
    }

    /// Sum of `u_i s_i v_i^T` over the selected triple indices.
    pub fn reconstruct_indices(&self, indices: &[usize]) -> Matrix {
        let (m, n) = (self.u.rows(), self.vt.cols());
        let mut out = Matrix::zeros(m, n);
        for &t in indices {
            let s = self.singular_values[t];
            let v = self.vt.row(t);
            for i in 0..m {
                let ui = self.u[(i, t)] * s;
                for (o, &vj) in out.row_mut(i).iter_mut().zip(v) {
                    *o += ui * vj;
                }
            }
        }
        out
    }
}

/// Singular value decomposition of a finite matrix.
///
/// Each left singular vector is signed so its first entry of magnitude above
/// `1e-12` is positive, which makes results reproducible.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    let (m, n) = a.shape();
    if m < n {
        // a^T = U' S V'^T  =>  a = V' S U'^T
        let t = svd_tall(&a.transpose())?;
        let mut res = SvdResult {
            u: t.vt.transpose(),
            singular_values: t.singular_values,
            vt: t.u.transpose(),
        };
        fix_signs(&mut res);
        return Ok(res);
    }
    let mut res = svd_tall(a)?;
    fix_signs(&mut res);
    Ok(res)
}

/// Jacobi sweeps for `m >= n`.
fn svd_tall(a: &Matrix) -> Result<SvdResult> {
    let (m, n) = a.shape();
    // column-major copies of a and of the accumulated rotation
    let mut g = a.transpose().into_vec();
    let mut v = Matrix::identity(n).into_vec();
    let eps = f64::EPSILON * (m.max(1) as f64);
    // columns below this squared norm are numerically zero
    let negligible = (f64::EPSILON * a.frobenius_norm()).powi(2);

    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NumericFailure { iterations: sweeps });
        }
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (gp, gq) = column_pair(&mut g, m, p, q);
                let alpha = dot(gp, gp);
                let beta = dot(gq, gq);
                let gamma = dot(gp, gq);
                if gamma == 0.0 || alpha <= negligible || beta <= negligible {
                    continue;
                }
                if gamma.abs() <= eps * (alpha.sqrt() * beta.sqrt()) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(gp, gq, c, s);
                let (vp, vq) = column_pair(&mut v, n, p, q);
                rotate(vp, vq, c, s);
            }
        }
        converged = !rotated;
    }

    let mut order: Vec<(usize, f64)> = (0..n)
        .map(|j| (j, dot(&g[j * m..(j + 1) * m], &g[j * m..(j + 1) * m]).sqrt()))
        .collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let smax = order.first().map_or(0.0, |o| o.1);
    let null_tol = smax * eps;

    let mut u = Matrix::zeros(m, n);
    let mut vt = Matrix::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    let mut null_slots = Vec::new();
    for (slot, &(j, s)) in order.iter().enumerate() {
        singular_values.push(s);
        let col = &g[j * m..(j + 1) * m];
        if s > null_tol && s > 0.0 {
            for (i, &x) in col.iter().enumerate() {
                u[(i, slot)] = x / s;
            }
        } else {
            null_slots.push(slot);
        }
        vt.row_mut(slot).copy_from_slice(&v[j * n..(j + 1) * n]);
    }
    complete_orthonormal(&mut u, &null_slots);
    Ok(SvdResult {
        u,
        singular_values,
        vt,
    })
}

fn column_pair(buf: &mut [f64], len: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (head, tail) = buf.split_at_mut(q * len);
    (&mut head[p * len..(p + 1) * len], &mut tail[..len])
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to every
/// other column, by Gram-Schmidt over the standard basis.
fn complete_orthonormal(u: &mut Matrix, slots: &[usize]) {
    if slots.is_empty() {
        return;
    }
    let m = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|c| !slots.contains(c)).collect();
    let mut candidate = 0;
    for &slot in slots {
        loop {
            assert!(candidate < m, "cannot complete orthonormal basis");
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &c in &filled {
                    let col = u.col(c);
                    let proj = dot(&col, &e);
                    for (ei, ci) in e.iter_mut().zip(&col) {
                        *ei -= proj * ci;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > 1e-8 {
                e.iter_mut().for_each(|x| *x /= norm);
                u.set_col(slot, &e);
                filled.push(slot);
                break;
            }
        }
    }
}

fn fix_signs(res: &mut SvdResult) {
    let m = res.u.rows();
    for t in 0..res.singular_values.len() {
        let lead = (0..m).map(|i| res.u[(i, t)]).find(|x| x.abs() > 1e-12);
        if matches!(lead, Some(x) if x < 0.0) {
            for i in 0..m {
                res.u[(i, t)] = -res.u[(i, t)];
            }
            for x in res.vt.row_mut(t) {
                *x = -*x;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::test_util::random_matrix;

    fn orthonormality_error(q: &Matrix) -> f64 {
        q.t_matmul(q).sub(&Matrix::identity(q.cols())).frobenius_norm()
    }

    fn assert_valid(a: &Matrix, res: &SvdResult) {
        let r = a.rows().min(a.cols());
        assert_eq!(res.singular_values.len(), r);
        assert!(res.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert!(res.singular_values.iter().all(|&s| s >= 0.0));
        assert!(orthonormality_error(&res.u) <= 1e-10 * r as f64);
        assert!(orthonormality_error(&res.vt.transpose()) <= 1e-10 * r as f64);
        let err = a.sub(&res.reconstruct()).frobenius_norm();
        assert!(err <= 1e-9 * (1.0 + a.frobenius_norm()), "reconstruction {err}");
    }

    #[test]
    fn rank_deficient_with_zero_padding() {
        let mut a = Matrix::zeros(6, 6);
        let b = random_matrix(2, 3, 4);
        for i in 0..2 {
            for j in 0..3 {
                a[(i, j)] = b[(i, j)];
                a[(i, j + 3)] = 2.0 * b[(i, j)];
            }
        }
        let d = svd(&a).unwrap();
        assert!(d.reconstruct().sub(&a).frobenius_norm() < 1e-12);
        assert!(d.singular_values[2] < 1e-12 * d.singular_values[0]);
    }

    #[test]
    fn identity_and_diagonal() {
        let res = svd(&Matrix::identity(3)).unwrap();
        assert_eq!(res.singular_values, vec![1.0, 1.0, 1.0]);
        let res = svd(&Matrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(res.singular_values, vec![3.0, 1.0]);
        let res = svd(&Matrix::diag(&[1.0, 3.0])).unwrap();
        assert_eq!(res.singular_values, vec![3.0, 1.0]);
    }

    #[test]
    fn random_5x3_seed7_reconstructs() {
        let a = random_matrix(5, 3, 7);
        let res = svd(&a).unwrap();
        assert_valid(&a, &res);
        assert!(a.sub(&res.reconstruct()).frobenius_norm() <= 1e-9);
    }

    #[test]
    fn wide_and_rank_deficient() {
        let a = random_matrix(3, 6, 1);
        assert_valid(&a, &svd(&a).unwrap());

        let u = random_matrix(6, 1, 2);
        let v = random_matrix(1, 4, 3);
        let outer = u.matmul(&v);
        let res = svd(&outer).unwrap();
        assert_valid(&outer, &res);
        assert!(res.singular_values[1] <= 1e-14 * res.singular_values[0]);

        let z = Matrix::zeros(4, 3);
        let res = svd(&z).unwrap();
        assert_valid(&z, &res);
        assert_eq!(res.singular_values, vec![0.0; 3]);
    }

    #[test]
    fn signs_are_normalized() {
        let a = random_matrix(5, 4, 9);
        let res = svd(&a).unwrap();
        for t in 0..4 {
            let lead = (0..5).map(|i| res.u[(i, t)]).find(|x| x.abs() > 1e-12).unwrap();
            assert!(lead > 0.0);
        }
        assert_eq!(svd(&a).unwrap(), res);
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = Matrix::identity(2);
        a[(0, 1)] = f64::INFINITY;
        assert!(matches!(svd(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn matches_nalgebra_singular_values() {
        for seed in 0..10 {
            let a = random_matrix(7, 5, 100 + seed);
            let ours = svd(&a).unwrap().singular_values;
            let na = nalgebra::DMatrix::from_row_slice(7, 5, a.as_slice());
            let mut theirs: Vec<f64> = na.singular_values().iter().copied().collect();
            theirs.sort_by(|x, y| y.total_cmp(x));
            for (x, y) in ours.iter().zip(&theirs) {
                assert!((x - y).abs() <= 1e-12 * theirs[0], "{x} vs {y}");
            }
        }
    }
}
