//! Symmetric eigendecomposition and symmetric positive definite helpers.

use super::matrix::Matrix;
use crate::error::{precondition, Error, Result};

const MAX_SWEEPS: usize = 100;

/// Relative tolerance used to decide that a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues at or below this fraction of the largest are treated as
/// non-positive by the root computations.
pub const EIGEN_FLOOR: f64 = 1e-14;

/// Eigendecomposition `a = vectors * diag(values) * vectors^T` of a symmetric
/// matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors.
    pub vectors: Matrix,
}

impl SymmetricEigen {
    /// `vectors * diag(f(values)) * vectors^T`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        let scaled = Matrix::from_fn(n, n, |i, j| self.vectors[(i, j)] * fv[j]);
        let mut out = scaled.matmul_t(&self.vectors);
        symmetrize(&mut out);
        out
    }
}

fn check_symmetric(a: &Matrix) -> Result<()> {
    let asym = a
        .asymmetry()
        .ok_or_else(|| precondition(format!("matrix is {}x{}, not square", a.rows(), a.cols())))?;
    if asym > SYMMETRY_TOL * a.max_abs().max(1.0) {
        return Err(precondition(format!("matrix is not symmetric (asymmetry {asym:e})")));
    }
    Ok(())
}

fn symmetrize(a: &mut Matrix) {
    let n = a.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Cyclic Jacobi eigenvalue iteration.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    check_symmetric(a)?;
    if !a.is_finite() {
        return Err(Error::NonFinite("eigen input".into()));
    }
    let n = a.rows();
    let mut m = a.clone();
    symmetrize(&mut m);
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();

    let mut sweeps = 0;
    loop {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || scale == 0.0 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::NumericFailure { iterations: sweeps });
        }
        sweeps += 1;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[(y, y)].total_cmp(&m[(x, x)]).then(x.cmp(&y)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymmetricEigen { values, vectors })
}

fn positive_spectrum(a: &Matrix) -> Result<SymmetricEigen> {
    let eig = symmetric_eigen(a)?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    let min = eig.values.last().copied().unwrap_or(0.0);
    if top <= 0.0 || min <= EIGEN_FLOOR * top {
        return Err(Error::NotPositiveDefinite(format!(
            "smallest eigenvalue {min:e}, largest {top:e}"
        )));
    }
    Ok(eig)
}

/// The unique symmetric positive definite square root.
pub fn spd_sqrt(a: &Matrix) -> Result<Matrix> {
    Ok(positive_spectrum(a)?.map_spectrum(f64::sqrt))
}

/// `a^{-1/2}` for symmetric positive definite `a`.
pub fn spd_inv_sqrt(a: &Matrix) -> Result<Matrix> {
    Ok(positive_spectrum(a)?.map_spectrum(|v| 1.0 / v.sqrt()))
}

/// Lower Cholesky factor; fails on a non-positive pivot.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    check_symmetric(a)?;
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    let scale = (0..n).fold(0.0f64, |s, i| s.max(a[(i, i)].abs()));
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d.is_nan() || d <= EIGEN_FLOOR * scale {
            return Err(Error::NotPositiveDefinite(format!(
                "pivot {j} is {d:e}"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `a * x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(crate::error::shape(format!(
            "spd_solve: a is {}x{}, b is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let l = cholesky(a)?;
    let n = a.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        // forward: L y = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::test_util::{random_matrix, random_spd};

    #[test]
    fn solve_identity_and_diagonal() {
        let b = random_matrix(3, 2, 1);
        let x = spd_solve(&Matrix::identity(3), &b).unwrap();
        assert!(x.sub(&b).max_abs() < 1e-15);
        let x = spd_solve(&Matrix::diag(&[2.0, 4.0]), &Matrix::identity(2)).unwrap();
        assert!(x.sub(&Matrix::diag(&[0.5, 0.25])).max_abs() < 1e-15);
    }

    #[test]
    fn solve_random_spd_residual() {
        let a = random_spd(6, 5);
        let b = random_matrix(6, 3, 55);
        let x = spd_solve(&a, &b).unwrap();
        let resid = a.matmul(&x).sub(&b).frobenius_norm();
        assert!(resid <= 1e-8 * (1.0 + b.frobenius_norm()));
    }

    #[test]
    fn solve_rejects_indefinite() {
        let a = Matrix::diag(&[1.0, -1.0]);
        assert!(matches!(
            spd_solve(&a, &Matrix::identity(2)),
            Err(Error::NotPositiveDefinite(_))
        ));
        let asym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(spd_solve(&asym, &Matrix::identity(2)), Err(Error::Precondition(_))));
    }

    #[test]
    fn inv_sqrt_diagonal_cases() {
        assert!(spd_inv_sqrt(&Matrix::identity(3)).unwrap().sub(&Matrix::identity(3)).max_abs() < 1e-15);
        let r = spd_inv_sqrt(&Matrix::diag(&[4.0, 9.0])).unwrap();
        assert!(r.sub(&Matrix::diag(&[0.5, 1.0 / 3.0])).max_abs() < 1e-15);
    }

    #[test]
    fn inv_sqrt_random_spd_seed9() {
        let a = random_spd(5, 9);
        let r = spd_inv_sqrt(&a).unwrap();
        assert!(r.asymmetry().unwrap() == 0.0);
        let eye = Matrix::identity(5);
        assert!(r.matmul(&r).matmul(&a).sub(&eye).frobenius_norm() <= 1e-7);
        assert!(r.matmul(&a).matmul(&r).sub(&eye).frobenius_norm() <= 1e-8);
        // commutes with a
        assert!(r.matmul(&a).sub(&a.matmul(&r)).frobenius_norm() <= 1e-8 * a.frobenius_norm());
    }

    #[test]
    fn inv_sqrt_rejects_singular() {
        let a = Matrix::diag(&[1.0, 0.0]);
        assert!(matches!(spd_inv_sqrt(&a), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn sqrt_squares_back() {
        let a = random_spd(4, 21);
        let s = spd_sqrt(&a).unwrap();
        assert!(s.matmul(&s).sub(&a).frobenius_norm() <= 1e-10 * a.frobenius_norm());
    }

    #[test]
    fn eigen_of_indefinite_matrix() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = symmetric_eigen(&a).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[1] + 1.0).abs() < 1e-14);
        assert!(e.map_spectrum(|v| v).sub(&a).max_abs() < 1e-14);
    }
}
