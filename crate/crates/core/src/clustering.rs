//! Partitions of joined `(z, y)` points, within-cluster sums of squares and
//! total-cluster-variation estimates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::GaussianMixtureSpec;
use crate::error::{precondition, shape, Result};
use crate::numerics::Matrix;
use crate::rng::{stream, stream_id};

const KMEANS_STREAM: u16 = 0x6b6d;
const MAX_LLOYD_ITERATIONS: usize = 300;

/// Default number of k-means restarts.
pub const DEFAULT_RESTARTS: usize = 8;

/// Assignment of `N` joined points to `k` non-empty clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignments: Vec<usize>,
    pub k: usize,
    pub centroids_z: Vec<Vec<f64>>,
    pub centroids_y: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Partition {
    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    /// Member indices of every cluster, in ascending order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k];
        for (i, &a) in self.assignments.iter().enumerate() {
            m[a].push(i);
        }
        m
    }

    /// Centroids of `z` as the columns of a `d_z x k` matrix.
    pub fn centroid_z_matrix(&self) -> Matrix {
        let dim = self.centroids_z.first().map_or(0, Vec::len);
        Matrix::from_fn(dim, self.k, |i, j| self.centroids_z[j][i])
    }

    pub fn centroid_y_matrix(&self) -> Matrix {
        let dim = self.centroids_y.first().map_or(0, Vec::len);
        Matrix::from_fn(dim, self.k, |i, j| self.centroids_y[j][i])
    }

    /// `[rep(zbar_1, N_1) ... rep(zbar_k, N_k)]` laid out in the original
    /// sample order, so column `i` is the centroid of sample `i`'s cluster.
    pub fn repeated_z(&self) -> Matrix {
        let c = self.centroid_z_matrix();
        c.select_columns(&self.assignments)
    }

    pub fn repeated_y(&self) -> Matrix {
        let c = self.centroid_y_matrix();
        c.select_columns(&self.assignments)
    }
}

fn check_pair(z: &Matrix, y: &Matrix) -> Result<usize> {
    if z.cols() != y.cols() {
        return Err(shape(format!("z has {} columns, y has {}", z.cols(), y.cols())));
    }
    Ok(z.cols())
}

/// Partition with exact centroid means; cluster ids must be `0..k` with none empty.
pub fn build_partition(z: &Matrix, y: &Matrix, assignments: &[usize]) -> Result<Partition> {
    let n = check_pair(z, y)?;
    if assignments.len() != n {
        return Err(shape(format!("{} assignments for {n} points", assignments.len())));
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(precondition(format!("cluster id {empty} has no members")));
    }
    let means = |m: &Matrix| {
        let mut c = vec![vec![0.0; m.rows()]; k];
        for (j, &a) in assignments.iter().enumerate() {
            for (i, ci) in c[a].iter_mut().enumerate() {
                *ci += m[(i, j)];
            }
        }
        for (ck, &s) in c.iter_mut().zip(&sizes) {
            ck.iter_mut().for_each(|v| *v /= s as f64);
        }
        c
    };
    Ok(Partition {
        assignments: assignments.to_vec(),
        k,
        centroids_z: means(z),
        centroids_y: means(y),
        weights: sizes.iter().map(|&s| s as f64 / n as f64).collect(),
        sizes,
    })
}

/// `(1/N) sum_k sum_{i in C_k} ||(z_i, y_i) - (zbar_k, ybar_k)||^2`.
pub fn wcss(z: &Matrix, y: &Matrix, p: &Partition) -> Result<f64> {
    let n = check_pair(z, y)?;
    if p.n() != n {
        return Err(shape(format!("partition covers {} points, data has {n}", p.n())));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (j, &a) in p.assignments.iter().enumerate() {
        for (i, c) in p.centroids_z[a].iter().enumerate() {
            total += (z[(i, j)] - c).powi(2);
        }
        for (i, c) in p.centroids_y[a].iter().enumerate() {
            total += (y[(i, j)] - c).powi(2);
        }
    }
    Ok(total / n as f64)
}

/// WCSS of the partition induced by class labels.
pub fn class_partition_wcss(z: &Matrix, y: &Matrix, class_labels: &[usize]) -> Result<f64> {
    let p = build_partition(z, y, class_labels)?;
    wcss(z, y, &p)
}

fn joined_points(z: &Matrix, y: &Matrix) -> Vec<Vec<f64>> {
    (0..z.cols())
        .map(|j| {
            let mut v = z.col(j);
            v.extend(y.col(j));
            v
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd state over joined points.
struct Clustering<'a> {
    points: &'a [Vec<f64>],
    centroids: Vec<Vec<f64>>,
    assignments: Vec<usize>,
    sizes: Vec<usize>,
}

impl<'a> Clustering<'a> {
    fn seed_plus_plus(points: &'a [Vec<f64>], k: usize, rng: &mut impl Rng) -> Self {
        let n = points.len();
        let mut centroids = vec![points[rng.random_range(0..n)].clone()];
        let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
        while centroids.len() < k {
            let total: f64 = nearest.iter().sum();
            let next = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut pick = n - 1;
                for (i, &d) in nearest.iter().enumerate() {
                    if target < d {
                        pick = i;
                        break;
                    }
                    target -= d;
                }
                pick
            } else {
                rng.random_range(0..n)
            };
            centroids.push(points[next].clone());
            for (d, p) in nearest.iter_mut().zip(points) {
                *d = d.min(sq_dist(p, centroids.last().unwrap()));
            }
        }
        Self {
            points,
            centroids,
            assignments: vec![0; n],
            sizes: vec![0; k],
        }
    }

    fn assign(&mut self) -> bool {
        let mut changed = false;
        self.sizes.iter_mut().for_each(|s| *s = 0);
        for (i, p) in self.points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in self.centroids.iter().enumerate() {
                let d = sq_dist(p, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if self.assignments[i] != best {
                self.assignments[i] = best;
                changed = true;
            }
            self.sizes[best] += 1;
        }
        changed
    }

    fn update_centroids(&mut self) {
        let dim = self.points[0].len();
        for c in &mut self.centroids {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        for (p, &a) in self.points.iter().zip(&self.assignments) {
            for (c, v) in self.centroids[a].iter_mut().zip(p) {
                *c += v;
            }
        }
        for (c, &s) in self.centroids.iter_mut().zip(&self.sizes) {
            if s > 0 {
                c.iter_mut().for_each(|v| *v /= s as f64);
            }
        }
        debug_assert!(self.centroids.iter().all(|c| c.len() == dim));
    }

    /// Moves the point farthest from its centroid into each empty cluster.
    fn reseed_empty(&mut self) -> bool {
        let mut reseeded = false;
        while let Some(empty) = self.sizes.iter().position(|&s| s == 0) {
            let far = (0..self.points.len())
                .filter(|&i| self.sizes[self.assignments[i]] > 1)
                .max_by(|&a, &b| {
                    let da = sq_dist(&self.points[a], &self.centroids[self.assignments[a]]);
                    let db = sq_dist(&self.points[b], &self.centroids[self.assignments[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                });
            let Some(far) = far else { break };
            self.sizes[self.assignments[far]] -= 1;
            self.assignments[far] = empty;
            self.sizes[empty] = 1;
            reseeded = true;
        }
        if reseeded {
            self.update_centroids();
        }
        reseeded
    }

    fn lloyd(&mut self) {
        for _ in 0..MAX_LLOYD_ITERATIONS {
            let changed = self.assign();
            self.update_centroids();
            let reseeded = self.reseed_empty();
            if !changed && !reseeded {
                break;
            }
        }
    }

    /// Single-point transfers that strictly lower the objective (Hartigan's
    /// criterion), which escapes some Lloyd fixed points.
    fn refine(&mut self) {
        let dim = self.points[0].len();
        loop {
            let mut moved = false;
            for i in 0..self.points.len() {
                let from = self.assignments[i];
                let n_from = self.sizes[from] as f64;
                if n_from <= 1.0 {
                    continue;
                }
                let p = &self.points[i];
                let cost_out = n_from / (n_from - 1.0) * sq_dist(p, &self.centroids[from]);
                let mut best = None;
                let mut best_gain = 1e-12 * (1.0 + cost_out);
                for to in (0..self.centroids.len()).filter(|&c| c != from) {
                    let n_to = self.sizes[to] as f64;
                    let cost_in = n_to / (n_to + 1.0) * sq_dist(p, &self.centroids[to]);
                    let gain = cost_out - cost_in;
                    if gain > best_gain {
                        best_gain = gain;
                        best = Some(to);
                    }
                }
                if let Some(to) = best {
                    let n_to = self.sizes[to] as f64;
                    for d in 0..dim {
                        let v = p[d];
                        self.centroids[from][d] = (self.centroids[from][d] * n_from - v) / (n_from - 1.0);
                        self.centroids[to][d] = (self.centroids[to][d] * n_to + v) / (n_to + 1.0);
                    }
                    self.sizes[from] -= 1;
                    self.sizes[to] += 1;
                    self.assignments[i] = to;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }

    fn objective(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.assignments)
            .map(|(p, &a)| sq_dist(p, &self.centroids[a]))
            .sum()
    }
}

/// k-means on joined `(z, y)` vectors: k-means++ seeding, Lloyd iterations and
/// single-point refinement, best of `restarts` runs (ties to the earliest).
pub fn kmeans(z: &Matrix, y: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<Partition> {
    let n = check_pair(z, y)?;
    if k == 0 || k > n {
        return Err(precondition(format!("kmeans needs 1 <= k <= N, got k={k}, N={n}")));
    }
    let points = joined_points(z, y);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = stream(seed, stream_id(KMEANS_STREAM, restart as u32, k as u16));
        let mut run = Clustering::seed_plus_plus(&points, k, &mut rng);
        run.lloyd();
        run.refine();
        // exact recomputation so the comparison does not see incremental drift
        run.update_centroids();
        let obj = run.objective();
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, run.assignments));
        }
    }
    let (_, assignments) = best.expect("at least one restart");
    build_partition(z, y, &assignments)
}

/// `min_{r = 1..=k_max}` of the k-means WCSS; an upper bound on the TCV.
pub fn tcv_estimate(z: &Matrix, y: &Matrix, k_max: usize, restarts: usize, seed: u64) -> Result<f64> {
    let n = check_pair(z, y)?;
    if k_max == 0 || k_max > n {
        return Err(precondition(format!("tcv needs 1 <= k_max <= N, got {k_max}, N={n}")));
    }
    let mut best = f64::INFINITY;
    for r in 1..=k_max {
        let p = kmeans(z, y, r, restarts, seed)?;
        best = best.min(wcss(z, y, &p)?);
    }
    Ok(best)
}

/// TCV of the labels alone.
pub fn label_tcv(y: &Matrix, k_max: usize, restarts: usize, seed: u64) -> Result<f64> {
    tcv_estimate(&Matrix::zeros(0, y.cols()), y, k_max, restarts, seed)
}

/// `sum_k pi_k (Tr(S_k) + ||S_k||_F / sqrt(N_k))`, the high-probability bound on
/// the TCV of a Gaussian mixture.
pub fn gaussian_tcv_bound(spec: &GaussianMixtureSpec) -> Result<f64> {
    spec.validate()?;
    let d = spec.dim();
    Ok(spec
        .covariances
        .iter()
        .zip(&spec.counts)
        .zip(spec.weights())
        .map(|((cov, &nk), pi)| pi * (cov.trace(d) + cov.frobenius_norm(d) / (nk as f64).sqrt()))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Covariance;

    fn line(values: &[f64]) -> Matrix {
        Matrix::from_vec(1, values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn partition_basics() {
        let z = line(&[0.0, 2.0]);
        let y = Matrix::zeros(1, 2);
        let p = build_partition(&z, &y, &[0, 0]).unwrap();
        assert_eq!(p.centroids_z, vec![vec![1.0]]);
        assert_eq!(wcss(&z, &y, &p).unwrap(), 1.0);

        let same = line(&[3.0, 3.0]);
        let p = build_partition(&same, &y, &[0, 0]).unwrap();
        assert_eq!(p.sizes, vec![2]);
        assert_eq!(p.centroids_z[0], vec![3.0]);

        let p = build_partition(&z, &y, &[1, 0]).unwrap();
        assert_eq!(p.centroids_z, vec![vec![2.0], vec![0.0]]);
        assert_eq!(wcss(&z, &y, &p).unwrap(), 0.0);

        assert!(build_partition(&z, &y, &[0, 2]).is_err());
    }

    #[test]
    fn repeated_centroids_follow_sample_order() {
        let z = line(&[0.0, 10.0, 2.0]);
        let y = Matrix::zeros(0, 3);
        let p = build_partition(&z, &y, &[0, 1, 0]).unwrap();
        assert_eq!(p.repeated_z().as_slice(), &[1.0, 10.0, 1.0]);
    }

    #[test]
    fn kmeans_singletons_and_blobs() {
        let z = Matrix::from_rows(&[vec![0.0, 0.0, 10.0, 10.0, 0.0, 0.0, 10.0, 10.0], vec![
            0.0, 0.0, 0.0, 0.0, 10.0, 10.0, 10.0, 10.0,
        ]])
        .unwrap();
        let y = Matrix::zeros(0, 8);
        let p = kmeans(&z, &y, 4, DEFAULT_RESTARTS, 0).unwrap();
        assert_eq!(wcss(&z, &y, &p).unwrap(), 0.0);
        for pair in [(0, 1), (2, 3), (4, 5), (6, 7)] {
            assert_eq!(p.assignments[pair.0], p.assignments[pair.1]);
        }
        let p = kmeans(&z, &y, 8, DEFAULT_RESTARTS, 0).unwrap();
        assert_eq!(wcss(&z, &y, &p).unwrap(), 0.0);
        assert!(kmeans(&z, &y, 9, 1, 0).is_err());
    }

    #[test]
    fn kmeans_is_deterministic() {
        let z = crate::numerics::test_util::random_matrix(3, 30, 1);
        let y = Matrix::zeros(0, 30);
        assert_eq!(kmeans(&z, &y, 3, 4, 7).unwrap(), kmeans(&z, &y, 3, 4, 7).unwrap());
    }

    #[test]
    fn tcv_cases() {
        let z = line(&[1.0, 1.0, 5.0, 5.0, 9.0]);
        let y = Matrix::zeros(0, 5);
        assert_eq!(tcv_estimate(&z, &y, 3, 4, 0).unwrap(), 0.0);
        let single = tcv_estimate(&z, &y, 1, 4, 0).unwrap();
        let mean = 21.0 / 5.0;
        let var = [1.0f64, 1.0, 5.0, 5.0, 9.0].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((single - var).abs() < 1e-12);
    }

    #[test]
    fn label_tcv_one_hot_is_zero() {
        let labels = [0usize, 1, 2, 0, 1, 2, 2];
        let y = Matrix::from_fn(3, 7, |i, j| if labels[j] == i { 1.0 } else { 0.0 });
        assert_eq!(label_tcv(&y, 3, 4, 0).unwrap(), 0.0);
        let one = label_tcv(&y, 1, 4, 0).unwrap();
        let empty = Matrix::zeros(0, 7);
        let p = build_partition(&empty, &y, &[0; 7]).unwrap();
        assert!((one - wcss(&empty, &y, &p).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn class_partition_cases() {
        let z = line(&[1.0, 1.0, 4.0]);
        let y = Matrix::zeros(1, 3);
        assert_eq!(class_partition_wcss(&z, &y, &[0, 0, 1]).unwrap(), 0.0);
        let z = line(&[1.0, 4.0]);
        assert_eq!(class_partition_wcss(&z, &Matrix::zeros(1, 2), &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_bound_arithmetic() {
        let spec = GaussianMixtureSpec::isotropic(vec![vec![0.0; 4], vec![1.0; 4]], 0.5, 100, 0);
        assert!((gaussian_tcv_bound(&spec).unwrap() - 1.05).abs() < 1e-12);
        let zero = GaussianMixtureSpec::isotropic(vec![vec![0.0; 4]], 0.0, 10, 0);
        assert_eq!(gaussian_tcv_bound(&zero).unwrap(), 0.0);

        let (d, sigma, n) = (3usize, 0.8f64, 50usize);
        let full = GaussianMixtureSpec {
            means: vec![vec![0.0; d]],
            covariances: vec![Covariance::Full(Matrix::identity(d).scale(sigma * sigma))],
            counts: vec![n],
            seed: 0,
        };
        let iso = GaussianMixtureSpec::isotropic(vec![vec![0.0; d]], sigma, n, 0);
        let closed = (d as f64).sqrt() * sigma * sigma * ((d as f64).sqrt() + (1.0 / n as f64).sqrt());
        assert!((gaussian_tcv_bound(&full).unwrap() - closed).abs() < 1e-12);
        assert!((gaussian_tcv_bound(&iso).unwrap() - closed).abs() < 1e-12);
    }
}
