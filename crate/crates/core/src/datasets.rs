//! Gaussian-mixture generators and IDX (MNIST-style) loaders.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{precondition, shape, Error, Result};
use crate::numerics::{spd_sqrt, Matrix};
use crate::rng::{stream, stream_id, uniform_on_sphere, NormalSampler};

const MIXTURE_STREAM: u16 = 0x6d78;
const MEANS_STREAM: u16 = 0x6d75;

/// Per-cluster covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Covariance {
    /// `sigma^2 I`; holds the standard deviation `sigma >= 0`.
    Isotropic(f64),
    /// Symmetric positive definite matrix.
    Full(Matrix),
}

impl Covariance {
    pub fn trace(&self, dim: usize) -> f64 {
        match self {
            Covariance::Isotropic(s) => dim as f64 * s * s,
            Covariance::Full(m) => m.trace(),
        }
    }

    pub fn frobenius_norm(&self, dim: usize) -> f64 {
        match self {
            Covariance::Isotropic(s) => (dim as f64).sqrt() * s * s,
            Covariance::Full(m) => m.frobenius_norm(),
        }
    }

    /// Stable rank `||S||_F^2 / ||S||_2^2`; zero for a zero covariance.
    pub fn stable_rank(&self, dim: usize) -> Result<f64> {
        match self {
            Covariance::Isotropic(s) if *s == 0.0 => Ok(0.0),
            Covariance::Isotropic(_) => Ok(dim as f64),
            Covariance::Full(m) => {
                let top = crate::numerics::svd(m)?.singular_values[0];
                Ok(if top == 0.0 { 0.0 } else { m.norm_sq() / (top * top) })
            }
        }
    }
}

/// Mixture of `k` Gaussians with explicit means, covariances and counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Covariance>,
    pub counts: Vec<usize>,
    pub seed: u64,
}

impl GaussianMixtureSpec {
    /// Balanced isotropic mixture with shared `sigma`.
    pub fn isotropic(means: Vec<Vec<f64>>, sigma: f64, per_cluster: usize, seed: u64) -> Self {
        let k = means.len();
        Self {
            means,
            covariances: vec![Covariance::Isotropic(sigma); k],
            counts: vec![per_cluster; k],
            seed,
        }
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Mixture weights `N_k / N`.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (k, d) = (self.k(), self.dim());
        if k == 0 || d == 0 {
            return Err(precondition("mixture needs at least one cluster and dimension"));
        }
        if self.covariances.len() != k || self.counts.len() != k {
            return Err(precondition(format!(
                "{k} means but {} covariances and {} counts",
                self.covariances.len(),
                self.counts.len()
            )));
        }
        if self.means.iter().any(|m| m.len() != d) {
            return Err(shape("all means must share one dimension"));
        }
        if self.means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixture mean".into()));
        }
        if self.counts.iter().any(|&c| c == 0) {
            return Err(precondition("every cluster count must be >= 1"));
        }
        for c in &self.covariances {
            match c {
                Covariance::Isotropic(s) if !(s.is_finite() && *s >= 0.0) => {
                    return Err(precondition(format!("isotropic sigma {s} must be finite and >= 0")));
                }
                Covariance::Full(m) if m.shape() != (d, d) => {
                    return Err(shape(format!("covariance is {}x{}, expected {d}x{d}", m.rows(), m.cols())));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// `k` means drawn uniformly from the sphere of radius `radius` in `R^dim`.
pub fn random_means_on_sphere(k: usize, dim: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut sampler = NormalSampler::new(stream(seed, stream_id(MEANS_STREAM, 0, 0)));
    (0..k).map(|_| uniform_on_sphere(&mut sampler, dim, radius)).collect()
}

/// Balanced isotropic mixture with means on a sphere, the synthetic task used
/// by the sweeps and checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureTask {
    pub dim: usize,
    pub k: usize,
    pub per_cluster: usize,
    pub sigma: f64,
    pub mean_radius: f64,
    /// Targets equal inputs when true, one-hot cluster indicators otherwise.
    pub autoencoder: bool,
}

impl Default for MixtureTask {
    /// The reduced autoencoder task: `d = 32`, `K = 4`, `N = 1000`.
    fn default() -> Self {
        Self {
            dim: 32,
            k: 4,
            per_cluster: 250,
            sigma: 0.05,
            mean_radius: 2.5,
            autoencoder: true,
        }
    }
}

impl MixtureTask {
    /// Means and draws both keyed by `seed`, so tasks differing only in
    /// `sigma` share means and standardized deviations.
    pub fn spec(&self, seed: u64) -> GaussianMixtureSpec {
        let means = random_means_on_sphere(self.k, self.dim, self.mean_radius, seed);
        GaussianMixtureSpec::isotropic(means, self.sigma, self.per_cluster, seed)
    }

    pub fn sample(&self, seed: u64) -> Result<Dataset> {
        let ds = sample_gaussian_mixture(&self.spec(seed))?;
        Ok(if self.autoencoder { autoencoder_labels(&ds) } else { ds })
    }
}

/// Inputs `x` (`d x N`) paired with targets `y` (`c x N`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub class_labels: Option<Vec<usize>>,
    pub provenance: Option<GaussianMixtureSpec>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix, class_labels: Option<Vec<usize>>) -> Result<Self> {
        if x.cols() != y.cols() {
            return Err(shape(format!("x has {} columns, y has {}", x.cols(), y.cols())));
        }
        if let Some(l) = &class_labels {
            if l.len() != x.cols() {
                return Err(shape(format!("{} labels for {} samples", l.len(), x.cols())));
            }
        }
        Ok(Self {
            x,
            y,
            class_labels,
            provenance: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.x.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.y.rows()
    }

    /// Number of classes (`max label + 1`), if labels are present.
    pub fn num_classes(&self) -> Option<usize> {
        self.class_labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// Sub-dataset made of the listed samples, in order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_columns(indices),
            y: self.y.select_columns(indices),
            class_labels: self
                .class_labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            provenance: None,
        }
    }
}

/// Draws `x_i = mu_k + Sigma_k^{1/2} v_i` column by column, clusters in spec
/// order. Targets are one-hot cluster indicators.
///
/// Cluster `k` uses its own stream keyed by `(seed, k)`, so its draws do not
/// depend on the other clusters' counts or covariances.
pub fn sample_gaussian_mixture(spec: &GaussianMixtureSpec) -> Result<Dataset> {
    spec.validate()?;
    let (k, d, n) = (spec.k(), spec.dim(), spec.n());
    let roots = spec
        .covariances
        .iter()
        .map(|c| match c {
            Covariance::Isotropic(_) => Ok(None),
            Covariance::Full(m) => spd_sqrt(m).map(Some),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut x = Matrix::zeros(d, n);
    let mut labels = Vec::with_capacity(n);
    let mut col = 0;
    let mut v = vec![0.0; d];
    for (cluster, &count) in spec.counts.iter().enumerate() {
        let mut sampler = NormalSampler::new(stream(
            spec.seed,
            stream_id(MIXTURE_STREAM, cluster as u32, 0),
        ));
        let mean = &spec.means[cluster];
        for _ in 0..count {
            sampler.fill(&mut v);
            let dev = match (&spec.covariances[cluster], &roots[cluster]) {
                (_, Some(root)) => root.matvec(&v),
                (Covariance::Isotropic(s), None) => v.iter().map(|z| s * z).collect(),
                (Covariance::Full(_), None) => unreachable!(),
            };
            for i in 0..d {
                x[(i, col)] = mean[i] + dev[i];
            }
            labels.push(cluster);
            col += 1;
        }
    }
    let y = one_hot(&labels, k);
    let mut ds = Dataset::new(x, y, Some(labels))?;
    ds.provenance = Some(spec.clone());
    Ok(ds)
}

/// Autoencoding targets: `y := x`.
pub fn autoencoder_labels(ds: &Dataset) -> Dataset {
    Dataset {
        x: ds.x.clone(),
        y: ds.x.clone(),
        class_labels: ds.class_labels.clone(),
        provenance: ds.provenance.clone(),
    }
}

fn one_hot(labels: &[usize], num_classes: usize) -> Matrix {
    let mut y = Matrix::zeros(num_classes, labels.len());
    for (i, &l) in labels.iter().enumerate() {
        y[(l, i)] = 1.0;
    }
    y
}

/// One-hot targets from the class labels.
pub fn one_hot_labels(ds: &Dataset, num_classes: usize) -> Result<Dataset> {
    let labels = ds
        .class_labels
        .as_ref()
        .ok_or_else(|| precondition("one_hot_labels requires class labels"))?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(precondition(format!("label {bad} >= num_classes {num_classes}")));
    }
    Ok(Dataset {
        x: ds.x.clone(),
        y: one_hot(labels, num_classes),
        class_labels: ds.class_labels.clone(),
        provenance: ds.provenance.clone(),
    })
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw contents of an IDX image file (`u8` pixels, row-major per image).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

/// Raw contents of an IDX label file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxLabels {
    pub labels: Vec<u8>,
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Consistency(format!("truncated IDX header at byte {at}")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let observed = read_u32(bytes, 0)?;
    if observed != expected {
        return Err(Error::Format { observed, expected });
    }
    Ok(())
}

impl IdxImages {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        check_magic(bytes, IDX_IMAGES_MAGIC)?;
        let count = read_u32(bytes, 4)? as usize;
        let rows = read_u32(bytes, 8)? as usize;
        let cols = read_u32(bytes, 12)? as usize;
        let len = count * rows * cols;
        let pixels = bytes
            .get(16..16 + len)
            .ok_or_else(|| Error::Consistency(format!("image payload shorter than {len} bytes")))?
            .to_vec();
        Ok(Self {
            count,
            rows,
            cols,
            pixels,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for v in [IDX_IMAGES_MAGIC, self.count as u32, self.rows as u32, self.cols as u32] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }
}

impl IdxLabels {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        check_magic(bytes, IDX_LABELS_MAGIC)?;
        let count = read_u32(bytes, 4)? as usize;
        let labels = bytes
            .get(8..8 + count)
            .ok_or_else(|| Error::Consistency(format!("label payload shorter than {count} bytes")))?
            .to_vec();
        Ok(Self { labels })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.labels.len());
        out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.labels.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }
}

/// Loads an IDX image/label pair. Pixels are scaled to `[0, 1]`; each image
/// becomes one column of `x`. Targets are one-hot over `max label + 1` classes.
pub fn load_idx(images_path: &Path, labels_path: &Path, limit: Option<usize>) -> Result<Dataset> {
    let images = IdxImages::parse(&fs::read(images_path)?)?;
    let labels = IdxLabels::parse(&fs::read(labels_path)?)?;
    if images.count != labels.labels.len() {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            images.count,
            labels.labels.len()
        )));
    }
    let n = limit.map_or(images.count, |l| l.min(images.count));
    let pixels_per_image = images.rows * images.cols;
    let mut x = Matrix::zeros(pixels_per_image, n);
    for j in 0..n {
        let img = &images.pixels[j * pixels_per_image..(j + 1) * pixels_per_image];
        for (i, &p) in img.iter().enumerate() {
            x[(i, j)] = p as f64 / 255.0;
        }
    }
    let class_labels: Vec<usize> = labels.labels[..n].iter().map(|&l| l as usize).collect();
    let classes = class_labels.iter().max().map_or(1, |m| m + 1);
    let y = one_hot(&class_labels, classes);
    Dataset::new(x, y, Some(class_labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cluster_spec(sigma: f64, counts: Vec<usize>, seed: u64) -> GaussianMixtureSpec {
        GaussianMixtureSpec {
            means: vec![vec![1.0, -2.0, 0.5], vec![-3.0, 0.0, 4.0]],
            covariances: vec![Covariance::Isotropic(sigma); 2],
            counts,
            seed,
        }
    }

    #[test]
    fn zero_variance_gives_means() {
        let spec = two_cluster_spec(0.0, vec![2, 3], 1);
        let ds = sample_gaussian_mixture(&spec).unwrap();
        for j in 0..5 {
            let k = ds.class_labels.as_ref().unwrap()[j];
            assert_eq!(ds.x.col(j), spec.means[k]);
        }
        let ae = autoencoder_labels(&ds);
        assert_eq!(ae.y, ae.x);
    }

    #[test]
    fn bookkeeping_of_counts() {
        let ds = sample_gaussian_mixture(&two_cluster_spec(1.0, vec![3, 5], 0)).unwrap();
        assert_eq!(ds.n(), 8);
        assert_eq!(ds.class_labels.unwrap(), vec![0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn empirical_means_within_four_standard_errors() {
        let means = random_means_on_sphere(2, 8, 3.0, 5);
        let spec = GaussianMixtureSpec::isotropic(means.clone(), 1.0, 4000, 0);
        let ds = sample_gaussian_mixture(&spec).unwrap();
        let labels = ds.class_labels.as_ref().unwrap();
        for (k, mu) in means.iter().enumerate() {
            let idx: Vec<usize> = (0..ds.n()).filter(|&i| labels[i] == k).collect();
            let emp = ds.x.select_columns(&idx).column_mean();
            for (e, m) in emp.iter().zip(mu) {
                assert!((e - m).abs() <= 4.0 / (4000f64).sqrt(), "{e} vs {m}");
            }
        }
    }

    #[test]
    fn deterministic_and_stream_separated() {
        let a = sample_gaussian_mixture(&two_cluster_spec(0.7, vec![4, 4], 9)).unwrap();
        let b = sample_gaussian_mixture(&two_cluster_spec(0.7, vec![4, 4], 9)).unwrap();
        assert_eq!(a, b);
        // growing cluster 0 leaves cluster 1's draws untouched
        let c = sample_gaussian_mixture(&two_cluster_spec(0.7, vec![6, 4], 9)).unwrap();
        assert_eq!(a.x.col(4), c.x.col(6));
        assert_eq!(a.x.col(0), c.x.col(0));
    }

    #[test]
    fn sigma_scaling_matches_resampling() {
        let base = sample_gaussian_mixture(&two_cluster_spec(0.5, vec![5, 5], 3)).unwrap();
        let scaled = sample_gaussian_mixture(&two_cluster_spec(1.5, vec![5, 5], 3)).unwrap();
        let spec = two_cluster_spec(0.5, vec![5, 5], 3);
        for j in 0..10 {
            let mu = &spec.means[base.class_labels.as_ref().unwrap()[j]];
            for i in 0..3 {
                let rescaled = mu[i] + 3.0 * (base.x[(i, j)] - mu[i]);
                assert!((rescaled - scaled.x[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_covariance_is_used_and_validated() {
        let cov = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let spec = GaussianMixtureSpec {
            means: vec![vec![0.0, 0.0]],
            covariances: vec![Covariance::Full(cov.clone())],
            counts: vec![20_000],
            seed: 4,
        };
        let ds = sample_gaussian_mixture(&spec).unwrap();
        let emp = ds.x.gram().scale(1.0 / 20_000.0);
        assert!(emp.sub(&cov).max_abs() < 0.1, "{emp:?}");

        let bad = GaussianMixtureSpec {
            covariances: vec![Covariance::Full(Matrix::diag(&[1.0, -1.0]))],
            counts: vec![2],
            ..spec
        };
        assert!(matches!(sample_gaussian_mixture(&bad), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn autoencoder_labels_idempotent() {
        let ds = sample_gaussian_mixture(&two_cluster_spec(0.3, vec![2, 2], 1)).unwrap();
        let once = autoencoder_labels(&ds);
        assert_eq!(autoencoder_labels(&once), once);
        assert_eq!(once.y.rows(), once.x.rows());
    }

    #[test]
    fn one_hot_cases() {
        let x = Matrix::zeros(1, 2);
        let ds = Dataset::new(x.clone(), x.clone(), Some(vec![0, 2])).unwrap();
        let oh = one_hot_labels(&ds, 3).unwrap();
        assert_eq!(oh.y.col(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(oh.y.col(1), vec![0.0, 0.0, 1.0]);

        let zeros = Dataset::new(x.clone(), x.clone(), Some(vec![0, 0])).unwrap();
        let oh = one_hot_labels(&zeros, 3).unwrap();
        assert_eq!(oh.y.row(0), &[1.0, 1.0]);
        for j in 0..2 {
            assert_eq!(oh.y.col(j).iter().sum::<f64>(), 1.0);
        }

        let unlabeled = Dataset::new(x.clone(), x, None).unwrap();
        assert!(matches!(one_hot_labels(&unlabeled, 3), Err(Error::Precondition(_))));
        assert!(one_hot_labels(&ds, 2).is_err());
    }

    fn fixture() -> (IdxImages, IdxLabels) {
        (
            IdxImages {
                count: 2,
                rows: 2,
                cols: 2,
                pixels: vec![0, 255, 255, 0, 255, 255, 0, 0],
            },
            IdxLabels { labels: vec![3, 1] },
        )
    }

    #[test]
    fn idx_roundtrip_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, labs) = fixture();
        let ip = dir.path().join("images.idx");
        let lp = dir.path().join("labels.idx");
        fs::write(&ip, imgs.to_bytes()).unwrap();
        fs::write(&lp, labs.to_bytes()).unwrap();

        let ds = load_idx(&ip, &lp, None).unwrap();
        assert_eq!(ds.x.shape(), (4, 2));
        assert!(ds.x.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(ds.x.col(0), vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(ds.class_labels.as_deref(), Some(&[3, 1][..]));

        let one = load_idx(&ip, &lp, Some(1)).unwrap();
        assert_eq!(one.n(), 1);

        let bytes = fs::read(&ip).unwrap();
        assert_eq!(IdxImages::parse(&bytes).unwrap().to_bytes(), bytes);
        let bytes = fs::read(&lp).unwrap();
        assert_eq!(IdxLabels::parse(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn idx_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, _) = fixture();
        let ip = dir.path().join("images.idx");
        fs::write(&ip, imgs.to_bytes()).unwrap();
        match load_idx(&ip, &ip, None) {
            Err(Error::Format { observed, .. }) => assert_eq!(observed, IDX_IMAGES_MAGIC),
            other => panic!("expected format error, got {other:?}"),
        }
        let lp = dir.path().join("labels.idx");
        fs::write(&lp, IdxLabels { labels: vec![1, 2, 3] }.to_bytes()).unwrap();
        assert!(matches!(load_idx(&ip, &lp, None), Err(Error::Consistency(_))));
    }
}
