use rankcollapse::linear_theory::{
    centroid_minimizer, critical_point, q_matrix, rank_constrained_minimizer, ridge_minimizer, tangent_gradient_norm,
    CentroidProblem, RidgeProblem,
};
use rankcollapse::network::{gradient, train};
use rankcollapse::numerics::{numerical_rank, svd};
use rankcollapse::rng::{stream, NormalSampler};
use rankcollapse::{Activation, Dataset, Matrix, MlpParams, TrainConfig};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut s = NormalSampler::new(stream(seed, 5));
    Matrix::from_fn(rows, cols, |_, _| s.next())
}

fn problem(d: usize, c: usize, n: usize, lambda: f64, seed: u64) -> RidgeProblem {
    RidgeProblem::new(gaussian(d, n, seed), gaussian(c, n, seed + 1), lambda).unwrap()
}

#[test]
fn two_layer_identity_problem_optimum() {
    // balanced factors sqrt(s) I give loss (s - 1)^2 + 8 lambda s, so s = 1 - 4 lambda
    let ds = Dataset::new(Matrix::identity(4), Matrix::identity(4), None).unwrap();
    let mut theta = MlpParams::init(&[4, 4, 4], Activation::Identity, Activation::Identity, 3).unwrap();
    for w in &mut theta.weights {
        *w = Matrix::identity(4).scale(0.9);
    }
    let cfg = TrainConfig {
        weight_decay: 0.01,
        learning_rate: 0.2,
        max_epochs: 100_000,
        grad_tol: 1e-12,
        train_biases: false,
        ..TrainConfig::default()
    };
    let (trained, records) = train(&theta, &ds, &cfg).unwrap();
    assert!(records.last().unwrap().converged);
    let product = trained.product();
    let expected = Matrix::identity(4).scale(0.96);
    assert!(product.sub(&expected).frobenius_norm() < 1e-8, "{product:?}");
    // the one-layer ridge answer differs
    let ridge = ridge_minimizer(&RidgeProblem::new(Matrix::identity(4), Matrix::identity(4), 0.01).unwrap()).unwrap();
    assert!((ridge[(0, 0)] - 1.0 / 1.04).abs() < 1e-12);
}

#[test]
fn gradient_descent_reaches_ridge_minimizer() {
    let p = problem(5, 3, 60, 0.02, 1);
    let ds = Dataset::new(p.x.clone(), p.y.clone(), None).unwrap();
    let theta = MlpParams::init(&[5, 3], Activation::Identity, Activation::Identity, 0).unwrap();
    let cfg = TrainConfig {
        weight_decay: 0.02,
        learning_rate: 0.2,
        max_epochs: 50_000,
        grad_tol: 1e-11,
        train_biases: false,
        ..TrainConfig::default()
    };
    let (trained, _) = train(&theta, &ds, &cfg).unwrap();
    let closed = ridge_minimizer(&p).unwrap();
    assert!(trained.weights[0].sub(&closed).frobenius_norm() / closed.frobenius_norm() < 1e-8);
    assert!(p.loss_gradient(&closed).frobenius_norm() < 1e-10);
    // network gradient and closed-form gradient agree
    let net_grad = gradient(&trained, &ds, 0.02).unwrap();
    assert!(net_grad.weights[0].sub(&p.loss_gradient(&trained.weights[0])).frobenius_norm() < 1e-10);
}

#[test]
fn minimizer_shrinks_with_weight_decay() {
    let mut last = f64::INFINITY;
    let mut last_q: Option<Vec<f64>> = None;
    for lambda in [1e-3, 1e-2, 1e-1, 1.0] {
        let p = problem(6, 4, 50, lambda, 2);
        let norm = ridge_minimizer(&p).unwrap().frobenius_norm();
        assert!(norm < last);
        last = norm;
        let q = svd(&q_matrix(&p).unwrap()).unwrap().singular_values;
        if let Some(prev) = &last_q {
            assert!(q.iter().zip(prev).all(|(a, b)| a <= b));
        }
        last_q = Some(q);
    }
}

#[test]
fn critical_points_are_stationary_on_their_rank_manifold() {
    let p = problem(5, 4, 40, 0.05, 3);
    let top = critical_point(&p, &[0, 1]).unwrap();
    let other = critical_point(&p, &[1, 3]).unwrap();
    for cp in [&top, &other] {
        assert!((p.loss(&cp.theta) - cp.loss_mean).abs() < 1e-10);
        assert!(tangent_gradient_norm(&p, &cp.theta, 1e-10).unwrap() < 1e-9);
    }
    assert!(top.loss_mean < other.loss_mean);
    let best = rank_constrained_minimizer(&p, 2).unwrap();
    assert!(best.sub(&top.theta).frobenius_norm() < 1e-10);
    let full = critical_point(&p, &[0, 1, 2, 3]).unwrap();
    assert!(full.theta.sub(&ridge_minimizer(&p).unwrap()).frobenius_norm() < 1e-9);
}

#[test]
fn centroid_minimizer_has_rank_at_most_cluster_count() {
    let (d, c, n, k) = (8, 6, 60, 3);
    let x = gaussian(d, n, 12);
    let y = gaussian(c, n, 13);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let cp = CentroidProblem::new(&x, &y, &labels).unwrap();
    let theta = centroid_minimizer(&cp, 0.01, n).unwrap();
    assert_eq!(numerical_rank(&theta, 1e-10).unwrap(), k);
}
