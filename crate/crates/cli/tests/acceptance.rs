//! The ten acceptance criteria, run in order by a plain `main` (no test
//! harness) so every line is printed and runtimes are measured without other
//! tests competing for the CPU.
//!
//! Set `ACCEPTANCE_CRITERIA=1,4,10` to run a subset.

use std::time::{Duration, Instant};

use rankcollapse::clustering::{tcv_estimate, DEFAULT_RESTARTS};
use rankcollapse::network::{gradient, loss};
use rankcollapse::rng::{stream, NormalSampler};
use rankcollapse::verify::{
    check_closed_form, check_lemma33, check_prop31, check_rank_collapse_trend, check_softrank, check_stationarity,
    check_thm54, CentroidTrends, Prop41Check, Thm53Check,
};
use rankcollapse::{Activation, CheckReport, Dataset, Matrix, MlpParams};

/// Criteria that cannot be met as stated; they are still run and reported.
/// See the README section on known deviations.
const KNOWN_UNATTAINABLE: &[usize] = &[4];

struct Outcome {
    id: usize,
    title: &'static str,
    passed: bool,
    /// Parts that must hold even when the criterion as a whole is known to fail.
    required_parts_hold: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn report_detail(r: &CheckReport) -> String {
    r.observed
        .iter()
        .filter(|(k, _)| !k.starts_with("info_") && !k.starts_with("hessian_"))
        .map(|(k, v)| format!("{k}={v:.4e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn timed<F: FnOnce() -> (bool, bool, String)>(id: usize, title: &'static str, budget_s: u64, f: F) -> Outcome {
    let start = Instant::now();
    let (passed, required_parts_hold, detail) = f();
    Outcome {
        id,
        title,
        passed,
        required_parts_hold,
        detail,
        elapsed: start.elapsed(),
        budget: Duration::from_secs(budget_s),
    }
}

fn simple(r: CheckReport) -> (bool, bool, String) {
    (r.passed, r.passed, report_detail(&r))
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut s = NormalSampler::new(stream(seed, 31));
    Matrix::from_fn(rows, cols, |_, _| s.next())
}

/// Minimum WCSS over all assignments of the columns of `pts` to `k` labels.
fn exhaustive_tcv(pts: &Matrix, k: usize) -> f64 {
    let (dim, n) = pts.shape();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut total = 0.0;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            if members.is_empty() {
                continue;
            }
            for d in 0..dim {
                let mean = members.iter().map(|&j| pts[(d, j)]).sum::<f64>() / members.len() as f64;
                total += members.iter().map(|&j| (pts[(d, j)] - mean).powi(2)).sum::<f64>();
            }
        }
        best = best.min(total);
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best / n as f64;
        }
    }
}

fn oracle_equivalence() -> (bool, bool, String) {
    let mut worst_tcv = 0.0f64;
    for seed in 0..30u64 {
        let n = 4 + (seed as usize % 5);
        let k = 2 + (seed as usize % 3);
        let pts = gaussian(3, n, seed);
        let z = Matrix::from_fn(2, n, |i, j| pts[(i, j)]);
        let y = Matrix::from_fn(1, n, |_, j| pts[(2, j)]);
        let got = tcv_estimate(&z, &y, k, DEFAULT_RESTARTS, seed).unwrap();
        worst_tcv = worst_tcv.max((got - exhaustive_tcv(&pts, k)).abs());
    }

    let mut worst_grad = 0.0f64;
    let nets: [(&[usize], Activation, f64); 3] = [
        (&[4, 6, 3], Activation::Identity, 0.01),
        (&[5, 8, 6, 4], Activation::Tanh, 0.05),
        (&[6, 7, 5, 6], Activation::Identity, 0.0),
    ];
    for (i, (widths, output, lambda)) in nets.into_iter().enumerate() {
        let theta = MlpParams::init(widths, Activation::Tanh, output, i as u64).unwrap();
        let mut flat = theta.to_flat();
        let mut s = NormalSampler::new(stream(i as u64, 3));
        flat.iter_mut().for_each(|v| *v += 0.1 * s.next());
        let theta = theta.with_flat(&flat).unwrap();
        assert!(theta.num_params() <= 200);
        let ds = Dataset::new(gaussian(widths[0], 10, 40 + i as u64), gaussian(*widths.last().unwrap(), 10, 50 + i as u64), None).unwrap();
        let analytic = gradient(&theta, &ds, lambda).unwrap().to_flat();
        let h = 1e-5;
        for p in 0..flat.len() {
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[p] += h;
            minus[p] -= h;
            let fd = (loss(&theta.with_flat(&plus).unwrap(), &ds, lambda).unwrap().0
                - loss(&theta.with_flat(&minus).unwrap(), &ds, lambda).unwrap().0)
                / (2.0 * h);
            let rel = (fd - analytic[p]).abs() / (analytic[p].abs().max(fd.abs()) + 1e-4);
            worst_grad = worst_grad.max(rel);
        }
    }
    let ok = worst_tcv <= 1e-9 && worst_grad <= 1e-5;
    (ok, ok, format!("max_tcv_gap={worst_tcv:.3e} max_grad_rel_err={worst_grad:.3e}"))
}

fn thm53_with_trends() -> (bool, bool, String) {
    let check = Thm53Check::default();
    let report = check.run(0).unwrap();
    let cells = check.cells(0).unwrap();
    let trends = CentroidTrends::from_cells(&cells, &check.lambdas, &check.sigmas);
    let slope_ok = (trends.mean_sigma_slope - 2.0).abs() <= 0.3;
    let lambda_ok = trends.max_rise_in_lambda <= 0.1;
    let slopes: Vec<String> = trends.sigma_slopes.iter().map(|s| format!("{s:.2}")).collect();
    (
        report.passed && slope_ok && lambda_ok,
        report.passed && lambda_ok,
        format!(
            "inequality={} max_ratio={:.3e} sigma_slope_mean={:.3} (per lambda [{}], target 2+-0.3) lambda_rise={:.3e}",
            report.passed,
            report.observed["max_distance_over_bound"],
            trends.mean_sigma_slope,
            slopes.join(", "),
            trends.max_rise_in_lambda
        ),
    )
}

fn prop41_with_control() -> (bool, bool, String) {
    let check = Prop41Check::default();
    let real = check.run(0).unwrap();
    let control = Prop41Check {
        bound_scale: 0.5,
        ..check
    }
    .run(0)
    .unwrap();
    let ok = real.passed && !control.passed;
    (
        ok,
        ok,
        format!(
            "coverage={:.3} halved_bound_coverage={:.3}",
            real.observed["coverage"], control.observed["coverage"]
        ),
    )
}

fn prop31_many_seeds() -> (bool, bool, String) {
    let mut ok = true;
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let r = check_prop31(seed).unwrap();
        ok &= r.passed;
        for (k, v) in &r.observed {
            if k.starts_with("max_tail_ratio") {
                worst = worst.max(*v);
            }
        }
    }
    (ok, ok, format!("seeds=20 worst_tail_ratio={worst:.3e}"))
}

fn main() {
    let selected: Option<Vec<usize>> = std::env::var("ACCEPTANCE_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |id: usize| selected.as_ref().map_or(true, |s| s.contains(&id));

    let mut outcomes = Vec::new();
    let mut run = |id: usize, title: &'static str, budget: u64, f: &dyn Fn() -> (bool, bool, String)| {
        if wanted(id) {
            let o = timed(id, title, budget, f);
            let within = o.elapsed <= o.budget;
            println!(
                "criterion {:>2} {} {:<34} {:>9.2}s (budget {}s) {}",
                o.id,
                if o.passed && within { "PASS" } else { "FAIL" },
                o.title,
                o.elapsed.as_secs_f64(),
                o.budget.as_secs(),
                o.detail
            );
            outcomes.push(o);
        }
    };
    run(1, "gradient rank law", 10, &prop31_many_seeds);
    run(2, "stationarity equation", 60, &|| simple(check_stationarity(0).unwrap()));
    run(3, "closed-form ridge exactness", 10, &|| simple(check_closed_form(0).unwrap()));
    run(4, "centroid minimizer distance", 60, &thm53_with_trends);
    run(5, "rank-constrained distance", 30, &|| simple(check_thm54(0).unwrap()));
    run(6, "gaussian cluster bound coverage", 30, &prop41_with_control);
    run(7, "rank-collapse transition", 900, &|| simple(check_rank_collapse_trend(0).unwrap()));
    run(8, "centroid gradient scaling", 60, &|| simple(check_lemma33(0).unwrap()));
    run(9, "softrank width/depth mildness", 900, &|| simple(check_softrank(0).unwrap()));
    run(10, "oracle equivalence", 30, &oracle_equivalence);

    let passed = outcomes.iter().filter(|o| o.passed && o.elapsed <= o.budget).count();
    println!("acceptance: {passed}/{} criteria passed", outcomes.len());

    let mut unexpected = Vec::new();
    for o in &outcomes {
        let known = KNOWN_UNATTAINABLE.contains(&o.id);
        if o.elapsed > o.budget || !o.required_parts_hold || (!o.passed && !known) {
            unexpected.push(o.id);
        }
        if known && o.passed {
            println!("criterion {} now passes; remove it from KNOWN_UNATTAINABLE", o.id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("criteria failed unexpectedly: {unexpected:?}");
        std::process::exit(1);
    }
}
