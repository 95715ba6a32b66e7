use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn rankcollapse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankcollapse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

const TINY_TASK: [&str; 8] = [
    "--set",
    "mixture.dim=8",
    "--set",
    "mixture.k=2",
    "--set",
    "mixture.per_cluster=10",
    "--set",
    "mixture.mean_radius=2.0",
];

#[test]
fn usage_and_io_errors_exit_with_2() {
    assert_eq!(rankcollapse(&[]).status.code(), Some(2));
    assert_eq!(rankcollapse(&["sweep-fig1", "--bogus"]).status.code(), Some(2));
    let out = rankcollapse(&["sweep-fig1", "--out", "/nonexistent/dir/for/sure"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(rankcollapse(&["sweep-fig1", "--out", d, "--set", "no_such_key=1"]).status.code(), Some(2));
    assert_eq!(rankcollapse(&["sweep-fig1", "--out", d, "--config", "/missing.toml"]).status.code(), Some(2));
}

#[test]
fn fig1_degenerate_cell_collapses_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let mut ordered = vec!["sweep-fig1", "--out", d];
    ordered.extend(TINY_TASK);
    ordered.extend([
        "--set",
        "lambda_grid=[0.05]",
        "--set",
        "sigma_grid=[0.0]",
        "--set",
        "seeds=[3]",
        "--set",
        "architecture.hidden_widths=[6]",
        "--set",
        "rank=2",
        "--set",
        "train.learning_rate=0.1",
        "--set",
        "train.max_epochs=100000",
        "--set",
        "train.grad_tol=1e-7",
    ]);
    let out = rankcollapse(&ordered);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("fig1_sweep.csv");
    let first = std::fs::read(&path).unwrap();
    let (header, rows) = read_csv(&path);
    assert_eq!(
        header.join(","),
        "lambda,sigma,seed,layer,tail_sq_at_K,softrank_0.1,grad_norm,converged"
    );
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r[7], "true");
        assert!(f(&r[4]) <= 1e-6, "tail {}", r[4]);
    }
    assert!(rankcollapse(&ordered).status.success());
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn fig1_row_count_is_grid_size_times_layers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let mut args = vec!["sweep-fig1", "--out", d];
    args.extend(TINY_TASK);
    args.extend([
        "--set",
        "lambda_grid=[0.1, 0.001]",
        "--set",
        "sigma_grid=[0.1, 0.2, 0.3]",
        "--set",
        "architecture.hidden_widths=[4, 4]",
        "--set",
        "train.max_epochs=5",
    ]);
    assert!(rankcollapse(&args).status.success());
    let (_, rows) = read_csv(&dir.path().join("fig1_sweep.csv"));
    assert_eq!(rows.len(), 2 * 3 * 2 * 3);
    // sorted by lambda, sigma, seed, layer
    let keys: Vec<(f64, f64, u64, usize)> = rows
        .iter()
        .map(|r| (f(&r[0]), f(&r[1]), r[2].parse().unwrap(), r[3].parse().unwrap()))
        .collect();
    assert!(keys.windows(2).all(|w| w[0].partial_cmp(&w[1]) == Some(std::cmp::Ordering::Less)));
    assert_eq!(keys[0].0, 0.001);
}

#[test]
fn fig2_trained_and_closed_form_distances_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = rankcollapse(&[
        "sweep-fig2",
        "--out",
        d,
        "--set",
        "lambda_grid=[0.01, 0.1]",
        "--set",
        "sigma_grid=[0.0, 0.1, 0.3]",
        "--set",
        "mixture.per_cluster=40",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("fig2_linear.csv"));
    assert_eq!(
        header.join(","),
        "lambda,sigma,seed,distance_trained,distance_closed_form,thm53_bound"
    );
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let (sigma, trained, closed, bound) = (f(&r[1]), f(&r[3]), f(&r[4]), f(&r[5]));
        assert!(closed <= bound + 1e-9, "{r:?}");
        if sigma == 0.0 {
            assert!(closed <= 1e-6 && trained <= 1e-6, "{r:?}");
        } else {
            assert!((trained - closed).abs() <= 0.05 * closed, "{r:?}");
        }
    }
}

#[test]
fn fig3_trace_is_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let mut args = vec!["trace-fig3", "--out", d];
    args.extend(TINY_TASK);
    args.extend([
        "--set",
        "architecture.hidden_widths=[6, 6]",
        "--set",
        "lambda_grid=[0.001, 0.05]",
        "--set",
        "sigma_grid=[0.3]",
        "--set",
        "train.max_epochs=3000",
        "--set",
        "train.learning_rate=0.1",
        "--set",
        "train.record_every=500",
    ]);
    let out = rankcollapse(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("fig3_trace.csv"));
    assert_eq!(header.join(","), "epoch,layer,lambda,e_tail,class_wcss");
    let mut epochs: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for r in &rows {
        epochs.entry((r[1].clone(), r[2].clone())).or_default().push(r[0].parse().unwrap());
        let tail: Vec<f64> = r[3].split(';').map(f).collect();
        assert_eq!(tail[0], 1.0);
        assert_eq!(*tail.last().unwrap(), 0.0);
    }
    assert_eq!(epochs.len(), 3 * 2);
    for list in epochs.values() {
        assert!(list.windows(2).all(|w| w[0] < w[1]));
    }
    // final class WCSS of the hidden representations shrinks with weight decay
    let final_wcss = |lambda: f64| -> f64 {
        let last = rows.iter().filter(|r| f(&r[2]) == lambda).map(|r| r[0].parse::<usize>().unwrap()).max().unwrap();
        rows.iter()
            .filter(|r| f(&r[2]) == lambda && r[0].parse::<usize>().unwrap() == last && r[1] != "0")
            .map(|r| f(&r[4]))
            .sum()
    };
    assert!(final_wcss(0.05) <= 1.2 * final_wcss(0.001));
}

#[test]
fn width_and_depth_sweeps_write_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for (cmd, file, extra) in [
        ("sweep-width", "width_sweep.csv", "widths=[4, 6]"),
        ("sweep-depth", "depth_sweep.csv", "depths=[1, 2]"),
    ] {
        let mut args = vec![cmd, "--out", d];
        args.extend(TINY_TASK);
        args.extend(["--set", extra, "--set", "train.max_epochs=20", "--set", "lambda_grid=[0.01, 0.1]"]);
        args.extend(["--seed", "4"]);
        let out = rankcollapse(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let (header, rows) = read_csv(&dir.path().join(file));
        assert_eq!(header.join(","), "width_or_depth,lambda,seed,mean_softrank_0.1");
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r[2] == "4"));
    }
}

const FAST_SUITE: [&str; 4] = [
    "--set",
    "verify.skip_rank_collapse=true",
    "--set",
    "verify.skip_softrank=true",
];

#[test]
fn verify_suite_passes_and_controls_fail() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let mut args = vec!["verify", "--out", d, "--negative-controls"];
    args.extend(FAST_SUITE);
    let out = rankcollapse(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("verify.json");
    let first = std::fs::read(&path).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["passed"], true);
    let checks = v["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 7);
    for c in checks {
        for key in ["name", "passed", "observed", "bounds", "config_digest", "runtime_ms"] {
            assert!(c.get(key).is_some(), "{key} missing");
        }
        assert_eq!(c["passed"], true, "{}", c["name"]);
        assert_eq!(c["runtime_ms"], 0);
    }
    let controls = v["negative_controls"].as_array().unwrap();
    assert_eq!(controls.len(), 3);
    assert!(controls.iter().all(|c| c["passed"] == false));

    assert!(rankcollapse(&args).status.success());
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn verify_exits_1_when_a_check_fails() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let mut args = vec!["verify", "--out", d, "--set", "verify.prop41.bound_scale=0.5"];
    args.extend(FAST_SUITE);
    assert_eq!(rankcollapse(&args).status.code(), Some(1));
}

#[test]
fn example_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let cases = [
        ("fig1_reduced.toml", rankcollapse_cli::Experiment::Fig1Sweep),
        ("verify_fast.toml", rankcollapse_cli::Experiment::VerifyAll),
    ];
    for (file, exp) in cases {
        let cfg = rankcollapse_cli::ExperimentConfig::load(exp, false, Some(&root.join(file)), &[]).unwrap();
        assert_eq!(cfg.experiment, exp);
    }
}
