//! CSV and JSON artifacts with fixed float formatting, so reruns are
//! byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rankcollapse::verify::{RankCollapseRow, SoftrankRow};

use crate::config::ExperimentConfig;
use crate::experiments::{Fig2Row, Fig3Row, VerifyOutcome};

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// `output_dir/name`; the directory must already exist.
pub fn output_path(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = &cfg.output_dir;
    if !dir.is_dir() {
        anyhow::bail!("output directory {} does not exist", dir.display());
    }
    Ok(dir.join(cfg.experiment.output_file()))
}

pub fn fig1_header(epsilon: f64) -> Vec<String> {
    ["lambda", "sigma", "seed", "layer", "tail_sq_at_K"]
        .iter()
        .map(|s| s.to_string())
        .chain([format!("softrank_{epsilon}"), "grad_norm".into(), "converged".into()])
        .collect()
}

pub fn write_fig1(path: &Path, epsilon: f64, rows: &[RankCollapseRow]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.lambda),
                fmt_f64(r.sigma),
                r.seed.to_string(),
                r.layer.to_string(),
                fmt_f64(r.tail_sq_at_k),
                r.softrank.to_string(),
                fmt_f64(r.grad_norm),
                r.converged.to_string(),
            ]
        })
        .collect();
    write_csv(path, &fig1_header(epsilon), &body)
}

pub const FIG2_HEADER: [&str; 6] = [
    "lambda",
    "sigma",
    "seed",
    "distance_trained",
    "distance_closed_form",
    "thm53_bound",
];

pub fn write_fig2(path: &Path, rows: &[Fig2Row]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.lambda),
                fmt_f64(r.sigma),
                r.seed.to_string(),
                fmt_f64(r.distance_trained),
                fmt_f64(r.distance_closed_form),
                fmt_f64(r.thm53_bound),
            ]
        })
        .collect();
    write_csv(path, &FIG2_HEADER.map(String::from), &body)
}

pub const FIG3_HEADER: [&str; 5] = ["epoch", "layer", "lambda", "e_tail", "class_wcss"];

pub fn write_fig3(path: &Path, rows: &[Fig3Row]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                r.layer.to_string(),
                fmt_f64(r.lambda),
                r.e_tail.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(";"),
                fmt_f64(r.class_wcss),
            ]
        })
        .collect();
    write_csv(path, &FIG3_HEADER.map(String::from), &body)
}

pub fn softrank_header(epsilon: f64) -> Vec<String> {
    vec![
        "width_or_depth".into(),
        "lambda".into(),
        "seed".into(),
        format!("mean_softrank_{epsilon}"),
    ]
}

pub fn write_softrank(path: &Path, epsilon: f64, rows: &[SoftrankRow]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.width_or_depth.to_string(),
                fmt_f64(r.lambda),
                r.seed.to_string(),
                fmt_f64(r.mean_softrank),
            ]
        })
        .collect();
    write_csv(path, &softrank_header(epsilon), &body)
}

/// Pretty JSON; `runtime_ms` is zeroed unless `timings` is set.
pub fn write_verify(path: &Path, outcome: &VerifyOutcome, timings: bool) -> Result<()> {
    let mut outcome = outcome.clone();
    if !timings {
        for r in outcome.checks.iter_mut().chain(outcome.negative_controls.iter_mut()) {
            r.runtime_ms = 0;
        }
    }
    let mut text = serde_json::to_string_pretty(&outcome)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
