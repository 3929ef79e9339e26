//! Result tables, provenance and figures written by a suite.

use std::path::{Path, PathBuf};

use gala_train::trainer::Method;
use serde_json::json;

use crate::metrics::CooccurrenceCurves;
use crate::plot::{cooccurrence_plot, sweep_plot};
use crate::spec::{Dataset, AUTO_K};
use crate::suite::{ReportRow, SuiteReport};
use crate::Result;

pub const REPORT_FILE: &str = "report.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const CELLS_FILE: &str = "cells.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";

fn k_label(k: usize) -> String {
    if k == AUTO_K {
        "auto".into()
    } else {
        k.to_string()
    }
}

fn fmt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// The aggregated table. Column order is fixed; timing is left out so that
/// reruns produce identical bytes.
pub fn results_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "a",
        "b",
        "penalty_weight",
        "upsample_k",
        "mean_accuracy",
        "std_accuracy",
        "seeds",
        "failed",
        "identification_f1",
        "negative_fraction",
    ])?;
    for r in rows {
        let std = match (r.std_accuracy, r.seeds) {
            (Some(s), _) => format!("{s:.6}"),
            (None, 1) => "single-seed".into(),
            (None, _) => String::new(),
        };
        w.write_record([
            r.method.name().to_string(),
            r.dataset.a.to_string(),
            r.dataset.b.to_string(),
            r.penalty_weight.to_string(),
            k_label(r.upsample_k),
            fmt(r.mean_accuracy),
            std,
            r.seeds.to_string(),
            r.failed.to_string(),
            fmt(r.identification_f1),
            fmt(r.negative_fraction),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8 csv"))
}

/// One line per cell, errors included.
pub fn cells_csv(report: &SuiteReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "a",
        "b",
        "penalty_weight",
        "upsample_k",
        "upsample_k_used",
        "seed",
        "test_accuracy",
        "val_accuracy",
        "selected_epoch",
        "epochs_run",
        "identification_f1",
        "error",
    ])?;
    for c in &report.cells {
        let k = c.key;
        let m = c.metrics.as_ref();
        w.write_record([
            k.method.name().to_string(),
            k.dataset.a.to_string(),
            k.dataset.b.to_string(),
            k.penalty_weight.to_string(),
            k_label(k.upsample_k),
            m.map(|m| m.upsample_k_used.to_string()).unwrap_or_default(),
            k.seed.to_string(),
            fmt(m.map(|m| m.test_accuracy)),
            fmt(m.map(|m| m.val_accuracy)),
            m.and_then(|m| m.selected_epoch).map(|e| e.to_string()).unwrap_or_default(),
            m.map(|m| m.epochs_run.to_string()).unwrap_or_default(),
            fmt(m.and_then(|m| m.identification_f1)),
            c.error.clone().unwrap_or_default(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8 csv"))
}

pub fn provenance(report: &SuiteReport) -> serde_json::Value {
    json!({
        "suite": report.spec.name,
        "spec": report.spec,
        "workers": report.workers,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "dataset_format": { "name": gala_core::io::FORMAT_NAME, "version": gala_core::io::FORMAT_VERSION },
        "checkpoint_format": {
            "name": gala_train::checkpoint::CHECKPOINT_FORMAT,
            "version": gala_train::checkpoint::CHECKPOINT_VERSION,
        },
        "cells": report.cells.len(),
        "failed_cells": report.failures().count(),
    })
}

/// λ-sweep series per dataset, one point per penalty at the default
/// upsampling factor, sorted by penalty.
pub fn penalty_series(report: &SuiteReport) -> Vec<(String, Vec<(f64, f64)>)> {
    let k = report.spec.train.default_k();
    series_by(report, |r| (r.upsample_k == k && r.penalty_weight > 0.0).then_some(r.penalty_weight))
}

pub fn upsample_series(report: &SuiteReport) -> Vec<(String, Vec<(f64, f64)>)> {
    let l = report.spec.train.penalty_weight;
    series_by(report, |r| (r.penalty_weight == l && r.upsample_k != AUTO_K).then_some(r.upsample_k as f64))
}

fn series_by(report: &SuiteReport, x: impl Fn(&ReportRow) -> Option<f64>) -> Vec<(String, Vec<(f64, f64)>)> {
    report
        .spec
        .datasets
        .iter()
        .filter_map(|d| {
            let mut pts: Vec<(f64, f64)> = report
                .rows
                .iter()
                .filter(|r| r.method == Method::Gala && r.dataset == *d)
                .filter_map(|r| Some((x(r)?, r.mean_accuracy?)))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            (pts.len() > 1).then(|| (d.label(), pts))
        })
        .collect()
}

/// First-seed partition curves per dataset.
pub fn partition_curves(report: &SuiteReport) -> Vec<(String, CooccurrenceCurves)> {
    let seed = report.spec.seeds[0];
    report
        .spec
        .datasets
        .iter()
        .filter_map(|d: &Dataset| {
            let rec = report.assistants.iter().find(|a| a.dataset == *d && a.seed == seed)?;
            Some((d.label(), rec.curves?))
        })
        .collect()
}

/// Writes the tables, provenance, the full report and any figures that
/// have data. Returns the files written.
pub fn write_artifacts(report: &SuiteReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    put(RESULTS_FILE, results_csv(&report.rows)?)?;
    put(CELLS_FILE, cells_csv(report)?)?;
    put(PROVENANCE_FILE, serde_json::to_string_pretty(&provenance(report))?)?;
    put(REPORT_FILE, serde_json::to_string_pretty(report)?)?;
    written.extend(write_figures(report, dir)?);
    Ok(written)
}

pub fn write_figures(report: &SuiteReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let curves = partition_curves(report);
    if !curves.is_empty() {
        let p = dir.join("cooccurrence.svg");
        cooccurrence_plot(&p, &curves)?;
        written.push(p);
    }
    let pen = penalty_series(report);
    if !pen.is_empty() {
        let p = dir.join("penalty_sweep.svg");
        sweep_plot(&p, "GALA accuracy against penalty weight", "penalty weight", true, &pen)?;
        written.push(p);
    }
    let up = upsample_series(report);
    if !up.is_empty() {
        let p = dir.join("upsample_sweep.svg");
        sweep_plot(&p, "GALA accuracy against upsampling factor", "upsampling factor", false, &up)?;
        written.push(p);
    }
    Ok(written)
}

pub fn load_report(dir: &Path) -> Result<SuiteReport> {
    let text = std::fs::read_to_string(dir.join(REPORT_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

/// Fixed-width table for the terminal.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut out = format!(
        "{:<20} {:>11} {:>7} {:>3} {:>9} {:>9} {:>5} {:>7}\n",
        "method", "dataset", "lambda", "k", "mean", "std", "seeds", "f1"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<20} {:>11} {:>7} {:>3} {:>9} {:>9} {:>5} {:>7}\n",
            r.method.name(),
            r.dataset.label(),
            r.penalty_weight,
            k_label(r.upsample_k),
            r.mean_accuracy.map(|m| format!("{:.4}", m)).unwrap_or_else(|| "-".into()),
            r.std_accuracy.map(|s| format!("{:.4}", s)).unwrap_or_else(|| "-".into()),
            r.seeds,
            r.identification_f1.map(|f| format!("{:.3}", f)).unwrap_or_else(|| "-".into()),
        ));
    }
    out
}
