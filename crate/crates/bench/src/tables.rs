//! Emission of the benchmark tables and per-run convergence histories.
//!
//! All CSV output is RFC-4180 with `\n` line endings; undefined values
//! (metrics a method does not produce) are empty fields. `summary.json`
//! aggregates the per-seed rows by median.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::experiment::ResultRow;
use crate::{BenchError, Result};

fn fmt_opt_f64(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => String::new(),
    }
}

fn fmt_f64(v: f64) -> String {
    fmt_opt_f64(Some(v))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-(n, method) medians across seeds.
#[derive(Debug, Serialize)]
struct SummaryCell {
    n: usize,
    method: String,
    seeds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    obj_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pred_disc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa_raw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa_precond: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iters_to_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    precond_time_s: Option<f64>,
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

/// Writes `numerical.csv`, `reconstruction.csv`, `summary.json`, and one
/// history CSV per iterative run; returns the created paths.
pub fn emit_tables(rows: &[ResultRow], output_dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(BenchError::EmptyRows);
    }
    std::fs::create_dir_all(output_dir).map_err(|source| BenchError::Io {
        path: output_dir.to_path_buf(),
        source,
    })?;
    let mut created = Vec::new();

    let mut numerical = String::from(
        "n,method,seed,obj_gap,residual,pred_disc,solver_time_s,precond_time_s,kappa_raw,kappa_precond,iters_to_target\n",
    );
    let mut reconstruction = String::from("n,method,seed,rmse,nmse\n");
    for row in rows {
        let m = &row.metrics;
        numerical.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            row.n,
            row.method,
            row.seed,
            fmt_f64(m.obj_gap),
            fmt_f64(m.residual),
            fmt_f64(m.pred_disc),
            fmt_f64(m.solver_time_s),
            fmt_opt_f64(m.precond_time_s),
            fmt_opt_f64(m.kappa_raw),
            fmt_opt_f64(m.kappa_precond),
            m.iters_to_target
                .map(|v| v.to_string())
                .unwrap_or_default(),
        ));
        reconstruction.push_str(&format!(
            "{},{},{},{},{}\n",
            row.n,
            row.method,
            row.seed,
            fmt_f64(m.rmse),
            fmt_f64(m.nmse)
        ));
    }
    let numerical_path = output_dir.join("numerical.csv");
    write_file(&numerical_path, numerical.as_bytes())?;
    created.push(numerical_path);
    let reconstruction_path = output_dir.join("reconstruction.csv");
    write_file(&reconstruction_path, reconstruction.as_bytes())?;
    created.push(reconstruction_path);

    // Histories for convergence plots.
    for row in rows {
        let Some(name) = &row.history_path else {
            continue;
        };
        let mut text = String::from("iteration,residual,obj_gap\n");
        for p in &row.history {
            text.push_str(&format!(
                "{},{},{}\n",
                p.iteration,
                fmt_f64(p.residual),
                fmt_f64(p.obj_gap)
            ));
        }
        let path = output_dir.join(name);
        write_file(&path, text.as_bytes())?;
        created.push(path);
    }

    // Medians over seeds per (n, method).
    let mut groups: BTreeMap<(usize, String), Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.n, row.method.to_string()))
            .or_default()
            .push(row);
    }
    let cells: Vec<SummaryCell> = groups
        .into_iter()
        .map(|((n, method), group)| {
            let collect = |f: &dyn Fn(&ResultRow) -> Option<f64>| {
                median(group.iter().filter_map(|r| f(r)).collect())
            };
            SummaryCell {
                n,
                method,
                seeds: group.len(),
                obj_gap: collect(&|r| Some(r.metrics.obj_gap)),
                residual: collect(&|r| Some(r.metrics.residual)),
                pred_disc: collect(&|r| Some(r.metrics.pred_disc)),
                rmse: collect(&|r| Some(r.metrics.rmse)),
                nmse: collect(&|r| Some(r.metrics.nmse)),
                kappa_raw: collect(&|r| r.metrics.kappa_raw),
                kappa_precond: collect(&|r| r.metrics.kappa_precond),
                iters_to_target: collect(&|r| r.metrics.iters_to_target.map(|v| v as f64)),
                solver_time_s: collect(&|r| Some(r.metrics.solver_time_s)),
                precond_time_s: collect(&|r| r.metrics.precond_time_s),
            }
        })
        .collect();
    let summary_path = output_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&serde_json::json!({ "cells": cells }))?;
    write_file(&summary_path, json.as_bytes())?;
    created.push(summary_path);

    Ok(created)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Method;
    use crate::experiment::HistoryPoint;
    use laker_core::cartography::MetricsRecord;

    fn row(n: usize, method: Method, seed: u64, rmse: f64) -> ResultRow {
        ResultRow {
            n,
            method,
            seed,
            metrics: MetricsRecord {
                obj_gap: 1e-6,
                residual: 1e-11,
                pred_disc: 2e-7,
                rmse,
                nmse: rmse * rmse / 100.0,
                kappa_raw: Some(1e4),
                kappa_precond: (method == Method::Laker).then_some(150.0),
                iters_to_target: Some(20),
                solver_time_s: 0.5,
                precond_time_s: None,
            },
            history_path: Some(format!("history_{n}_{method}_{seed}.csv")),
            history: vec![HistoryPoint {
                iteration: 1,
                residual: 0.5,
                obj_gap: 0.9,
            }],
        }
    }

    #[test]
    fn empty_rows_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_tables(&[], dir.path()),
            Err(BenchError::EmptyRows)
        ));
    }

    #[test]
    fn single_row_summary_median_is_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row(50, Method::Laker, 0, 1.5)];
        emit_tables(&rows, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        let cell = &parsed["cells"][0];
        assert_eq!(cell["n"], 50);
        assert_eq!(cell["method"], "laker");
        assert_eq!(cell["rmse"], 1.5);
        assert_eq!(cell["kappa_precond"], 150.0);
    }

    #[test]
    fn numerical_csv_has_expected_shape() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            row(50, Method::Laker, 0, 1.0),
            row(50, Method::Laker, 1, 2.0),
            row(50, Method::Jacobi, 0, 1.1),
        ];
        emit_tables(&rows, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("numerical.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n,method,seed,obj_gap,residual,pred_disc,solver_time_s,precond_time_s,kappa_raw,kappa_precond,iters_to_target"
        );
        assert_eq!(text.lines().count(), 1 + rows.len());
        assert!(text.ends_with('\n'));
        // Jacobi has no kappa_precond: empty field preserved.
        let jacobi_line = text.lines().find(|l| l.contains("jacobi")).unwrap();
        assert!(jacobi_line.contains(",10000,,20"));
        // Median over two seeds.
        let summary = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&summary).unwrap();
        let laker = parsed["cells"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["method"] == "laker")
            .unwrap();
        assert_eq!(laker["rmse"], 1.5);
        assert_eq!(laker["seeds"], 2);
    }

    #[test]
    fn history_files_written_per_row() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row(20, Method::Gd, 3, 2.0)];
        let created = emit_tables(&rows, dir.path()).unwrap();
        let history = dir.path().join("history_20_gd_3.csv");
        assert!(created.contains(&history));
        let text = std::fs::read_to_string(history).unwrap();
        assert_eq!(text, "iteration,residual,obj_gap\n1,0.5,0.9\n");
    }
}
