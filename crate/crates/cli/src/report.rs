//! Metrics rows, the run manifest and the files they are written to.

use std::fs;
use std::path::Path;

use serde::Serialize;

/// How a metric is judged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    Equals(f64),
    /// Reported only.
    None,
}

/// One line of `metrics.csv`:
/// `module,claim_anchor,metric,value,threshold,pass`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub module: String,
    pub claim_anchor: String,
    pub metric: String,
    pub value: f64,
    pub threshold: String,
    pub pass: bool,
}

impl MetricRow {
    pub fn new(module: &str, claim_anchor: &str, metric: &str, value: f64, bound: Bound) -> Self {
        let (threshold, pass) = match bound {
            Bound::AtMost(t) => (format!("<= {t}"), value <= t),
            Bound::AtLeast(t) => (format!(">= {t}"), value >= t),
            Bound::Equals(t) => (format!("== {t}"), value == t),
            Bound::None => (String::new(), !value.is_nan()),
        };
        Self {
            module: module.into(),
            claim_anchor: claim_anchor.into(),
            metric: metric.into(),
            value,
            threshold,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub sampler: String,
    pub outer_step: usize,
    pub iteration: usize,
    pub residual: f64,
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_residuals(path: &Path, rows: &[ResidualRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Flattens `residuals[n][k-1]` curves into rows.
pub fn residual_rows(sampler: &str, curves: &[Vec<f64>]) -> Vec<ResidualRow> {
    curves
        .iter()
        .enumerate()
        .flat_map(|(n, curve)| {
            curve.iter().enumerate().map(move |(k, &r)| ResidualRow {
                sampler: sampler.into(),
                outer_step: n,
                iteration: k + 1,
                residual: r,
            })
        })
        .collect()
}

pub fn write_manifest(path: &Path, manifest: &serde_json::Value) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(())
}
