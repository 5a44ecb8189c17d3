//! Machine-readable experiment reports.
//!
//! Every run emits exactly one JSON document on stdout. With a fixed seed
//! and dataset the document is bit-identical across reruns except for the
//! `*_ms` timing fields.

use serde::Serialize;

/// Parameters echoed into the report; absent fields are omitted from the
/// JSON so matrix and vector runs share one shape.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// CountSketch buckets per row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    /// CountSketch rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    pub seed: u64,
    pub trials: usize,
}

/// Wall-clock phases in milliseconds; sketch and finalize are means over
/// trials. All values are nonnegative.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub ingest_ms: f64,
    pub sketch_ms: f64,
    pub finalize_ms: f64,
}

/// One seeded trial.
#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub seed: u64,
    pub estimate: f64,
    /// estimate/exact − 1; present only when a nonzero exact value exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_rel: Option<f64>,
    pub sketch_ms: f64,
    pub finalize_ms: f64,
}

/// A full experiment run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    /// Command line that produced this report.
    pub command: String,
    /// Dataset path (or output path for generator runs).
    pub dataset: String,
    pub params: Params,
    /// Mean estimate across trials; absent for exact-only runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<f64>,
    /// True when the exact value is zero, which leaves eps_rel undefined.
    pub exact_is_zero: bool,
    /// Mean per-trial estimate/exact − 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_rel: Option<f64>,
    pub timings_ms: Timings,
    pub trial_count: usize,
    pub trials: Vec<TrialReport>,
    /// Recovered k-sparse support as (1-based index, value), matching the
    /// file convention; `recover` runs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovered: Option<Vec<(usize, f64)>>,
}

/// Relative error against a known exact value, undefined at exact = 0.
pub fn eps_rel(estimate: f64, exact: Option<f64>) -> Option<f64> {
    match exact {
        Some(x) if x != 0.0 => Some(estimate / x - 1.0),
        _ => None,
    }
}

pub fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for x in xs {
        sum += x;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
