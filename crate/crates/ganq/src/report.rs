//! JSON run reports. Key names are part of the tool's interface and are
//! documented in `docs/formats.md`; additions are fine, renames are not.

use serde::Serialize;

use crate::solver::SolveTrace;

/// One quantization (or evaluation) run, serializable as a JSON document.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub command: String,
    pub method: String,
    pub bits: u8,
    pub rows: usize,
    pub cols: usize,
    /// Full configuration echo for reproducibility.
    pub config: serde_json::Value,
    pub objective: ObjectiveReport,
    pub storage: StorageReport,
    pub timings_ms: serde_json::Value,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObjectiveReport {
    /// `‖WX − W̃X‖_F²` of the deployed layer (f16 codebook), against the
    /// calibration activations.
    pub final_deployed: f64,
    /// Final solver objective before codebook values are rounded to f16.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_solver: Option<f64>,
    /// Alternating-phase history, empty for one-shot baselines.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_iteration: Vec<IterationReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub after_assign: f64,
    pub after_refit: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StorageReport {
    pub bytes: u64,
    pub pct_of_fp16: f64,
    pub outlier_nnz: usize,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

/// Flatten a solve trace into the report's iteration list.
pub fn iteration_reports(trace: &SolveTrace) -> Vec<IterationReport> {
    trace
        .iterations
        .iter()
        .enumerate()
        .map(|(i, it)| IterationReport {
            iteration: i + 1,
            after_assign: it.objective_after_assign,
            after_refit: it.objective_after_refit,
        })
        .collect()
}
