//! Uniform driver for the quantization methods: every method yields the
//! same (codebook, assignment, outliers, trace) bundle so reporting,
//! containers, and comparisons treat them identically.

use anyhow::{bail, Context, Result};
use ganq::baselines::{exhaustive_oracle, kmeans_quantize, rtn_quantize, ORACLE_MAX_ASSIGNMENTS};
use ganq::matrix::DenseMatrix;
use ganq::outlier::{split_outliers, SparseOutliers};
use ganq::solver::{objective, solve, Assignment, Codebook, SolveTrace, SolverConfig};

use crate::Method;

pub struct MethodRun {
    pub codebook: Codebook,
    pub assignment: Assignment,
    pub outliers: Option<SparseOutliers>,
    pub trace: Option<SolveTrace>,
    /// `‖WX − W̃X‖_F²` at solver precision (f64 codebook), sparse term
    /// included for the starred variant.
    pub solver_objective: f64,
}

pub fn run_method(
    method: Method,
    w: &DenseMatrix,
    x: &DenseMatrix,
    cfg: &SolverConfig,
    outlier_ratio: f64,
) -> Result<MethodRun> {
    match method {
        Method::Rtn => {
            let (codebook, assignment, _) = rtn_quantize(w, cfg.bit_width)?;
            let obj = objective(w, &codebook, &assignment, x)?;
            Ok(MethodRun { codebook, assignment, outliers: None, trace: None, solver_objective: obj })
        }
        Method::Kmeans => {
            let (codebook, assignment) = kmeans_quantize(w, cfg.bit_width)?;
            let obj = objective(w, &codebook, &assignment, x)?;
            Ok(MethodRun { codebook, assignment, outliers: None, trace: None, solver_objective: obj })
        }
        Method::Ganq => {
            let (codebook, assignment, trace) = solve(w, x, cfg)?;
            let obj = trace.final_objective;
            Ok(MethodRun {
                codebook,
                assignment,
                outliers: None,
                trace: Some(trace),
                solver_objective: obj,
            })
        }
        Method::GanqStar => {
            let (sparse, dense) =
                split_outliers(w, outlier_ratio).context("outlier extraction failed")?;
            let (codebook, assignment, trace) = solve(&dense, x, cfg)?;
            // the sparse path restores the extracted weights exactly, so the
            // layer error equals the dense-part error
            let obj = trace.final_objective;
            Ok(MethodRun {
                codebook,
                assignment,
                outliers: Some(sparse),
                trace: Some(trace),
                solver_objective: obj,
            })
        }
        Method::Oracle => {
            let levels = 1u64 << cfg.bit_width;
            let assignments = levels.checked_pow(w.cols() as u32);
            if assignments.is_none_or(|a| a > ORACLE_MAX_ASSIGNMENTS) {
                bail!(ganq::Error::Argument(format!(
                    "oracle needs (2^{})^{} assignments per row, cap is {ORACLE_MAX_ASSIGNMENTS}",
                    cfg.bit_width,
                    w.cols()
                )));
            }
            let mut values = Vec::with_capacity(w.rows() * levels as usize);
            let mut idx = Vec::with_capacity(w.rows() * w.cols());
            for i in 0..w.rows() {
                let wi = DenseMatrix::from_f64_values(1, w.cols(), w.row(i).to_vec())?;
                let (t, a, _) = exhaustive_oracle(&wi, x, cfg.bit_width)?;
                values.extend_from_slice(t.as_slice());
                idx.extend_from_slice(a.as_slice());
            }
            let codebook = Codebook::new(w.rows(), levels as usize, values)?;
            let assignment = Assignment::new(w.rows(), w.cols(), idx, levels as usize)?;
            let obj = objective(w, &codebook, &assignment, x)?;
            Ok(MethodRun { codebook, assignment, outliers: None, trace: None, solver_objective: obj })
        }
    }
}
