//! Browser bindings for the quantization toolkit. Three interactive
//! operations back the static demo page in `www/`:
//!
//! - [`convergence_demo`]: run the alternating solver on a synthetic layer
//!   and report the objective trace next to the baselines
//! - [`sweep_lambda_demo`]: fixed-lambda preconditioning sweep vs adaptive
//! - [`codebook_demo`]: one weight row with the levels each method picks
//!   and the outlier cutoffs
//!
//! Every export returns a JSON string; the page does the plotting.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ganq::baselines::{kmeans_quantize, rtn_quantize};
use ganq::outlier::split_outliers;
use ganq::solver::{objective, solve, CodebookInit, SolverConfig};
use ganq::synth::{generate, SynthDist};
use ganq::{percent_of_fp16, PrecondPolicy, StorageScheme};

#[wasm_bindgen(start)]
pub fn start() {
    console_error_panic_hook::set_once();
}

const MAX_ROWS: usize = 128;
const MAX_COLS: usize = 512;
const MAX_CALIB: usize = 4096;
const MAX_ITERS: usize = 50;

fn parse_dist(dist: &str) -> Result<SynthDist, String> {
    SynthDist::parse(dist).ok_or_else(|| format!("unknown distribution {dist}"))
}

fn check_sizes(rows: usize, cols: usize, calib_cols: usize, iters: usize) -> Result<(), String> {
    if rows == 0 || rows > MAX_ROWS || !(2..=MAX_COLS).contains(&cols) {
        return Err(format!("layer size must be 1..={MAX_ROWS} x 2..={MAX_COLS}"));
    }
    if calib_cols == 0 || calib_cols > MAX_CALIB {
        return Err(format!("calibration columns must be 1..={MAX_CALIB}"));
    }
    if iters == 0 || iters > MAX_ITERS {
        return Err(format!("iterations must be 1..={MAX_ITERS}"));
    }
    Ok(())
}

#[derive(Serialize)]
struct ConvergenceResponse {
    rows: usize,
    cols: usize,
    calib_cols: usize,
    bits: u8,
    iterations: Vec<IterPoint>,
    rtn_objective: f64,
    kmeans_objective: f64,
    solver_objective: f64,
    starred_objective: Option<f64>,
    outlier_nnz: usize,
    storage_pct_lut: f64,
    storage_pct_uniform: f64,
}

#[derive(Serialize)]
struct IterPoint {
    iteration: usize,
    after_assign: f64,
    after_refit: f64,
}

#[allow(clippy::too_many_arguments)]
fn convergence_impl(
    rows: usize,
    cols: usize,
    calib_cols: usize,
    bits: u8,
    iters: usize,
    dist: &str,
    seed: u64,
    outlier_ratio: f64,
) -> Result<String, String> {
    check_sizes(rows, cols, calib_cols, iters)?;
    let dist = parse_dist(dist)?;
    let w = generate(dist, rows, cols, seed).map_err(|e| e.to_string())?;
    let x = generate(SynthDist::Gauss, cols, calib_cols, seed ^ 0x5EED).map_err(|e| e.to_string())?;
    let cfg = SolverConfig {
        bit_width: bits,
        iterations: iters,
        init: CodebookInit::UniformGrid,
        precond: PrecondPolicy::AdaptiveDominance,
        seed,
    };
    let (_, _, trace) = solve(&w, &x, &cfg).map_err(|e| e.to_string())?;

    let (t_rtn, a_rtn, _) = rtn_quantize(&w, bits).map_err(|e| e.to_string())?;
    let rtn_objective = objective(&w, &t_rtn, &a_rtn, &x).map_err(|e| e.to_string())?;
    let (t_km, a_km) = kmeans_quantize(&w, bits).map_err(|e| e.to_string())?;
    let kmeans_objective = objective(&w, &t_km, &a_km, &x).map_err(|e| e.to_string())?;

    let (starred_objective, outlier_nnz) = if outlier_ratio > 0.0 {
        match split_outliers(&w, outlier_ratio) {
            Ok((sparse, dense)) => {
                let (_, _, star) = solve(&dense, &x, &cfg).map_err(|e| e.to_string())?;
                (Some(star.final_objective), sparse.nnz())
            }
            Err(e) => return Err(e.to_string()),
        }
    } else {
        (None, 0)
    };

    let response = ConvergenceResponse {
        rows,
        cols,
        calib_cols,
        bits,
        iterations: trace
            .iterations
            .iter()
            .enumerate()
            .map(|(i, it)| IterPoint {
                iteration: i + 1,
                after_assign: it.objective_after_assign,
                after_refit: it.objective_after_refit,
            })
            .collect(),
        rtn_objective,
        kmeans_objective,
        solver_objective: trace.final_objective,
        starred_objective,
        outlier_nnz,
        storage_pct_lut: percent_of_fp16(rows, cols, bits, StorageScheme::Lut, outlier_nnz),
        storage_pct_uniform: percent_of_fp16(rows, cols, bits, StorageScheme::Uniform, 0),
    };
    serde_json::to_string(&response).map_err(|e| e.to_string())
}

/// Quantize a synthetic layer and report the objective trace together with
/// the RTN / k-means baselines and (optionally) the outlier-split variant.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn convergence_demo(
    rows: usize,
    cols: usize,
    calib_cols: usize,
    bits: u8,
    iters: usize,
    dist: &str,
    seed: u64,
    outlier_ratio: f64,
) -> Result<String, JsValue> {
    convergence_impl(rows, cols, calib_cols, bits, iters, dist, seed, outlier_ratio)
        .map_err(|e| JsValue::from_str(&e))
}

#[derive(Serialize)]
struct SweepRow {
    label: String,
    objective: f64,
}

fn sweep_impl(
    rows: usize,
    cols: usize,
    calib_cols: usize,
    bits: u8,
    seed: u64,
    lambdas: &str,
) -> Result<String, String> {
    check_sizes(rows, cols, calib_cols, 10)?;
    let w = generate(SynthDist::Gauss, rows, cols, seed).map_err(|e| e.to_string())?;
    let x = generate(SynthDist::Gauss, cols, calib_cols, seed ^ 0x5EED).map_err(|e| e.to_string())?;
    let mut policies: Vec<(String, PrecondPolicy)> = Vec::new();
    for part in lambdas.split(',').filter(|s| !s.trim().is_empty()) {
        let lambda: f64 = part.trim().parse().map_err(|_| format!("bad lambda {part}"))?;
        policies.push((format!("λ={lambda}"), PrecondPolicy::FixedLambda(lambda)));
    }
    policies.push(("adaptive".into(), PrecondPolicy::AdaptiveDominance));
    let mut rows_out = Vec::new();
    for (label, precond) in policies {
        let cfg = SolverConfig { bit_width: bits, precond, seed, ..SolverConfig::default() };
        let (_, _, trace) = solve(&w, &x, &cfg).map_err(|e| format!("{label}: {e}"))?;
        rows_out.push(SweepRow { label, objective: trace.final_objective });
    }
    serde_json::to_string(&rows_out).map_err(|e| e.to_string())
}

/// Solve the same synthetic layer under each fixed-lambda policy plus the
/// adaptive default, returning one objective per policy.
#[wasm_bindgen]
pub fn sweep_lambda_demo(
    rows: usize,
    cols: usize,
    calib_cols: usize,
    bits: u8,
    seed: u64,
    lambdas: &str,
) -> Result<String, JsValue> {
    sweep_impl(rows, cols, calib_cols, bits, seed, lambdas).map_err(|e| JsValue::from_str(&e))
}

#[derive(Serialize)]
struct CodebookResponse {
    weights: Vec<f64>,
    rtn_levels: Vec<f64>,
    kmeans_levels: Vec<f64>,
    solver_levels: Vec<f64>,
    lower_cutoff: Option<f64>,
    upper_cutoff: Option<f64>,
    outlier_count: usize,
}

fn codebook_impl(
    cols: usize,
    bits: u8,
    dist: &str,
    seed: u64,
    outlier_ratio: f64,
) -> Result<String, String> {
    check_sizes(1, cols, 8 * cols.min(MAX_CALIB / 8), 10)?;
    let dist = parse_dist(dist)?;
    let w = generate(dist, 1, cols, seed).map_err(|e| e.to_string())?;
    let x = generate(SynthDist::Gauss, cols, 8 * cols, seed ^ 0x5EED).map_err(|e| e.to_string())?;
    let cfg = SolverConfig { bit_width: bits, seed, ..SolverConfig::default() };
    let (t_solver, _, _) = solve(&w, &x, &cfg).map_err(|e| e.to_string())?;
    let (t_rtn, _, _) = rtn_quantize(&w, bits).map_err(|e| e.to_string())?;
    let (t_km, _) = kmeans_quantize(&w, bits).map_err(|e| e.to_string())?;

    let (lower_cutoff, upper_cutoff, outlier_count) = if outlier_ratio > 0.0 {
        match split_outliers(&w, outlier_ratio) {
            Ok((sparse, _)) => {
                let values: Vec<f64> = sparse.row_entries(0).map(|(_, v)| v).collect();
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if values.is_empty() {
                    (None, None, 0)
                } else {
                    (Some(lo), Some(hi), values.len())
                }
            }
            Err(e) => return Err(e.to_string()),
        }
    } else {
        (None, None, 0)
    };

    let response = CodebookResponse {
        weights: w.row(0).to_vec(),
        rtn_levels: t_rtn.row(0).to_vec(),
        kmeans_levels: t_km.row(0).to_vec(),
        solver_levels: t_solver.row(0).to_vec(),
        lower_cutoff,
        upper_cutoff,
        outlier_count,
    };
    serde_json::to_string(&response).map_err(|e| e.to_string())
}

/// One synthetic weight row with the quantization levels chosen by each
/// method, plus the outlier extraction cutoffs. Feeds the histogram view.
#[wasm_bindgen]
pub fn codebook_demo(
    cols: usize,
    bits: u8,
    dist: &str,
    seed: u64,
    outlier_ratio: f64,
) -> Result<String, JsValue> {
    codebook_impl(cols, bits, dist, seed, outlier_ratio).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_response_parses_and_improves_on_rtn() {
        let json = convergence_impl(8, 32, 128, 3, 10, "gauss", 7, 0.05).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["iterations"].as_array().unwrap().len(), 10);
        assert!(v["solver_objective"].as_f64().unwrap() <= v["rtn_objective"].as_f64().unwrap());
        assert!(v["starred_objective"].is_number());
    }

    #[test]
    fn sweep_appends_adaptive_row() {
        let json = sweep_impl(4, 16, 64, 4, 3, "0.5,1,10").unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let rows = v.as_array().unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[3]["label"], "adaptive");
    }

    #[test]
    fn codebook_levels_are_sorted() {
        let json = codebook_impl(64, 3, "heavy_tail_t3", 5, 0.1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["rtn_levels", "kmeans_levels", "solver_levels"] {
            let levels: Vec<f64> =
                v[key].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
            assert_eq!(levels.len(), 8);
            assert!(levels.windows(2).all(|w| w[0] <= w[1]), "{key} not sorted");
        }
        assert!(v["outlier_count"].as_u64().unwrap() > 0);
    }

    #[test]
    fn size_guards_reject_oversized_requests() {
        assert!(convergence_impl(10_000, 32, 64, 4, 10, "gauss", 0, 0.0).is_err());
        assert!(convergence_impl(8, 32, 64, 4, 500, "gauss", 0, 0.0).is_err());
        assert!(convergence_impl(8, 32, 64, 4, 10, "cauchy", 0, 0.0).is_err());
    }
}
