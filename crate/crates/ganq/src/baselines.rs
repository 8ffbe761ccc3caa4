//! Reference quantizers: round-to-nearest per-channel uniform, per-row
//! k-means codebooks, and a brute-force optimum for tiny instances. All
//! three emit the same (Codebook, Assignment) pair as the solver so they
//! flow through the identical kernels and reports.

use crate::error::{Error, Result};
use crate::gram::{gram, pinv_small};
use crate::kmeans::{lloyd_1d, nearest_index};
use crate::matrix::DenseMatrix;
use crate::solver::{Assignment, Codebook};

/// Per-row scale and zero-point of the uniform baseline.
#[derive(Debug, Clone, Copy)]
pub struct UniformParams {
    pub scale: f64,
    pub zero_point: u32,
}

/// Round-to-nearest uniform quantization with per-row asymmetric (min–max)
/// scale and zero-point: `q = clamp(round(x/s) + z, 0, 2^N−1)`, emitted in
/// LUT form with levels `t_k = s·(k − z)`. Constant rows degenerate to a
/// single repeated level so they reconstruct exactly.
pub fn rtn_quantize(
    w: &DenseMatrix,
    bits: u8,
) -> Result<(Codebook, Assignment, Vec<UniformParams>)> {
    check_bits(bits)?;
    let levels = 1usize << bits;
    let qmax = (levels - 1) as f64;
    let (m, n) = (w.rows(), w.cols());
    let mut values = Vec::with_capacity(m * levels);
    let mut idx = vec![0u8; m * n];
    let mut params = Vec::with_capacity(m);
    for i in 0..m {
        let row = w.row(i);
        let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if min == max {
            params.push(UniformParams { scale: 1.0, zero_point: 0 });
            values.extend(std::iter::repeat_n(min, levels));
            continue; // all indices stay 0
        }
        let scale = (max - min) / qmax;
        let z = (-min / scale).round().clamp(0.0, qmax) as u32;
        params.push(UniformParams { scale, zero_point: z });
        for k in 0..levels {
            values.push(scale * (k as f64 - z as f64));
        }
        for (j, &x) in row.iter().enumerate() {
            let q = ((x / scale).round() + z as f64).clamp(0.0, qmax);
            idx[i * n + j] = q as u8;
        }
    }
    Ok((Codebook::new(m, levels, values)?, Assignment::new(m, n, idx, levels)?, params))
}

/// Per-row 1-D Lloyd clustering into `2^N` centroids, assignments to the
/// nearest centroid. Deterministic (grid init, farthest-point repair).
pub fn kmeans_quantize(w: &DenseMatrix, bits: u8) -> Result<(Codebook, Assignment)> {
    check_bits(bits)?;
    let levels = 1usize << bits;
    let (m, n) = (w.rows(), w.cols());
    let mut values = Vec::with_capacity(m * levels);
    let mut idx = vec![0u8; m * n];
    for i in 0..m {
        let row = w.row(i);
        let centroids = lloyd_1d(row, levels);
        for (j, &x) in row.iter().enumerate() {
            idx[i * n + j] = nearest_index(&centroids, x) as u8;
        }
        values.extend(centroids);
    }
    Ok((Codebook::new(m, levels, values)?, Assignment::new(m, n, idx, levels)?))
}

/// Enumeration budget for the brute-force oracle: keeps single-row CI
/// instances in the n≤16/N=1 and n≤8/N=2 regimes.
pub const ORACLE_MAX_ASSIGNMENTS: u64 = 65536;

/// Global optimum of the single-row problem by exhaustive enumeration.
///
/// Every one of the `(2^N)^n` assignments is scored with its own closed-form
/// optimal codebook (the same restricted least-squares system the solver's
/// refit uses), so the returned objective is the true minimum. Ties resolve
/// to the lexicographically smallest assignment.
pub fn exhaustive_oracle(
    w: &DenseMatrix,
    x: &DenseMatrix,
    bits: u8,
) -> Result<(Codebook, Assignment, f64)> {
    check_bits(bits)?;
    if w.rows() != 1 {
        return Err(Error::Argument("oracle operates on a single row".into()));
    }
    if x.rows() != w.cols() {
        return Err(Error::Argument("activation rows must match weight columns".into()));
    }
    let n = w.cols();
    let levels = 1usize << bits;
    let total = (levels as u64).checked_pow(n as u32).filter(|&t| t <= ORACLE_MAX_ASSIGNMENTS);
    let Some(total) = total else {
        return Err(Error::Argument(format!(
            "instance needs {levels}^{n} assignments, oracle cap is {ORACLE_MAX_ASSIGNMENTS}"
        )));
    };

    let h = gram(x);
    let wrow = w.row(0);
    // W·H, shared across all candidate assignments
    let mut wh = vec![0.0; n];
    for (j, whj) in wh.iter_mut().enumerate() {
        *whj = (0..n).map(|k| wrow[k] * h.get(k, j)).sum();
    }
    // constant term ‖W X‖² of the expanded quadratic
    let const_term: f64 = (0..n).map(|j| wrow[j] * wh[j]).sum();

    let mut best_obj = f64::INFINITY;
    let mut best_assign: Vec<u8> = vec![0; n];
    let mut best_values: Vec<f64> = vec![0.0; levels];
    let mut assign = vec![0u8; n];
    for counter in 0..total {
        // odometer decode, most significant digit first so iteration order
        // is lexicographic and the first optimum found wins ties
        let mut c = counter;
        for j in (0..n).rev() {
            assign[j] = (c % levels as u64) as u8;
            c /= levels as u64;
        }
        let (values, obj) = optimal_codebook_for(&assign, &wh, &h, levels, const_term);
        if obj < best_obj - 1e-15 {
            best_obj = obj;
            best_assign.copy_from_slice(&assign);
            best_values = values;
        }
    }
    let mut assignment = Assignment::new(1, n, best_assign, levels)?;
    let codebook = canonical_single_row(best_values, &mut assignment)?;
    Ok((codebook, assignment, best_obj.max(0.0)))
}

/// Closed-form optimal codebook for one fixed assignment, and the resulting
/// objective `W·H·Wᵀ − c·B†·cᵀ` (rank-safe through the pseudoinverse).
fn optimal_codebook_for(
    assign: &[u8],
    wh: &[f64],
    h: &crate::gram::GramMatrix,
    levels: usize,
    const_term: f64,
) -> (Vec<f64>, f64) {
    let mut rhs = vec![0.0; levels];
    for (j, &s) in assign.iter().enumerate() {
        rhs[s as usize] += wh[j];
    }
    let mut b = vec![0.0; levels * levels];
    for (j, &s) in assign.iter().enumerate() {
        for (k, &t) in assign.iter().enumerate() {
            b[(s as usize) * levels + t as usize] += h.get(j, k);
        }
    }
    let binv = pinv_small(&b, levels).expect("levels bounded by bit width");
    let mut values = vec![0.0; levels];
    for s in 0..levels {
        values[s] = (0..levels).map(|t| rhs[t] * binv[t * levels + s]).sum();
    }
    // objective = const − 2·T·c + T·B·Tᵀ; at the optimum this telescopes to
    // const − T·c, but evaluate the full quadratic to stay exact for
    // singular B as well
    let mut tc = 0.0;
    let mut tbt = 0.0;
    for s in 0..levels {
        tc += values[s] * rhs[s];
        for t in 0..levels {
            tbt += values[s] * b[s * levels + t] * values[t];
        }
    }
    (values, const_term - 2.0 * tc + tbt)
}

fn canonical_single_row(mut values: Vec<f64>, assignment: &mut Assignment) -> Result<Codebook> {
    let levels = values.len();
    let mut order: Vec<usize> = (0..levels).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut remap = vec![0u8; levels];
    for (new_pos, &old) in order.iter().enumerate() {
        remap[old] = new_pos as u8;
    }
    let sorted: Vec<f64> = order.iter().map(|&o| values[o]).collect();
    values.copy_from_slice(&sorted);
    let remapped: Vec<u8> = assignment.as_slice().iter().map(|&s| remap[s as usize]).collect();
    *assignment = Assignment::new(1, assignment.cols(), remapped, levels)?;
    Codebook::new(1, levels, values)
}

fn check_bits(bits: u8) -> Result<()> {
    if !(1..=8).contains(&bits) {
        return Err(Error::Argument(format!("bit width must be in 1..=8, got {bits}")));
    }
    Ok(())
}
