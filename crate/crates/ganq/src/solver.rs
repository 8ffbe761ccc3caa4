//! Alternating-direction layer quantizer.
//!
//! Each weight row is an independent subproblem: pick, for every column, one
//! of `2^N` per-row codebook values so that the layer output error
//! `‖WX − W̃X‖_F²` is small. The solver alternates a greedy assignment step
//! that walks the Cholesky factor of the activation Gram matrix column by
//! column (back-substitution order, so each choice accounts for the
//! residuals of columns already assigned) with a closed-form least-squares
//! refit of the codebook values for the fixed assignment.

use serde::Serialize;

use crate::clock::Stopwatch;
use crate::error::{Error, Result};
use crate::gram::{cholesky, gram, pinv_small, precondition, CholFactor, GramMatrix, PrecondPolicy};
use crate::kmeans::{lloyd_1d, nearest_index, uniform_grid};
use crate::matrix::DenseMatrix;
use crate::parallel::for_each_row_mut;

/// Per-row lookup table of quantization levels. Rows are kept sorted
/// ascending (canonical form) so equal solutions compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    rows: usize,
    levels: usize,
    values: Vec<f64>,
}

impl Codebook {
    pub fn new(rows: usize, levels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * levels {
            return Err(Error::Argument(format!(
                "codebook buffer holds {} values, expected {}",
                values.len(),
                rows * levels
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite codebook value".into()));
        }
        Ok(Self { rows, levels, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.levels..(i + 1) * self.levels]
    }

    pub fn value(&self, i: usize, s: usize) -> f64 {
        self.values[i * self.levels + s]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Reconstruct W̃ for an assignment, in f64.
    pub fn dequantize(&self, a: &Assignment) -> Result<DenseMatrix> {
        if a.rows() != self.rows {
            return Err(Error::Argument("codebook/assignment row mismatch".into()));
        }
        let mut elems = Vec::with_capacity(a.rows() * a.cols());
        for i in 0..a.rows() {
            let row = self.row(i);
            for &s in a.row(i) {
                elems.push(row[s as usize]);
            }
        }
        DenseMatrix::from_f64_values(a.rows(), a.cols(), elems)
    }
}

/// Per-element codebook indices. `u8` covers every supported bit width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    rows: usize,
    cols: usize,
    idx: Vec<u8>,
}

impl Assignment {
    pub fn new(rows: usize, cols: usize, idx: Vec<u8>, levels: usize) -> Result<Self> {
        if idx.len() != rows * cols {
            return Err(Error::Argument(format!(
                "assignment buffer holds {} indices, expected {}",
                idx.len(),
                rows * cols
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&v| (v as usize) >= levels) {
            return Err(Error::Argument(format!(
                "index {bad} out of range for {levels} levels"
            )));
        }
        Ok(Self { rows, cols, idx })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        self.idx[i * self.cols + j] as usize
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.idx[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.idx
    }
}

/// Codebook initialization strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookInit {
    /// Equally spaced levels spanning each row's [min, max].
    UniformGrid,
    /// Per-row 1-D Lloyd clustering (stronger start, slightly slower).
    Kmeans1d,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Bits per weight, 1..=8.
    pub bit_width: u8,
    /// Alternating iterations K; each runs one assignment and one refit.
    pub iterations: usize,
    pub init: CodebookInit,
    pub precond: PrecondPolicy,
    /// Echoed into reports; the solve itself is deterministic.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            bit_width: 4,
            iterations: 10,
            init: CodebookInit::UniformGrid,
            precond: PrecondPolicy::AdaptiveDominance,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn levels(&self) -> usize {
        1usize << self.bit_width
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.bit_width) {
            return Err(Error::Argument(format!(
                "bit width must be in 1..=8, got {}",
                self.bit_width
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Argument("iteration count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationStats {
    pub objective_after_assign: f64,
    pub objective_after_refit: f64,
    pub assign_ms: f64,
    pub refit_ms: f64,
}

/// Objective history and phase timings of one solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveTrace {
    pub iterations: Vec<IterationStats>,
    /// `‖WX − W̃X‖_F²` of the returned solution, evaluated against X itself.
    /// Per-iteration values use the factor-form identity instead (cheaper by
    /// a factor of p/n, equal up to rounding).
    pub final_objective: f64,
    pub warnings: Vec<String>,
    pub gram_ms: f64,
    pub cholesky_ms: f64,
    pub init_ms: f64,
    pub total_ms: f64,
}

/// Initial per-row codebook. Returns the codebook plus any warnings
/// (constant rows, fewer columns than levels).
pub fn init_codebook(w: &DenseMatrix, cfg: &SolverConfig) -> Result<(Codebook, Vec<String>)> {
    cfg.validate()?;
    let levels = cfg.levels();
    let mut warnings = Vec::new();
    if w.cols() < levels {
        warnings.push(format!(
            "row length {} is below the codebook size {levels}; levels will go unused",
            w.cols()
        ));
    }
    let mut values = Vec::with_capacity(w.rows() * levels);
    for i in 0..w.rows() {
        let row = w.row(i);
        let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if min == max {
            warnings.push(format!("row {i} is constant ({min}); codebook degenerates"));
            values.extend(std::iter::repeat_n(min, levels));
            continue;
        }
        match cfg.init {
            CodebookInit::UniformGrid => values.extend(uniform_grid(min, max, levels)),
            CodebookInit::Kmeans1d => values.extend(lloyd_1d(row, levels)),
        }
    }
    Ok((Codebook::new(w.rows(), levels, values)?, warnings))
}

/// Greedy assignment by back-substitution over the Cholesky factor.
///
/// Columns are processed from n−1 down to 0. For column j of row i the
/// chosen index minimizes
/// `|W_ij + (Σ_{u>j} r_u·L_uj)/L_jj − T_is|`
/// where `r_u = W_iu − T_i[idx(i,u)]` are the residuals of columns already
/// assigned. Ties break toward the smaller index. Rows run independently.
#[allow(clippy::needless_range_loop)] // residual/diff walk L's columns by strided index
pub fn assign_backsub(w: &DenseMatrix, t: &Codebook, l: &CholFactor) -> Result<Assignment> {
    let (m, n) = (w.rows(), w.cols());
    if t.rows() != m {
        return Err(Error::Argument("codebook rows must match weight rows".into()));
    }
    if l.dim() != n {
        return Err(Error::Argument("factor dimension must match weight columns".into()));
    }
    let mut idx = vec![0u8; m * n];
    for_each_row_mut(&mut idx, n, |i, out| {
        let wrow = w.row(i);
        let trow = t.row(i);
        let mut residual = vec![0.0f64; n];
        for j in (0..n).rev() {
            let mut dot = 0.0;
            for u in (j + 1)..n {
                dot += residual[u] * l.get(u, j);
            }
            let target = wrow[j] + dot / l.get(j, j);
            let s = nearest_index(trow, target);
            out[j] = s as u8;
            residual[j] = wrow[j] - trow[s];
        }
    });
    Assignment::new(m, n, idx, t.levels())
}

/// Closed-form codebook refit for a fixed assignment:
/// `T_i = (W_i·H·S_iᵀ)(S_i·H·S_iᵀ)†` per row, where S_i is the one-hot
/// expansion of the row's indices (never materialized; both factors are
/// gather-accumulated). Levels with no assigned column keep their previous
/// value. Rows are re-sorted afterwards and the assignment indices remapped,
/// so the returned codebook stays canonical.
pub fn refit_codebook(
    w: &DenseMatrix,
    assignment: &mut Assignment,
    h: &GramMatrix,
    prev: &Codebook,
) -> Result<Codebook> {
    let wh = weight_gram_product(w, h)?;
    refit_codebook_with_wh(&wh, assignment, h, prev)
}

/// W·H, reusable across iterations since neither factor changes.
pub(crate) fn weight_gram_product(w: &DenseMatrix, h: &GramMatrix) -> Result<Vec<f64>> {
    let (m, n) = (w.rows(), w.cols());
    if h.dim() != n {
        return Err(Error::Argument("gram dimension must match weight columns".into()));
    }
    let mut wh = vec![0.0; m * n];
    for_each_row_mut(&mut wh, n, |i, out| {
        let wrow = w.row(i);
        for (j, &wj) in wrow.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            for (o, &hv) in out.iter_mut().zip(h.row(j)) {
                *o += wj * hv;
            }
        }
    });
    Ok(wh)
}

pub(crate) fn refit_codebook_with_wh(
    wh: &[f64],
    assignment: &mut Assignment,
    h: &GramMatrix,
    prev: &Codebook,
) -> Result<Codebook> {
    let (m, n) = (assignment.rows(), assignment.cols());
    let levels = prev.levels();
    if prev.rows() != m || h.dim() != n {
        return Err(Error::Argument("refit operand shapes disagree".into()));
    }
    if levels > 256 {
        return Err(Error::Argument(format!("codebook has {levels} levels, limit is 256")));
    }
    let mut values = vec![0.0; m * levels];
    // The assignment is remapped per row alongside the sort, so both buffers
    // are traversed with the same row partitioning.
    type RowPair<'a> = (&'a mut [f64], &'a mut [u8]);
    let idx_rows: Vec<&mut [u8]> = assignment.idx.chunks_mut(n).collect();
    let value_rows: Vec<&mut [f64]> = values.chunks_mut(levels).collect();
    let mut paired: Vec<(usize, RowPair)> =
        value_rows.into_iter().zip(idx_rows).enumerate().collect();

    let solve_row = |i: usize, trow: &mut [f64], arow: &mut [u8]| {
        // counts and gathered right-hand side
        let mut counts = vec![0usize; levels];
        let mut rhs = vec![0.0; levels];
        let whrow = &wh[i * n..(i + 1) * n];
        for (j, &s) in arow.iter().enumerate() {
            counts[s as usize] += 1;
            rhs[s as usize] += whrow[j];
        }
        // G = S_i·H (levels × n), then B = G·S_iᵀ (levels × levels)
        let mut g = vec![0.0; levels * n];
        for (j, &s) in arow.iter().enumerate() {
            let dst = &mut g[(s as usize) * n..(s as usize + 1) * n];
            for (d, &hv) in dst.iter_mut().zip(h.row(j)) {
                *d += hv;
            }
        }
        let mut b = vec![0.0; levels * levels];
        for (k, &s) in arow.iter().enumerate() {
            for lv in 0..levels {
                b[lv * levels + s as usize] += g[lv * n + k];
            }
        }
        let binv = pinv_small(&b, levels).expect("levels bounded by construction");
        for s in 0..levels {
            if counts[s] == 0 {
                trow[s] = prev.value(i, s);
                continue;
            }
            let mut acc = 0.0;
            for t in 0..levels {
                acc += rhs[t] * binv[t * levels + s];
            }
            trow[s] = acc;
        }
        canonicalize_row(trow, arow);
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        paired
            .par_iter_mut()
            .for_each(|(i, (trow, arow))| solve_row(*i, trow, arow));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, (trow, arow)) in paired.iter_mut() {
            solve_row(*i, trow, arow);
        }
    }
    Codebook::new(m, levels, values)
}

/// Sort one codebook row ascending and remap the assignment indices.
/// Ties keep their original relative order, so the permutation is unique.
fn canonicalize_row(trow: &mut [f64], arow: &mut [u8]) {
    let levels = trow.len();
    let mut order: Vec<usize> = (0..levels).collect();
    order.sort_by(|&a, &b| {
        trow[a]
            .partial_cmp(&trow[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut remap = vec![0u8; levels];
    let sorted: Vec<f64> = order.iter().map(|&o| trow[o]).collect();
    for (new_pos, &old) in order.iter().enumerate() {
        remap[old] = new_pos as u8;
    }
    trow.copy_from_slice(&sorted);
    for a in arow.iter_mut() {
        *a = remap[*a as usize];
    }
}

/// Layer output error `‖WX − W̃X‖_F²` in f64.
pub fn objective(
    w: &DenseMatrix,
    t: &Codebook,
    a: &Assignment,
    x: &DenseMatrix,
) -> Result<f64> {
    if w.rows() != a.rows() || w.cols() != a.cols() || t.rows() != w.rows() {
        return Err(Error::Argument("objective operand shapes disagree".into()));
    }
    if x.rows() != w.cols() {
        return Err(Error::Argument(format!(
            "activation rows {} must match weight columns {}",
            x.rows(),
            w.cols()
        )));
    }
    let (m, n, p) = (w.rows(), w.cols(), x.cols());
    let mut per_row = vec![0.0f64; m];
    for_each_row_mut(&mut per_row, 1, |i, out| {
        let wrow = w.row(i);
        let trow = t.row(i);
        let arow = a.row(i);
        let mut acc_row = vec![0.0f64; p];
        for j in 0..n {
            let d = wrow[j] - trow[arow[j] as usize];
            if d == 0.0 {
                continue;
            }
            for (accv, &xv) in acc_row.iter_mut().zip(x.row(j)) {
                *accv += d * xv;
            }
        }
        out[0] = acc_row.iter().map(|v| v * v).sum();
    });
    // sequential reduction keeps the result independent of worker count
    Ok(per_row.iter().sum())
}

/// Same objective through the factor identity `‖(W − W̃)L‖_F²`, which is
/// exact when L·Lᵀ equals the Gram matrix of X. With a preconditioned
/// factor, pass the diagonal offsets δ to subtract the exact correction
/// `Σ_j δ_j·(W − W̃)²_{:,j}`.
#[allow(clippy::needless_range_loop)] // diff walks L's columns by strided index
pub fn objective_via_factor(
    w: &DenseMatrix,
    t: &Codebook,
    a: &Assignment,
    l: &CholFactor,
    offsets: Option<&[f64]>,
) -> Result<f64> {
    let (m, n) = (w.rows(), w.cols());
    if l.dim() != n {
        return Err(Error::Argument("factor dimension must match weight columns".into()));
    }
    if let Some(d) = offsets {
        if d.len() != n {
            return Err(Error::Argument("offset vector length must match columns".into()));
        }
    }
    let mut per_row = vec![0.0f64; m];
    for_each_row_mut(&mut per_row, 1, |i, out| {
        let wrow = w.row(i);
        let trow = t.row(i);
        let arow = a.row(i);
        let diff: Vec<f64> = (0..n)
            .map(|j| wrow[j] - trow[arow[j] as usize])
            .collect();
        let mut total = 0.0;
        for j in 0..n {
            let mut acc = 0.0;
            for u in j..n {
                acc += diff[u] * l.get(u, j);
            }
            total += acc * acc;
        }
        if let Some(delta) = offsets {
            for j in 0..n {
                total -= delta[j] * diff[j] * diff[j];
            }
        }
        out[0] = total;
    });
    // tiny negative values can appear when the correction nearly cancels
    Ok(per_row.iter().sum::<f64>().max(0.0))
}

/// Run the full alternating solve: initialize the codebook, then K rounds of
/// assignment + refit, tracking objectives after each phase. Deterministic
/// for fixed inputs and configuration, independent of worker count.
pub fn solve(
    w: &DenseMatrix,
    x: &DenseMatrix,
    cfg: &SolverConfig,
) -> Result<(Codebook, Assignment, SolveTrace)> {
    cfg.validate()?;
    if x.rows() != w.cols() {
        return Err(Error::Argument(format!(
            "activation rows {} must match weight columns {}",
            x.rows(),
            w.cols()
        )));
    }
    let total_sw = Stopwatch::start();

    let sw = Stopwatch::start();
    let h_raw = gram(x);
    let gram_ms = sw.elapsed_ms();

    let sw = Stopwatch::start();
    let h = precondition(&h_raw, cfg.precond)?;
    let offsets = h.diagonal_offsets_from(&h_raw);
    let has_offsets = offsets.iter().any(|&d| d != 0.0);
    let l = cholesky(&h)?;
    let cholesky_ms = sw.elapsed_ms();

    let sw = Stopwatch::start();
    let (mut codebook, warnings) = init_codebook(w, cfg)?;
    let init_ms = sw.elapsed_ms();

    let wh = weight_gram_product(w, &h)?;
    let offsets_arg = if has_offsets { Some(offsets.as_slice()) } else { None };

    let mut iterations = Vec::with_capacity(cfg.iterations);
    let mut assignment = None;
    for _ in 0..cfg.iterations {
        let sw = Stopwatch::start();
        let mut a = assign_backsub(w, &codebook, &l)?;
        let assign_ms = sw.elapsed_ms();
        let objective_after_assign =
            objective_via_factor(w, &codebook, &a, &l, offsets_arg)?;

        let sw = Stopwatch::start();
        codebook = refit_codebook_with_wh(&wh, &mut a, &h, &codebook)?;
        let refit_ms = sw.elapsed_ms();
        let objective_after_refit =
            objective_via_factor(w, &codebook, &a, &l, offsets_arg)?;

        iterations.push(IterationStats {
            objective_after_assign,
            objective_after_refit,
            assign_ms,
            refit_ms,
        });
        assignment = Some(a);
    }
    let assignment = assignment.expect("at least one iteration");
    let final_objective = objective(w, &codebook, &assignment, x)?;
    let trace = SolveTrace {
        iterations,
        final_objective,
        warnings,
        gram_ms,
        cholesky_ms,
        init_ms,
        total_ms: total_sw.elapsed_ms(),
    };
    Ok((codebook, assignment, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::PrecondPolicy;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense(rows: usize, cols: usize, elems: Vec<f64>) -> DenseMatrix {
        DenseMatrix::from_f64_values(rows, cols, elems).unwrap()
    }

    fn random_dense(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        dense(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn cfg(bits: u8) -> SolverConfig {
        SolverConfig { bit_width: bits, ..SolverConfig::default() }
    }

    #[test]
    fn uniform_grid_init_hits_endpoints() {
        let w = dense(1, 2, vec![0.0, 1.0]);
        let (t, _) = init_codebook(&w, &cfg(1)).unwrap();
        assert_eq!(t.row(0), &[0.0, 1.0]);
    }

    #[test]
    fn kmeans_init_recovers_two_clusters() {
        let w = dense(1, 4, vec![0.0, 3.0, 3.0, 3.0]);
        let config = SolverConfig { init: CodebookInit::Kmeans1d, ..cfg(1) };
        let (t, _) = init_codebook(&w, &config).unwrap();
        assert_eq!(t.row(0), &[0.0, 3.0]);
    }

    #[test]
    fn constant_row_degenerates_with_warning() {
        let w = dense(1, 3, vec![2.5, 2.5, 2.5]);
        let (t, warnings) = init_codebook(&w, &cfg(2)).unwrap();
        assert_eq!(t.row(0), &[2.5; 4]);
        assert!(warnings.iter().any(|w| w.contains("constant")));
    }

    #[test]
    fn short_rows_warn_about_unused_levels() {
        let w = dense(1, 3, vec![0.0, 1.0, 2.0]);
        let (_, warnings) = init_codebook(&w, &cfg(4)).unwrap();
        assert!(warnings.iter().any(|w| w.contains("unused")));
    }

    fn identity_factor(n: usize) -> CholFactor {
        let mut elems = vec![0.0; n * n];
        for i in 0..n {
            elems[i * n + i] = 1.0;
        }
        cholesky(&GramMatrix::from_elems(n, elems).unwrap()).unwrap()
    }

    #[test]
    fn exact_values_assign_to_exact_levels() {
        // every weight is itself a codebook level: zero residuals, any SPD L
        let w = dense(2, 4, vec![0.0, 1.0, 1.0, 0.0, -2.0, 2.0, -2.0, 2.0]);
        let t = Codebook::new(2, 2, vec![0.0, 1.0, -2.0, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_dense(4, 16, &mut rng);
        let h = precondition(&gram(&x), PrecondPolicy::AdaptiveDominance).unwrap();
        let l = cholesky(&h).unwrap();
        let a = assign_backsub(&w, &t, &l).unwrap();
        assert_eq!(a.row(0), &[0, 1, 1, 0]);
        assert_eq!(a.row(1), &[0, 1, 0, 1]);
    }

    #[test]
    fn single_column_reduces_to_nearest_level() {
        let w = dense(3, 1, vec![0.2, 0.6, -4.0]);
        let t = Codebook::new(3, 2, vec![0.0, 1.0, 0.0, 1.0, -5.0, 5.0]).unwrap();
        let l = identity_factor(1);
        let a = assign_backsub(&w, &t, &l).unwrap();
        assert_eq!(a.as_slice(), &[0, 1, 0]);
    }

    #[test]
    fn diagonal_factor_matches_separable_exhaustive_optimum() {
        // With diagonal XXᵀ the objective separates per column, so greedy
        // nearest-level selection is the global optimum for fixed T.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..50 {
            let n = 3;
            let w = random_dense(1, n, &mut rng);
            let diag: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
            let mut x_elems = vec![0.0; n * n];
            for (i, d) in diag.iter().enumerate() {
                x_elems[i * n + i] = *d;
            }
            let x = dense(n, n, x_elems);
            let h = gram(&x);
            let l = cholesky(&h).unwrap();
            let t = Codebook::new(1, 2, vec![-0.5, 0.5]).unwrap();
            let a = assign_backsub(&w, &t, &l).unwrap();
            let got = objective(&w, &t, &a, &x).unwrap();

            let mut best = f64::INFINITY;
            for mask in 0..(1u32 << n) {
                let idx: Vec<u8> = (0..n).map(|j| ((mask >> j) & 1) as u8).collect();
                let cand = Assignment::new(1, n, idx, 2).unwrap();
                let obj = objective(&w, &t, &cand, &x).unwrap();
                if obj < best {
                    best = obj;
                }
            }
            assert!(
                got <= best + 1e-12,
                "trial {trial}: greedy {got} vs exhaustive {best}"
            );
        }
    }

    #[test]
    fn backsub_matches_division_free_reference() {
        // Independent route to the same per-column minimization: evaluate
        // |(W_j − T_s)·L_jj + Σ_{u>j} r_u·L_uj| for every candidate instead
        // of dividing through by L_jj. Orderings agree because L_jj > 0, so
        // the selected assignments must coincide (up to exact ties, which
        // have measure zero on continuous draws).
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for trial in 0..50 {
            let (m, n, p) = (3, 12, 24);
            let w = random_dense(m, n, &mut rng);
            let x = random_dense(n, p, &mut rng);
            let h = precondition(&gram(&x), PrecondPolicy::AdaptiveDominance).unwrap();
            let l = cholesky(&h).unwrap();
            let (t, _) = init_codebook(&w, &cfg(2)).unwrap();
            let fast = assign_backsub(&w, &t, &l).unwrap();

            let mut reference = vec![0u8; m * n];
            for i in 0..m {
                let wrow = w.row(i);
                let trow = t.row(i);
                let mut residual = vec![0.0f64; n];
                for j in (0..n).rev() {
                    let mut dot = 0.0;
                    for u in (j + 1)..n {
                        dot += residual[u] * l.get(u, j);
                    }
                    let mut best = 0usize;
                    let mut best_val = f64::INFINITY;
                    for (s, &level) in trow.iter().enumerate() {
                        let val = ((wrow[j] - level) * l.get(j, j) + dot).abs();
                        if val < best_val {
                            best_val = val;
                            best = s;
                        }
                    }
                    reference[i * n + j] = best as u8;
                    residual[j] = wrow[j] - trow[best];
                }
            }
            assert_eq!(
                fast.as_slice(),
                &reference[..],
                "trial {trial}: incremental route diverged from the literal one"
            );
        }
    }

    #[test]
    fn greedy_never_beats_and_tracks_the_fixed_codebook_optimum() {
        // m=1, n=3, one-bit codebook: all 2³ assignments are enumerable with
        // T held fixed. The greedy pass can be suboptimal for general L, is
        // never better than the optimum, and the gap stays small on average.
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut gaps = Vec::new();
        for _ in 0..100 {
            let n = 3;
            let w = random_dense(1, n, &mut rng);
            let x = random_dense(n, 12, &mut rng);
            let h = gram(&x);
            let l = cholesky(&h).unwrap();
            let t = Codebook::new(1, 2, vec![-0.6, 0.6]).unwrap();
            let a = assign_backsub(&w, &t, &l).unwrap();
            let greedy = objective(&w, &t, &a, &x).unwrap();
            let mut best = f64::INFINITY;
            for mask in 0..(1u32 << n) {
                let idx: Vec<u8> = (0..n).map(|j| ((mask >> j) & 1) as u8).collect();
                let cand = Assignment::new(1, n, idx, 2).unwrap();
                best = best.min(objective(&w, &t, &cand, &x).unwrap());
            }
            assert!(greedy >= best - 1e-12, "greedy {greedy} below exhaustive {best}");
            gaps.push(if best > 1e-12 { greedy / best - 1.0 } else { 0.0 });
        }
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!(
            "greedy-vs-exhaustive gap over 100 draws: median {:.3}%, max {:.3}%",
            gaps[gaps.len() / 2] * 100.0,
            gaps[gaps.len() - 1] * 100.0
        );
    }

    #[test]
    fn refit_with_identity_gram_is_per_cluster_mean() {
        let w = dense(1, 4, vec![1.0, 3.0, 10.0, 14.0]);
        let mut a = Assignment::new(1, 4, vec![0, 0, 1, 1], 2).unwrap();
        let prev = Codebook::new(1, 2, vec![0.0, 0.0]).unwrap();
        let mut h_elems = vec![0.0; 16];
        for i in 0..4 {
            h_elems[i * 4 + i] = 1.0;
        }
        let h = GramMatrix::from_elems(4, h_elems).unwrap();
        let t = refit_codebook(&w, &mut a, &h, &prev).unwrap();
        assert!((t.value(0, 0) - 2.0).abs() < 1e-12);
        assert!((t.value(0, 1) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn refit_single_used_level_is_weighted_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_dense(1, 4, &mut rng);
        let x = random_dense(4, 12, &mut rng);
        let h = gram(&x);
        let mut a = Assignment::new(1, 4, vec![0; 4], 2).unwrap();
        let prev = Codebook::new(1, 2, vec![-9.0, 9.0]).unwrap();
        let t = refit_codebook(&w, &mut a, &h, &prev).unwrap();
        let ones_h_ones: f64 =
            (0..4).map(|i| (0..4).map(|j| h.get(i, j)).sum::<f64>()).sum();
        let w_h_ones: f64 = (0..4)
            .map(|j| {
                (0..4).map(|k| w.get(0, k) * h.get(k, j)).sum::<f64>()
            })
            .sum();
        let expect = w_h_ones / ones_h_ones;
        // the refit value lands somewhere in the sorted row; the unused level
        // kept its previous value of ±9
        let vals = t.row(0);
        assert!(vals.iter().any(|v| (v - expect).abs() < 1e-9), "{vals:?} vs {expect}");
    }

    #[test]
    fn refit_never_increases_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let (m, n, p) = (3, 6, 12);
            let w = random_dense(m, n, &mut rng);
            let x = random_dense(n, p, &mut rng);
            let h = gram(&x);
            let l = cholesky(&precondition(&h, PrecondPolicy::AdaptiveDominance).unwrap())
                .unwrap();
            let (t0, _) = init_codebook(&w, &cfg(2)).unwrap();
            let mut a = assign_backsub(&w, &t0, &l).unwrap();
            let before = objective(&w, &t0, &a, &x).unwrap();
            let t1 = refit_codebook(&w, &mut a, &h, &t0).unwrap();
            let after = objective(&w, &t1, &a, &x).unwrap();
            assert!(after <= before * (1.0 + 1e-9) + 1e-12, "{after} > {before}");
        }
    }

    #[test]
    fn objective_against_identity_activation() {
        let w = dense(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let t = Codebook::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let a = Assignment::new(2, 2, vec![0, 1, 0, 1], 2).unwrap();
        let mut eye = vec![0.0; 4];
        eye[0] = 1.0;
        eye[3] = 1.0;
        let x = dense(2, 2, eye);
        assert_eq!(objective(&w, &t, &a, &x).unwrap(), 0.0);
        // perturbed assignment: error is ‖W − W̃‖² under identity X
        let a_bad = Assignment::new(2, 2, vec![1, 1, 0, 1], 2).unwrap();
        let direct = objective(&w, &t, &a_bad, &x).unwrap();
        assert!((direct - 1.0).abs() < 1e-12); // (1−2)²
    }

    #[test]
    fn factor_objective_matches_direct_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..25 {
            let (m, n, p) = (3, 5, 20);
            let w = random_dense(m, n, &mut rng);
            let x = random_dense(n, p, &mut rng);
            let h = gram(&x);
            let l = cholesky(&h).unwrap(); // p >> n keeps H full rank
            let (t, _) = init_codebook(&w, &cfg(2)).unwrap();
            let a = assign_backsub(&w, &t, &l).unwrap();
            let via_x = objective(&w, &t, &a, &x).unwrap();
            let via_l = objective_via_factor(&w, &t, &a, &l, None).unwrap();
            let rel = (via_x - via_l).abs() / via_x.max(1e-12);
            assert!(rel <= 1e-5, "X-form {via_x} vs L-form {via_l}");
        }
    }

    #[test]
    fn factor_objective_correction_accounts_for_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..25 {
            let (m, n, p) = (2, 5, 20);
            let w = random_dense(m, n, &mut rng);
            let x = random_dense(n, p, &mut rng);
            let h_raw = gram(&x);
            let h = precondition(&h_raw, PrecondPolicy::FixedLambda(0.3)).unwrap();
            let offsets = h.diagonal_offsets_from(&h_raw);
            let l = cholesky(&h).unwrap();
            let (t, _) = init_codebook(&w, &cfg(2)).unwrap();
            let a = assign_backsub(&w, &t, &l).unwrap();
            let via_x = objective(&w, &t, &a, &x).unwrap();
            let corrected = objective_via_factor(&w, &t, &a, &l, Some(&offsets)).unwrap();
            let rel = (via_x - corrected).abs() / via_x.max(1e-12);
            assert!(rel <= 1e-5, "X-form {via_x} vs corrected L-form {corrected}");
        }
    }

    #[test]
    fn exactly_representable_weights_reach_zero() {
        // alphabet on the uniform grid, so the initial codebook is exact
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let alphabet = [0.0, 1.0, 2.0, 3.0];
        let m = 3;
        let n = 10;
        let elems: Vec<f64> = (0..m * n)
            .map(|i| {
                // force min and max into every row so the grid spans [0, 3]
                match i % n {
                    0 => 0.0,
                    1 => 3.0,
                    _ => alphabet[rng.random_range(0..4)],
                }
            })
            .collect();
        let w = dense(m, n, elems);
        let x = random_dense(n, 2 * n, &mut rng);
        let (_, _, trace) = solve(&w, &x, &cfg(2)).unwrap();
        assert!(trace.final_objective <= 1e-18, "objective {}", trace.final_objective);
    }

    #[test]
    fn solve_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let w = random_dense(4, 8, &mut rng);
        let x = random_dense(8, 24, &mut rng);
        let (t1, a1, tr1) = solve(&w, &x, &cfg(2)).unwrap();
        let (t2, a2, tr2) = solve(&w, &x, &cfg(2)).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(a1, a2);
        assert_eq!(tr1.final_objective.to_bits(), tr2.final_objective.to_bits());
    }

    #[test]
    fn rows_solve_independently() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = 4;
        let n = 6;
        let w = random_dense(m, n, &mut rng);
        let x = random_dense(n, 24, &mut rng);
        let (t_joint, a_joint, _) = solve(&w, &x, &cfg(1)).unwrap();
        for i in 0..m {
            let wi = dense(1, n, w.row(i).to_vec());
            let (ti, ai, _) = solve(&wi, &x, &cfg(1)).unwrap();
            assert_eq!(ai.row(0), a_joint.row(i), "row {i} indices diverge");
            for s in 0..t_joint.levels() {
                assert!(
                    (ti.value(0, s) - t_joint.value(i, s)).abs() <= 1e-12,
                    "row {i} level {s}"
                );
            }
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        let w = dense(1, 2, vec![0.0, 1.0]);
        let x = dense(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let bad_bits = SolverConfig { bit_width: 0, ..SolverConfig::default() };
        assert!(solve(&w, &x, &bad_bits).is_err());
        let bad_iters = SolverConfig { iterations: 0, ..SolverConfig::default() };
        assert!(solve(&w, &x, &bad_iters).is_err());
        let bad_x = dense(3, 2, vec![0.0; 6]);
        assert!(solve(&w, &bad_x, &SolverConfig::default()).is_err());
    }
}
