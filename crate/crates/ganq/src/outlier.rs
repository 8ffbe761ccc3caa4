//! Row-wise symmetric-percentile outlier extraction and the sparse/dense
//! weight decomposition behind the starred solver variant: extremes go to a
//! row-compressed sparse matrix, the dense remainder is quantized, and
//! inference adds the sparse product back.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::parallel::for_each_row_mut;

/// Row-compressed sparse matrix of extracted outlier weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOutliers {
    rows: usize,
    cols: usize,
    row_offsets: Vec<u32>, // length rows + 1, non-decreasing
    col_indices: Vec<u32>, // strictly increasing within each row
    values: Vec<f64>,
}

impl SparseOutliers {
    pub fn new(
        rows: usize,
        cols: usize,
        row_offsets: Vec<u32>,
        col_indices: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != rows + 1 || row_offsets[0] != 0 {
            return Err(Error::Argument("row offsets must have length rows+1 and start at 0".into()));
        }
        if row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Argument("row offsets must be non-decreasing".into()));
        }
        let nnz = row_offsets[rows] as usize;
        if col_indices.len() != nnz || values.len() != nnz {
            return Err(Error::Argument("index/value lengths must equal the final offset".into()));
        }
        for r in 0..rows {
            let span = row_offsets[r] as usize..row_offsets[r + 1] as usize;
            let cols_of_row = &col_indices[span];
            if cols_of_row.iter().any(|&c| c as usize >= cols) {
                return Err(Error::Argument("column index out of range".into()));
            }
            if cols_of_row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Argument("column indices must be strictly increasing".into()));
            }
        }
        Ok(Self { rows, cols, row_offsets, col_indices, values })
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[u32] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// (column, value) pairs of one row.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r] as usize..self.row_offsets[r + 1] as usize;
        self.col_indices[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    /// Dense m×n image of the sparse matrix (test and report helper).
    pub fn densify(&self) -> Result<DenseMatrix> {
        let mut elems = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                elems[r * self.cols + c] = v;
            }
        }
        DenseMatrix::from_f64_values(self.rows, self.cols, elems)
    }
}

/// Split W into (outliers, dense remainder) by row-wise symmetric
/// percentiles.
///
/// With tail percentile `p = 1 − r/2`, each row's sorted values give an
/// upper cutoff at index `⌊n·p⌋` and a lower cutoff at index `⌈n·(1−p)⌉`;
/// entries at or beyond a cutoff are outlier candidates. Candidate counts
/// are capped at the index-derived tail sizes (`n − ⌊n·p⌋` above,
/// `⌈n·(1−p)⌉` below), breaking ties by larger magnitude then smaller
/// column, so degenerate rows full of equal values cannot mark everything.
/// Outlier positions are exactly zero in the dense part and the two parts
/// sum back to W bitwise.
pub fn split_outliers(w: &DenseMatrix, ratio: f64) -> Result<(SparseOutliers, DenseMatrix)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Argument(format!("outlier ratio must lie in (0,1), got {ratio}")));
    }
    let (m, n) = (w.rows(), w.cols());
    if n < 2 {
        return Err(Error::Argument("outlier split needs at least two columns".into()));
    }
    let p = 1.0 - 0.5 * ratio;
    let upper_idx = (n as f64 * p).floor() as usize;
    let lower_idx = (n as f64 * (1.0 - p)).ceil() as usize;
    if lower_idx >= upper_idx {
        return Err(Error::Argument(format!(
            "cutoff indices cross for n={n}, ratio={ratio} (lower {lower_idx} ≥ upper {upper_idx}); \
             increase n or the ratio resolution"
        )));
    }
    let upper_idx = upper_idx.min(n - 1);
    let upper_cap = n - upper_idx;
    let lower_cap = lower_idx;

    let mut dense = w.as_slice().to_vec();
    let mut marks: Vec<Vec<(u32, f64)>> = vec![Vec::new(); m];
    for (i, row_marks) in marks.iter_mut().enumerate() {
        let row = w.row(i);
        let mut sorted = row.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let upper_cut = sorted[upper_idx];
        let lower_cut = sorted[lower_idx];

        let mut marked = vec![false; n];
        let pick = |pred: &dyn Fn(f64) -> bool, cap: usize, marked: &mut [bool]| {
            let mut candidates: Vec<usize> =
                (0..n).filter(|&j| !marked[j] && pred(row[j])).collect();
            candidates.sort_by(|&a, &b| {
                row[b]
                    .abs()
                    .partial_cmp(&row[a].abs())
                    .unwrap()
                    .then(a.cmp(&b))
            });
            for &j in candidates.iter().take(cap) {
                marked[j] = true;
            }
        };
        pick(&|v| v >= upper_cut, upper_cap, &mut marked);
        pick(&|v| v <= lower_cut, lower_cap, &mut marked);

        for (j, &is_outlier) in marked.iter().enumerate() {
            if is_outlier {
                row_marks.push((j as u32, row[j]));
                dense[i * n + j] = 0.0;
            }
        }
    }

    let mut row_offsets = Vec::with_capacity(m + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0u32);
    for row_marks in &marks {
        for &(c, v) in row_marks {
            col_indices.push(c);
            values.push(v);
        }
        row_offsets.push(col_indices.len() as u32);
    }
    let sparse = SparseOutliers::new(m, n, row_offsets, col_indices, values)?;
    let dense = DenseMatrix::new(m, n, dense, w.precision())?;
    Ok((sparse, dense))
}

/// Exact sparse–dense product S·X in f64.
pub fn sparse_matmul(s: &SparseOutliers, x: &DenseMatrix) -> Result<DenseMatrix> {
    if s.cols() != x.rows() {
        return Err(Error::Argument(format!(
            "sparse cols {} must match activation rows {}",
            s.cols(),
            x.rows()
        )));
    }
    let (m, p) = (s.rows(), x.cols());
    let mut out = vec![0.0; m * p];
    for_each_row_mut(&mut out, p, |i, orow| {
        for (c, v) in s.row_entries(i) {
            for (o, &xv) in orow.iter_mut().zip(x.row(c)) {
                *o += v * xv;
            }
        }
    });
    DenseMatrix::from_f64_values(m, p, out)
}
