//! Gram matrices, positive-definiteness preconditioning, Cholesky
//! factorization, and the small symmetric pseudoinverse used by the
//! codebook refit.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::parallel::for_each_row_mut;

/// Symmetric n×n second-moment matrix H = X·Xᵀ of calibration activations.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    dim: usize,
    elems: Vec<f64>,
}

impl GramMatrix {
    /// Build from a symmetric element buffer. Symmetry is enforced by
    /// averaging with the transpose; diagonal entries must be non-negative.
    pub fn from_elems(dim: usize, elems: Vec<f64>) -> Result<Self> {
        if elems.len() != dim * dim {
            return Err(Error::Argument(format!(
                "gram buffer holds {} elements, expected {}",
                elems.len(),
                dim * dim
            )));
        }
        let mut sym = elems;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (sym[i * dim + j] + sym[j * dim + i]);
                sym[i * dim + j] = avg;
                sym[j * dim + i] = avg;
            }
        }
        for i in 0..dim {
            if sym[i * dim + i] < 0.0 {
                return Err(Error::Argument(format!(
                    "negative diagonal entry {} at index {i}",
                    sym[i * dim + i]
                )));
            }
        }
        Ok(Self { dim, elems: sym })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.elems[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.elems[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.elems
    }

    /// Per-index diagonal difference against another Gram of the same shape.
    /// Recovers the preconditioning offsets δ applied by [`precondition`].
    pub fn diagonal_offsets_from(&self, base: &GramMatrix) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.get(i, i) - base.get(i, i))
            .collect()
    }
}

/// How the Gram matrix is made safely positive definite before Cholesky.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrecondPolicy {
    /// Per-row offsets enforcing strict diagonal dominance; no tuning knob.
    AdaptiveDominance,
    /// Classic H + λI with a caller-chosen λ > 0.
    FixedLambda(f64),
    /// Leave H untouched (Cholesky may fail on rank-deficient activations).
    Off,
}

/// Gram matrix (X·Xᵀ + (X·Xᵀ)ᵀ)/2 of an n×p activation matrix, in f64.
pub fn gram(x: &DenseMatrix) -> GramMatrix {
    let n = x.rows();
    let mut elems = vec![0.0; n * n];
    // Upper triangle row by row, then mirrored; products are symmetric by
    // construction so the averaging in from_elems is a no-op here.
    for_each_row_mut(&mut elems, n, |i, out| {
        let xi = x.row(i);
        for (j, o) in out.iter_mut().enumerate().skip(i) {
            let xj = x.row(j);
            let mut acc = 0.0;
            for (a, b) in xi.iter().zip(xj) {
                acc += a * b;
            }
            *o = acc;
        }
    });
    for i in 0..n {
        for j in 0..i {
            elems[i * n + j] = elems[j * n + i];
        }
    }
    GramMatrix { dim: n, elems }
}

const ADAPTIVE_FLOOR: f64 = 1e-8;
// Extra margin on top of the dominance offset so ties become strict
// dominance and Cholesky pivots stay bounded away from zero.
const STRICT_MARGIN: f64 = 1e-9;

/// Apply the positive-definiteness policy to H.
///
/// Adaptive mode adds Diag(δ) with
/// `δ_i = max(Σ_j |H_ij| − 2·H_ii, 1e−8) + 1e−9`, which leaves the result
/// strictly diagonally dominant with a positive diagonal. Fixed mode adds
/// λI and rejects λ ≤ 0. `Off` returns H unchanged.
pub fn precondition(h: &GramMatrix, policy: PrecondPolicy) -> Result<GramMatrix> {
    let n = h.dim;
    let mut elems = h.elems.clone();
    match policy {
        PrecondPolicy::AdaptiveDominance => {
            for i in 0..n {
                let abs_sum: f64 = h.row(i).iter().map(|v| v.abs()).sum();
                let delta = (abs_sum - 2.0 * h.get(i, i)).max(ADAPTIVE_FLOOR) + STRICT_MARGIN;
                elems[i * n + i] += delta;
            }
        }
        PrecondPolicy::FixedLambda(lambda) => {
            if lambda <= 0.0 || !lambda.is_finite() {
                return Err(Error::Argument(format!(
                    "fixed-lambda preconditioning needs lambda > 0, got {lambda}"
                )));
            }
            for i in 0..n {
                elems[i * n + i] += lambda;
            }
        }
        PrecondPolicy::Off => {}
    }
    Ok(GramMatrix { dim: n, elems })
}

/// Lower-triangular Cholesky factor with strictly positive diagonal.
#[derive(Debug, Clone)]
pub struct CholFactor {
    dim: usize,
    elems: Vec<f64>, // row-major, entries above the diagonal are exactly zero
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.elems[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.elems
    }
}

/// Cholesky factorization H = L·Lᵀ. The caller is responsible for
/// preconditioning; a non-positive pivot reports the failing index.
pub fn cholesky(h: &GramMatrix) -> Result<CholFactor> {
    let n = h.dim;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = h.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite { index: i, pivot: s });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(CholFactor { dim: n, elems: l })
}

const PINV_MAX_DIM: usize = 256;
const PINV_RANK_TOL: f64 = 1e-10;

/// Moore–Penrose pseudoinverse of a small symmetric matrix (dim ≤ 256,
/// codebook-sized in practice) via a cyclic Jacobi eigendecomposition.
/// Eigenvalues below `1e−10 × max|λ|` are treated as zero, so rank-deficient
/// systems (empty codebook levels) are handled without special casing.
pub fn pinv_small(m: &[f64], dim: usize) -> Result<Vec<f64>> {
    if m.len() != dim * dim {
        return Err(Error::Argument(format!(
            "buffer holds {} elements, expected {}",
            m.len(),
            dim * dim
        )));
    }
    if dim == 0 || dim > PINV_MAX_DIM {
        return Err(Error::Argument(format!(
            "pinv_small supports 1..={PINV_MAX_DIM} dims, got {dim}"
        )));
    }
    // Symmetrize: callers pass S·H·Sᵀ which is symmetric up to rounding.
    let mut a = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            a[i * dim + j] = 0.5 * (m[i * dim + j] + m[j * dim + i]);
        }
    }
    let (eigvals, eigvecs) = jacobi_eigen(&mut a, dim);
    let max_abs = eigvals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = PINV_RANK_TOL * max_abs;
    let mut out = vec![0.0; dim * dim];
    for (k, &lambda) in eigvals.iter().enumerate() {
        if lambda.abs() <= tol {
            continue;
        }
        let inv = 1.0 / lambda;
        for i in 0..dim {
            let vik = eigvecs[i * dim + k];
            if vik == 0.0 {
                continue;
            }
            let w = inv * vik;
            for j in 0..dim {
                out[i * dim + j] += w * eigvecs[j * dim + k];
            }
        }
    }
    Ok(out)
}

/// Cyclic Jacobi sweeps on a symmetric matrix. Returns (eigenvalues,
/// column-major-by-index eigenvectors as a row-major dim×dim buffer with
/// eigenvector k in column k).
fn jacobi_eigen(a: &mut [f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; dim * dim];
    for i in 0..dim {
        v[i * dim + i] = 1.0;
    }
    if dim == 1 {
        return (vec![a[0]], v);
    }
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..dim {
            for j in (i + 1)..dim {
                off += a[i * dim + j] * a[i * dim + j];
            }
        }
        if off <= f64::EPSILON * f64::EPSILON {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = a[p * dim + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * dim + p];
                let aqq = a[q * dim + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let akp = a[k * dim + p];
                    let akq = a[k * dim + q];
                    a[k * dim + p] = c * akp - s * akq;
                    a[k * dim + q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p * dim + k];
                    let aqk = a[q * dim + k];
                    a[p * dim + k] = c * apk - s * aqk;
                    a[q * dim + k] = s * apk + c * aqk;
                }
                for k in 0..dim {
                    let vkp = v[k * dim + p];
                    let vkq = v[k * dim + q];
                    v[k * dim + p] = c * vkp - s * vkq;
                    v[k * dim + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigvals = (0..dim).map(|i| a[i * dim + i]).collect();
    (eigvals, v)
}
