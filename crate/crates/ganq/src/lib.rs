//! Layer-wise LUT-based non-uniform weight quantization.
//!
//! Given a weight matrix W and calibration activations X, the solver picks a
//! per-row codebook T of `2^N` values and a per-element index matrix Q that
//! minimize the layer output error `‖WX − W̃X‖_F²`, alternating a greedy
//! back-substitution assignment over the Cholesky factor of X·Xᵀ with a
//! closed-form least-squares codebook refit. Around that core:
//!
//! - [`matrix`]: dense matrices and the GQT interchange format
//! - [`gram`](mod@gram): Gram construction, preconditioning, Cholesky, small pseudoinverse
//! - [`solver`]: the alternating quantizer
//! - [`baselines`]: round-to-nearest, per-row k-means, and a brute-force oracle
//! - [`outlier`]: sparse/dense weight splitting for outlier-aware quantization
//! - [`kernel`] / [`container`]: bit-packed LUT inference kernels and the
//!   GQL1 layer container
//! - [`synth`] / [`report`]: seeded experiment inputs and JSON reports

pub mod baselines;
mod clock;
pub mod container;
pub mod error;
pub mod gram;
pub mod kernel;
pub mod kmeans;
pub mod matrix;
pub mod outlier;
mod parallel;
pub mod report;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use gram::{cholesky, gram, pinv_small, precondition, CholFactor, GramMatrix, PrecondPolicy};
pub use kernel::{
    dequant_gemm, lut_gemm, pack, percent_of_fp16, storage_bytes, unpack, LayerMeta, PackedQuery,
    QuantizedLayer, StorageScheme,
};
pub use matrix::{frobenius_error, matmul, DenseMatrix, Precision};
pub use outlier::{sparse_matmul, split_outliers, SparseOutliers};
pub use solver::{
    assign_backsub, init_codebook, objective, objective_via_factor, refit_codebook, solve,
    Assignment, Codebook, CodebookInit, SolveTrace, SolverConfig,
};
