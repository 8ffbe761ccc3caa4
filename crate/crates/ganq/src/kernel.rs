//! Inference-side machinery: bit-packed query matrices, the LUT-based and
//! dequantization-based mixed-precision GEMM paths, and storage accounting.
//!
//! Both GEMM paths follow one accumulation-order contract — f32 products
//! accumulated over columns j = 0..n ascending, row-major — so their outputs
//! are bitwise identical and differences between the paths are purely about
//! whether a dense W̃ is materialized.

use half::f16;

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, Precision};
use crate::outlier::{sparse_matmul, SparseOutliers};
use crate::parallel::for_each_row_mut;
use crate::solver::{Assignment, Codebook};

/// Bit-packed codebook indices. Each row is an independent little-endian
/// bitstream (index k occupies bits [k·N, (k+1)·N)), padded to a byte
/// boundary so rows can be processed in parallel without cross-row bit
/// arithmetic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedQuery {
    rows: usize,
    cols: usize,
    bit_width: u8,
    payload: Vec<u8>,
}

impl PackedQuery {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bit_width(&self) -> u8 {
        self.bit_width
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn bytes_per_row(&self) -> usize {
        bytes_per_row(self.cols, self.bit_width)
    }

    pub fn from_payload(rows: usize, cols: usize, bit_width: u8, payload: Vec<u8>) -> Result<Self> {
        check_bits(bit_width)?;
        if payload.len() != rows * bytes_per_row(cols, bit_width) {
            return Err(Error::Format(format!(
                "packed payload holds {} bytes, {}x{} at {} bits needs {}",
                payload.len(),
                rows,
                cols,
                bit_width,
                rows * bytes_per_row(cols, bit_width)
            )));
        }
        Ok(Self { rows, cols, bit_width, payload })
    }

    pub fn row_payload(&self, i: usize) -> &[u8] {
        let stride = self.bytes_per_row();
        &self.payload[i * stride..(i + 1) * stride]
    }
}

pub fn bytes_per_row(cols: usize, bit_width: u8) -> usize {
    (cols * bit_width as usize).div_ceil(8)
}

fn check_bits(bits: u8) -> Result<()> {
    if !(1..=8).contains(&bits) {
        return Err(Error::Argument(format!("bit width must be in 1..=8, got {bits}")));
    }
    Ok(())
}

/// Pack assignment indices at N bits each.
pub fn pack(a: &Assignment, bit_width: u8) -> Result<PackedQuery> {
    check_bits(bit_width)?;
    let limit = 1u16 << bit_width;
    if let Some(&bad) = a.as_slice().iter().find(|&&v| (v as u16) >= limit) {
        return Err(Error::Argument(format!(
            "index {bad} does not fit in {bit_width} bits"
        )));
    }
    let stride = bytes_per_row(a.cols(), bit_width);
    let mut payload = vec![0u8; a.rows() * stride];
    for i in 0..a.rows() {
        let out = &mut payload[i * stride..(i + 1) * stride];
        for (k, &idx) in a.row(i).iter().enumerate() {
            let bit = k * bit_width as usize;
            let byte = bit / 8;
            let shift = bit % 8;
            let v = (idx as u16) << shift;
            out[byte] |= v as u8;
            if shift + bit_width as usize > 8 {
                out[byte + 1] |= (v >> 8) as u8;
            }
        }
    }
    PackedQuery::from_payload(a.rows(), a.cols(), bit_width, payload)
}

/// Recover the assignment from a packed query. Lossless for every valid
/// assignment; padding bits are ignored.
pub fn unpack(p: &PackedQuery) -> Result<Assignment> {
    let mask = (1u16 << p.bit_width) - 1;
    let mut idx = Vec::with_capacity(p.rows() * p.cols());
    for i in 0..p.rows() {
        let row = p.row_payload(i);
        for k in 0..p.cols() {
            idx.push(read_index(row, k, p.bit_width, mask));
        }
    }
    Assignment::new(p.rows(), p.cols(), idx, 1usize << p.bit_width)
}

#[inline]
fn read_index(row: &[u8], k: usize, bit_width: u8, mask: u16) -> u8 {
    let bit = k * bit_width as usize;
    let byte = bit / 8;
    let shift = bit % 8;
    let mut v = (row[byte] as u16) >> shift;
    if shift + bit_width as usize > 8 {
        v |= (row[byte + 1] as u16) << (8 - shift);
    }
    (v & mask) as u8
}

/// A quantized layer ready for inference or serialization: per-row codebook
/// (held at f16 resolution, matching what the container stores), packed
/// indices, optional extracted outliers, and provenance metadata.
#[derive(Debug, Clone)]
pub struct QuantizedLayer {
    codebook: Codebook,
    packed: PackedQuery,
    outliers: Option<SparseOutliers>,
    meta: LayerMeta,
}

/// Provenance block persisted alongside the payloads.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct LayerMeta {
    pub rows: usize,
    pub cols: usize,
    pub bits: u8,
    pub method: String,
    pub precondition: String,
    pub iterations: usize,
    pub nnz: usize,
}

impl QuantizedLayer {
    /// Bundle solver output into a deployable layer. Codebook and outlier
    /// values are rounded through f16 here — not at save time — so the
    /// in-memory layer, every kernel result, and the serialized container
    /// all agree exactly.
    pub fn build(
        codebook: &Codebook,
        assignment: &Assignment,
        bits: u8,
        outliers: Option<SparseOutliers>,
        method: &str,
        precondition: &str,
        iterations: usize,
    ) -> Result<Self> {
        if codebook.rows() != assignment.rows() {
            return Err(Error::Argument("codebook rows must match assignment rows".into()));
        }
        if codebook.levels() != 1usize << bits {
            return Err(Error::Argument(format!(
                "codebook has {} levels, {} bits needs {}",
                codebook.levels(),
                bits,
                1usize << bits
            )));
        }
        if let Some(s) = &outliers {
            if s.rows() != assignment.rows() || s.cols() != assignment.cols() {
                return Err(Error::Argument("outlier shape must match the layer".into()));
            }
        }
        let rounded: Vec<f64> = codebook
            .as_slice()
            .iter()
            .map(|&v| f16::from_f64(v).to_f64())
            .collect();
        let codebook = Codebook::new(codebook.rows(), codebook.levels(), rounded)?;
        let outliers = match outliers {
            Some(s) => Some(SparseOutliers::new(
                s.rows(),
                s.cols(),
                s.row_offsets().to_vec(),
                s.col_indices().to_vec(),
                s.values().iter().map(|&v| f16::from_f64(v).to_f64()).collect(),
            )?),
            None => None,
        };
        let packed = pack(assignment, bits)?;
        let nnz = outliers.as_ref().map_or(0, |s| s.nnz());
        let meta = LayerMeta {
            rows: assignment.rows(),
            cols: assignment.cols(),
            bits,
            method: method.to_string(),
            precondition: precondition.to_string(),
            iterations,
            nnz,
        };
        Ok(Self { codebook, packed, outliers, meta })
    }

    pub fn from_parts(
        codebook: Codebook,
        packed: PackedQuery,
        outliers: Option<SparseOutliers>,
        meta: LayerMeta,
    ) -> Result<Self> {
        if codebook.rows() != packed.rows() || meta.rows != packed.rows() {
            return Err(Error::Format("layer row counts disagree".into()));
        }
        Ok(Self { codebook, packed, outliers, meta })
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn packed(&self) -> &PackedQuery {
        &self.packed
    }

    pub fn outliers(&self) -> Option<&SparseOutliers> {
        self.outliers.as_ref()
    }

    pub fn meta(&self) -> &LayerMeta {
        &self.meta
    }

    pub fn rows(&self) -> usize {
        self.meta.rows
    }

    pub fn cols(&self) -> usize {
        self.meta.cols
    }

    /// Unpack and gather the full W̃ in f64 (reporting/objective helper; the
    /// kernels below never materialize this).
    pub fn dequantize_weights(&self) -> Result<DenseMatrix> {
        let a = unpack(&self.packed)?;
        self.codebook.dequantize(&a)
    }

    /// Container bytes of this layer under the storage model.
    pub fn storage_bytes(&self) -> u64 {
        storage_bytes(self.meta.rows, self.meta.cols, self.meta.bits, StorageScheme::Lut, self.meta.nnz)
    }
}

/// LUT-path mpGEMM: indices are unpacked on the fly, codebook values
/// gathered per element, products accumulated in f32. The sparse outlier
/// product (f64) is added elementwise afterwards when present.
pub fn lut_gemm(layer: &QuantizedLayer, x: &DenseMatrix) -> Result<DenseMatrix> {
    check_gemm_shapes(layer, x)?;
    let (m, n, p) = (layer.rows(), layer.cols(), x.cols());
    let x32 = to_f32(x);
    let bits = layer.packed.bit_width();
    let mask = (1u16 << bits) - 1;
    let mut out = vec![0.0f64; m * p];
    for_each_row_mut(&mut out, p, |i, orow| {
        let trow = layer.codebook.row(i);
        let row_bits = layer.packed.row_payload(i);
        let mut acc = vec![0.0f32; p];
        for j in 0..n {
            let idx = read_index(row_bits, j, bits, mask) as usize;
            let w = trow[idx] as f32;
            let xrow = &x32[j * p..(j + 1) * p];
            for (a, &xv) in acc.iter_mut().zip(xrow) {
                *a += w * xv;
            }
        }
        for (o, &a) in orow.iter_mut().zip(&acc) {
            *o = a as f64;
        }
    });
    add_sparse_term(layer, x, &mut out)?;
    DenseMatrix::new(m, p, out, Precision::F32)
}

/// Dequantization-path mpGEMM: materializes the dense f32 W̃ first, then
/// multiplies under the same accumulation-order contract as [`lut_gemm`].
pub fn dequant_gemm(layer: &QuantizedLayer, x: &DenseMatrix) -> Result<DenseMatrix> {
    check_gemm_shapes(layer, x)?;
    let (m, n, p) = (layer.rows(), layer.cols(), x.cols());
    let x32 = to_f32(x);
    let a = unpack(&layer.packed)?;
    let mut w_tilde = vec![0.0f32; m * n];
    for i in 0..m {
        let trow = layer.codebook.row(i);
        for (j, &s) in a.row(i).iter().enumerate() {
            w_tilde[i * n + j] = trow[s as usize] as f32;
        }
    }
    let mut out = vec![0.0f64; m * p];
    for_each_row_mut(&mut out, p, |i, orow| {
        let wrow = &w_tilde[i * n..(i + 1) * n];
        let mut acc = vec![0.0f32; p];
        for (j, &w) in wrow.iter().enumerate() {
            let xrow = &x32[j * p..(j + 1) * p];
            for (a, &xv) in acc.iter_mut().zip(xrow) {
                *a += w * xv;
            }
        }
        for (o, &a) in orow.iter_mut().zip(&acc) {
            *o = a as f64;
        }
    });
    add_sparse_term(layer, x, &mut out)?;
    DenseMatrix::new(m, p, out, Precision::F32)
}

fn check_gemm_shapes(layer: &QuantizedLayer, x: &DenseMatrix) -> Result<()> {
    if layer.cols() != x.rows() {
        return Err(Error::Argument(format!(
            "layer cols {} must match activation rows {}",
            layer.cols(),
            x.rows()
        )));
    }
    Ok(())
}

fn to_f32(x: &DenseMatrix) -> Vec<f32> {
    x.as_slice().iter().map(|&v| v as f32).collect()
}

fn add_sparse_term(layer: &QuantizedLayer, x: &DenseMatrix, out: &mut [f64]) -> Result<()> {
    if let Some(s) = layer.outliers() {
        let extra = sparse_matmul(s, x)?;
        for (o, &e) in out.iter_mut().zip(extra.as_slice()) {
            *o += e;
        }
    }
    Ok(())
}

/// Storage scheme under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageScheme {
    /// Full-precision f16 weights.
    Fp16,
    /// Per-channel uniform quantization: packed indices plus one f16 scale
    /// and one f16 zero-point per row.
    Uniform,
    /// LUT quantization: packed indices plus a 2^N-entry f16 codebook per row.
    Lut,
}

/// Exact container byte counts for an m×n layer. Packed payloads are
/// byte-aligned per row; the sparse extension adds u32 offsets per row plus
/// one u32 column index and one f16 value per entry.
pub fn storage_bytes(m: usize, n: usize, bits: u8, scheme: StorageScheme, nnz: usize) -> u64 {
    let m = m as u64;
    let n = n as u64;
    match scheme {
        StorageScheme::Fp16 => 2 * m * n,
        StorageScheme::Uniform => {
            m * bytes_per_row(n as usize, bits) as u64 + 4 * m + sparse_block_bytes(m, nnz)
        }
        StorageScheme::Lut => {
            m * bytes_per_row(n as usize, bits) as u64
                + 2 * (1u64 << bits) * m
                + sparse_block_bytes(m, nnz)
        }
    }
}

fn sparse_block_bytes(m: u64, nnz: usize) -> u64 {
    if nnz == 0 {
        return 0;
    }
    (m + 1) * 4 + nnz as u64 * (4 + 2)
}

/// Percent of the f16 baseline, rounded to two decimals.
pub fn percent_of_fp16(m: usize, n: usize, bits: u8, scheme: StorageScheme, nnz: usize) -> f64 {
    let bytes = storage_bytes(m, n, bits, scheme, nnz) as f64;
    let full = storage_bytes(m, n, bits, StorageScheme::Fp16, 0) as f64;
    (bytes / full * 10000.0).round() / 100.0
}
