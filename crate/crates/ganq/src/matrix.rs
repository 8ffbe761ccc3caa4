//! Dense row-major matrices and the GQT on-disk format.
//!
//! GQT is the interchange format for weights and calibration activations:
//! a 21-byte header (magic `GQT1`, dtype byte, u64 row/col counts, all
//! little-endian) followed by the raw row-major payload. Floating point is
//! stored at the declared precision; all in-memory arithmetic is f64.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const GQT_MAGIC: [u8; 4] = *b"GQT1";
pub const GQT_HEADER_LEN: usize = 21;

/// Element precision of a matrix payload on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn byte_width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Precision::F32),
            1 => Ok(Precision::F64),
            other => Err(Error::Format(format!("unknown dtype tag {other}"))),
        }
    }

    fn tag(self) -> u8 {
        match self {
            Precision::F32 => 0,
            Precision::F64 => 1,
        }
    }
}

/// Row-major dense matrix. Immutable after construction; elements are held
/// in f64 regardless of the declared storage precision so downstream Gram
/// and error accumulation never loses bits to intermediate rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    elems: Vec<f64>,
    precision: Precision,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, elems: Vec<f64>, precision: Precision) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Argument(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if elems.len() != rows * cols {
            return Err(Error::Argument(format!(
                "payload holds {} elements, shape {rows}x{cols} needs {}",
                elems.len(),
                rows * cols
            )));
        }
        if let Some(pos) = elems.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite element {} at flat index {pos}",
                elems[pos]
            )));
        }
        Ok(Self { rows, cols, elems, precision })
    }

    /// f32-precision matrix from f64 values (stored values are rounded
    /// through f32 so that save/load is the identity).
    pub fn from_f32_values(rows: usize, cols: usize, elems: Vec<f64>) -> Result<Self> {
        let rounded = elems.into_iter().map(|v| v as f32 as f64).collect();
        Self::new(rows, cols, rounded, Precision::F32)
    }

    pub fn from_f64_values(rows: usize, cols: usize, elems: Vec<f64>) -> Result<Self> {
        Self::new(rows, cols, elems, Precision::F64)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.elems[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.elems[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.elems
    }

    /// Load a matrix from a GQT file.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_gqt_bytes(&bytes)
    }

    pub fn from_gqt_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < GQT_HEADER_LEN {
            return Err(Error::Format(format!(
                "file too short for GQT header: {} bytes",
                bytes.len()
            )));
        }
        if bytes[0..4] != GQT_MAGIC {
            return Err(Error::Format("bad magic, expected GQT1".into()));
        }
        let precision = Precision::from_tag(bytes[4])?;
        let rows = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
        let cols = u64::from_le_bytes(bytes[13..21].try_into().unwrap());
        if rows == 0 || cols == 0 {
            return Err(Error::Format(format!("degenerate shape {rows}x{cols}")));
        }
        let count = rows
            .checked_mul(cols)
            .and_then(|n| usize::try_from(n).ok())
            .ok_or_else(|| Error::Format(format!("shape {rows}x{cols} overflows")))?;
        let expected = count
            .checked_mul(precision.byte_width())
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        let payload = &bytes[GQT_HEADER_LEN..];
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "header shape {rows}x{cols} implies {expected} payload bytes, found {}",
                payload.len()
            )));
        }
        let mut elems = Vec::with_capacity(count);
        match precision {
            Precision::F32 => {
                for chunk in payload.chunks_exact(4) {
                    elems.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
                }
            }
            Precision::F64 => {
                for chunk in payload.chunks_exact(8) {
                    elems.push(f64::from_le_bytes(chunk.try_into().unwrap()));
                }
            }
        }
        Self::new(rows as usize, cols as usize, elems, precision)
    }

    /// Write the matrix as GQT bytes. `load(save(m)) == m` elementwise, and
    /// saving a loaded file reproduces it byte for byte.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_gqt_bytes();
        let mut file = fs::File::create(path)?;
        file.write_all(&bytes)?;
        Ok(())
    }

    pub fn to_gqt_bytes(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(GQT_HEADER_LEN + self.elems.len() * self.precision.byte_width());
        out.extend_from_slice(&GQT_MAGIC);
        out.push(self.precision.tag());
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        match self.precision {
            Precision::F32 => {
                for &v in &self.elems {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            Precision::F64 => {
                for &v in &self.elems {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }
}

/// Squared Frobenius distance `‖A − B‖_F²`, accumulated in f64.
pub fn frobenius_error(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::Argument(format!(
            "shape mismatch: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum())
}

/// Dense product A·B in f64. Simple reference implementation used by the
/// solver for objectives and by tests as a building block; the packed
/// inference kernels live in [`crate::kernel`].
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::Argument(format!(
            "inner dimensions differ: {}x{} times {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = a.row(i);
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate().take(k) {
            if av == 0.0 {
                continue;
            }
            let brow = b.row(p);
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    DenseMatrix::new(m, n, out, Precision::F64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, elems: &[f64]) -> DenseMatrix {
        DenseMatrix::from_f32_values(rows, cols, elems.to_vec()).unwrap()
    }

    #[test]
    fn gqt_bytes_roundtrip_identity() {
        let m = mat(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let bytes = m.to_gqt_bytes();
        assert_eq!(bytes.len(), GQT_HEADER_LEN + 16);
        let back = DenseMatrix::from_gqt_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        // save(load(p)) reproduces p byte-for-byte
        assert_eq!(back.to_gqt_bytes(), bytes);
    }

    #[test]
    fn f64_payload_is_eight_bytes_per_element() {
        let m = DenseMatrix::from_f64_values(3, 2, vec![0.5; 6]).unwrap();
        let bytes = m.to_gqt_bytes();
        assert_eq!(bytes.len() - GQT_HEADER_LEN, 48);
    }

    #[test]
    fn single_element_f32_payload_is_four_bytes() {
        let m = mat(1, 1, &[0.0]);
        assert_eq!(m.to_gqt_bytes().len() - GQT_HEADER_LEN, 4);
    }

    #[test]
    fn rejects_payload_shape_mismatch() {
        let m = mat(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let mut bytes = m.to_gqt_bytes();
        bytes.truncate(GQT_HEADER_LEN + 12); // 3 elements for a 2x2 header
        match DenseMatrix::from_gqt_bytes(&bytes) {
            Err(Error::Format(_)) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_magic_and_dtype() {
        let mut bytes = mat(1, 1, &[1.0]).to_gqt_bytes();
        bytes[0] = b'X';
        assert!(matches!(DenseMatrix::from_gqt_bytes(&bytes), Err(Error::Format(_))));
        let mut bytes = mat(1, 1, &[1.0]).to_gqt_bytes();
        bytes[4] = 7;
        assert!(matches!(DenseMatrix::from_gqt_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_non_finite_payload() {
        let mut bytes = mat(1, 2, &[1.0, 2.0]).to_gqt_bytes();
        bytes[GQT_HEADER_LEN..GQT_HEADER_LEN + 4]
            .copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(DenseMatrix::from_gqt_bytes(&bytes), Err(Error::Data(_))));
    }

    #[test]
    fn rejects_zero_dimensions() {
        let mut bytes = mat(1, 1, &[1.0]).to_gqt_bytes();
        bytes[5..13].copy_from_slice(&0u64.to_le_bytes());
        bytes.truncate(GQT_HEADER_LEN);
        assert!(matches!(DenseMatrix::from_gqt_bytes(&bytes), Err(Error::Format(_))));
        assert!(DenseMatrix::from_f64_values(0, 3, vec![]).is_err());
    }

    #[test]
    fn frobenius_matches_hand_values() {
        let a = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let zero = mat(2, 2, &[0.0; 4]);
        assert_eq!(frobenius_error(&a, &a).unwrap(), 0.0);
        assert_eq!(frobenius_error(&a, &zero).unwrap(), 2.0);
        let b = mat(2, 3, &[0.0; 6]);
        assert!(frobenius_error(&a, &b).is_err());
    }

    #[test]
    fn frobenius_matches_naive_loop() {
        let mut rng = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        };
        let a_vals: Vec<f64> = (0..48).map(|_| next()).collect();
        let b_vals: Vec<f64> = (0..48).map(|_| next()).collect();
        let a = DenseMatrix::from_f64_values(6, 8, a_vals.clone()).unwrap();
        let b = DenseMatrix::from_f64_values(6, 8, b_vals.clone()).unwrap();
        let mut oracle = 0.0;
        for i in 0..6 {
            for j in 0..8 {
                let d = a_vals[i * 8 + j] - b_vals[i * 8 + j];
                oracle += d * d;
            }
        }
        let got = frobenius_error(&a, &b).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.max(1.0));
    }

    #[test]
    fn matmul_matches_naive_loop() {
        let a = mat(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = mat(3, 2, &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.as_slice(), &[58.0, 64.0, 139.0, 154.0]);
        assert!(matmul(&a, &a).is_err());
    }
}
