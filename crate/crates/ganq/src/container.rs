//! GQL1 on-disk container for quantized layers.
//!
//! Layout, all integers little-endian:
//!   bytes 0–3   magic `GQL1`
//!   bytes 4–7   metadata length `len` as u32
//!   next `len`  metadata JSON (UTF-8, keys documented in the repo)
//!   codebook    rows × 2^bits f16 values, row-major
//!   packed      rows × ceil(cols·bits/8) index bytes
//!   sparse      present iff metadata `nnz` > 0:
//!               (rows+1) u32 row offsets, nnz u32 column indices,
//!               nnz f16 values
//!
//! The codebook and sparse values are stored at f16 — identical to the
//! in-memory layer, which is rounded at build time — so save/load is
//! lossless for layers produced by this crate.

use std::fs;
use std::io::Write;
use std::path::Path;

use half::f16;

use crate::error::{Error, Result};
use crate::kernel::{bytes_per_row, LayerMeta, PackedQuery, QuantizedLayer};
use crate::outlier::SparseOutliers;
use crate::solver::Codebook;

pub const GQL_MAGIC: [u8; 4] = *b"GQL1";

pub fn save_layer(layer: &QuantizedLayer, path: &Path) -> Result<()> {
    let bytes = layer_to_bytes(layer)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn load_layer(path: &Path) -> Result<QuantizedLayer> {
    let bytes = fs::read(path)?;
    layer_from_bytes(&bytes)
}

pub fn layer_to_bytes(layer: &QuantizedLayer) -> Result<Vec<u8>> {
    let meta = layer.meta();
    let meta_json = serde_json::to_vec(meta)
        .map_err(|e| Error::Format(format!("metadata encoding failed: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(&GQL_MAGIC);
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_json);
    for &v in layer.codebook().as_slice() {
        out.extend_from_slice(&f16::from_f64(v).to_le_bytes());
    }
    out.extend_from_slice(layer.packed().payload());
    if let Some(s) = layer.outliers() {
        for &off in s.row_offsets() {
            out.extend_from_slice(&off.to_le_bytes());
        }
        for &c in s.col_indices() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for &v in s.values() {
            out.extend_from_slice(&f16::from_f64(v).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn layer_from_bytes(bytes: &[u8]) -> Result<QuantizedLayer> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let magic = cursor.take(4)?;
    if magic != GQL_MAGIC {
        return Err(Error::Format("bad magic, expected GQL1".into()));
    }
    let meta_len = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap()) as usize;
    let meta_bytes = cursor.take(meta_len)?;
    let meta: LayerMeta = serde_json::from_slice(meta_bytes)
        .map_err(|e| Error::Format(format!("metadata decoding failed: {e}")))?;
    if !(1..=8).contains(&meta.bits) {
        return Err(Error::Format(format!("metadata bit width {} out of range", meta.bits)));
    }
    if meta.rows == 0 || meta.cols == 0 {
        return Err(Error::Format("metadata declares an empty layer".into()));
    }
    let levels = 1usize << meta.bits;

    let mut codebook_values = Vec::with_capacity(meta.rows * levels);
    for chunk in cursor.take(meta.rows * levels * 2)?.chunks_exact(2) {
        codebook_values.push(f16::from_le_bytes(chunk.try_into().unwrap()).to_f64());
    }
    let codebook = Codebook::new(meta.rows, levels, codebook_values)?;

    let packed_len = meta.rows * bytes_per_row(meta.cols, meta.bits);
    let packed =
        PackedQuery::from_payload(meta.rows, meta.cols, meta.bits, cursor.take(packed_len)?.to_vec())?;

    let outliers = if meta.nnz > 0 {
        let mut offsets = Vec::with_capacity(meta.rows + 1);
        for chunk in cursor.take((meta.rows + 1) * 4)?.chunks_exact(4) {
            offsets.push(u32::from_le_bytes(chunk.try_into().unwrap()));
        }
        let mut cols = Vec::with_capacity(meta.nnz);
        for chunk in cursor.take(meta.nnz * 4)?.chunks_exact(4) {
            cols.push(u32::from_le_bytes(chunk.try_into().unwrap()));
        }
        let mut values = Vec::with_capacity(meta.nnz);
        for chunk in cursor.take(meta.nnz * 2)?.chunks_exact(2) {
            values.push(f16::from_le_bytes(chunk.try_into().unwrap()).to_f64());
        }
        Some(SparseOutliers::new(meta.rows, meta.cols, offsets, cols, values)?)
    } else {
        None
    };
    if cursor.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the declared payload",
            bytes.len() - cursor.pos
        )));
    }
    QuantizedLayer::from_parts(codebook, packed, outliers, meta)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).ok_or_else(|| Error::Format("length overflow".into()))?;
        if end > self.bytes.len() {
            return Err(Error::Format(format!(
                "container truncated: wanted {len} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }
}
