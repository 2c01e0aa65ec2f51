//! The "RSID" little-endian binary container.
//!
//! Embedding matrices (version 1):
//!
//! ```text
//! b"RSID" | version u32 | rows u32 | dim u32 | rows*dim f32 | JSON array of row tokens
//! ```
//!
//! Encoder checkpoints (version 2) reuse the magic with a JSON manifest describing the
//! tensors that follow:
//!
//! ```text
//! b"RSID" | version u32 | manifest_len u32 | manifest JSON | f32 tensor payload
//! ```

use std::fs;
use std::path::Path;

use super::DataError;

pub const MAGIC: &[u8; 4] = b"RSID";
pub const EMBEDDING_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 2;
const HEADER_LEN: usize = 16;

/// Dense `rows x dim` item representations, row-major `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f32>,
    row_tokens: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f32>, row_tokens: Vec<String>) -> Result<Self, DataError> {
        if values.len() != rows * dim {
            return Err(DataError::Schema(format!(
                "{} values for a {rows}x{dim} matrix",
                values.len()
            )));
        }
        if row_tokens.len() != rows {
            return Err(DataError::Schema(format!(
                "{} row tokens for {rows} rows",
                row_tokens.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                row: i / dim.max(1),
                col: i % dim.max(1),
            });
        }
        Ok(Self {
            rows,
            dim,
            values,
            row_tokens,
        })
    }

    /// Builds a matrix from `f64` rows, naming rows `0..n`. Convenient for synthetic data.
    pub fn from_rows_f64(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(DataError::Schema("ragged rows".into()));
            }
            values.extend(r.iter().map(|&v| v as f32));
        }
        let tokens = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(rows.len(), dim, values, tokens)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_tokens(&self) -> &[String] {
        &self.row_tokens
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, DataError> {
        let rows = u32::try_from(self.rows).map_err(|_| DataError::TooLarge("row count"))?;
        let dim = u32::try_from(self.dim).map_err(|_| DataError::TooLarge("dimension"))?;
        let trailer = serde_json::to_vec(&self.row_tokens).expect("string list serializes");
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len() + trailer.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
        out.extend_from_slice(&rows.to_le_bytes());
        out.extend_from_slice(&dim.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&trailer);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        let version = check_magic(bytes)?;
        if version != EMBEDDING_VERSION {
            return Err(DataError::format(4, format!("unsupported embedding version {version}")));
        }
        if bytes.len() < HEADER_LEN {
            return Err(DataError::format(bytes.len(), "truncated header"));
        }
        let rows = read_u32(bytes, 8) as usize;
        let dim = read_u32(bytes, 12) as usize;
        let payload = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| DataError::format(8, format!("{rows}x{dim} payload overflows")))?;
        let end = HEADER_LEN
            .checked_add(payload)
            .ok_or_else(|| DataError::format(8, "payload size overflows"))?;
        if bytes.len() < end {
            return Err(DataError::format(
                bytes.len(),
                format!("truncated payload: expected {payload} bytes of values"),
            ));
        }
        let values = read_f32s(&bytes[HEADER_LEN..end]);
        let row_tokens: Vec<String> = serde_json::from_slice(&bytes[end..])
            .map_err(|e| DataError::format(end, format!("bad row-token trailer: {e}")))?;
        if row_tokens.len() != rows {
            return Err(DataError::format(
                end,
                format!("trailer names {} rows, header says {rows}", row_tokens.len()),
            ));
        }
        Self::new(rows, dim, values, row_tokens)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| DataError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.with_path(path))
    }
}

pub fn check_magic(bytes: &[u8]) -> Result<u32, DataError> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(DataError::format(0, "bad magic"));
    }
    Ok(read_u32(bytes, 4))
}

pub fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect()
}
