//! Item tables, interaction sequences and the binary embedding format.

mod items;
pub mod rsid;
mod sequences;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use items::{FieldSchema, ItemTable, Vocabulary};
pub use rsid::EmbeddingMatrix;
pub use sequences::{windows_of, SequenceStore, Split, Window, WindowPolicy, DEFAULT_MAX_LEN};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no items")]
    NoItems,
    #[error("no sequences")]
    NoSequences,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate item id '{token}'")]
    DuplicateItem { line: usize, token: String },
    #[error("line {line}: unknown item '{token}'")]
    UnknownItem { line: usize, token: String },
    #[error("line {line}: user '{user}' has an empty sequence")]
    EmptySequence { user: String, line: usize },
    #[error("item {item}: field {field} value {value} outside vocabulary of size {vocab}")]
    FieldOutOfRange {
        item: usize,
        field: usize,
        value: usize,
        vocab: usize,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("{0} does not fit in u32")]
    TooLarge(&'static str),
    #[error("{}byte offset {offset}: {reason}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Format {
        path: Option<PathBuf>,
        offset: usize,
        reason: String,
    },
    #[error("schema: {0}")]
    Schema(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        Self::Format {
            path: None,
            offset,
            reason: reason.into(),
        }
    }

    /// Attaches the file name to a format error.
    pub fn with_path(self, p: &Path) -> Self {
        match self {
            Self::Format { offset, reason, .. } => Self::Format {
                path: Some(p.to_owned()),
                offset,
                reason,
            },
            other => other,
        }
    }
}
