//! Semantic-ID tokenization for generative recommendation.
//!
//! - [`data`]: item tables, interaction sequences and the binary embedding format.
//! - [`famae`]: a small bidirectional encoder trained by masked field prediction, whose field
//!   embeddings serve as item representations.
//! - [`gaoq`]: hierarchical quantizers turning representations into code tuples.
//! - [`diagnostics`]: entropy, ambiguity and cost estimates for code tables.

pub mod data;
pub mod diagnostics;
pub mod famae;
pub mod gaoq;
pub mod rng;

pub use data::{EmbeddingMatrix, ItemTable, SequenceStore};
pub use gaoq::{CodeBook, Method, QuantizerConfig, SidTable};
