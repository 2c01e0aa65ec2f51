//! Plug-in information estimates over code tables, ambiguity measures against raw embeddings,
//! an exact check of the masked-prediction mutual-information bound, and dominant-FLOP counts.
//!
//! All entropies are in nats. Levels are 0-based, as in [`SidTable::column`](crate::SidTable::column).

mod ambiguity;
mod bound;
mod entropy;
mod flops;
mod report;

use thiserror::Error;

pub use ambiguity::{intra_code_cosine, sid_overlap, OverlapReport, SidCorpus, SidPair};
pub use bound::{check_sufficiency_bound, exact_predictor, mask_weights, random_toy, BoundCheck, Predictor, ToyJoint};
pub use entropy::{
    ambiguity_identity, entropy_report, final_cell_proxy, joint_entropy, marginal_entropy, plugin_entropy,
    prefix_conditional_entropy, AmbiguityIdentity, EntropyReport, LevelEntropy,
};
pub use flops::{estimate_flops, FamaeShape, FlopReport, GaoqLevelShape, GaoqShape, T5Shape};
pub use report::{diagnose, DiagnosticReport, LevelReport};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("empty code table")]
    Empty,
    #[error("level {level} out of range for {levels}-level codes")]
    Level { level: usize, levels: usize },
    #[error("{0}")]
    Mismatch(String),
    #[error("corpus line {line}: {reason}")]
    Corpus { line: usize, reason: String },
    #[error("not enumerable: {0}")]
    NotEnumerable(String),
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("FLOP count overflows in {0}")]
    Overflow(&'static str),
    #[error("invalid shape: {0}")]
    Shape(String),
}

fn check_level(levels: usize, level: usize) -> Result<(), DiagnosticsError> {
    if level >= levels {
        return Err(DiagnosticsError::Level { level, levels });
    }
    Ok(())
}
