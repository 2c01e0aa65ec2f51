//! Masked field prediction over interaction windows.
//!
//! A small pre-norm bidirectional transformer reads a user's recent items (each the sum of
//! its field embeddings plus a position vector) and a target item whose fields are partly
//! replaced by per-field mask tokens. The masked fields are predicted through a scaled-cosine
//! softmax against the same field embedding tables, so after training the concatenated field
//! embeddings of an item serve as its representation.

mod encoder;
mod mask;
mod metrics;
mod objective;
mod params;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;

pub use encoder::{encode, input_token};
pub use mask::{sample_mask, MaskSample};
pub use metrics::{extract_item_representations, metric_collaborative, metric_discriminative, recall_at_k, MaskMode};
pub use objective::{cosine_softmax, famae_loss, famae_loss_value, predictive_distribution, LossAndGrad};
pub use params::{EncoderParameters, Layout, Real, TensorSpec};
pub use train::{cosine_lr, train, AdamW, EarlyStopping, EpochLog, StopDecision, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum FamaeError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("cannot sample a mask over zero fields")]
    NoFields,
    #[error("field {field}: value {value} outside vocabulary of {size}")]
    OutOfVocabulary { field: usize, value: usize, size: usize },
    #[error("zero-norm {0} in cosine logits")]
    ZeroNorm(&'static str),
    #[error("non-finite loss at window {window}")]
    NonFiniteLoss { window: usize },
    #[error("training diverged in epoch {epoch} at window {window}")]
    Diverged {
        epoch: usize,
        window: usize,
        last_good: Box<EncoderParameters<f32>>,
    },
    #[error("empty evaluation split")]
    EmptySplit,
    #[error("window has no history")]
    EmptyHistory,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Architecture and objective settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    /// Per-field loss weights; empty means 1.0 for every field.
    pub field_weights: Vec<f64>,
    /// Sampled negatives per masked field; 0 selects the full softmax.
    pub negatives: usize,
    /// Vocabularies at most this large always use the full softmax.
    pub full_softmax_limit: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            layers: 2,
            heads: 4,
            ffn_dim: 512,
            dropout: 0.1,
            field_weights: Vec::new(),
            negatives: 128,
            full_softmax_limit: 1024,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, num_fields: usize) -> Result<(), FamaeError> {
        let bad = |m: String| Err(FamaeError::Config(m));
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return bad(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            ));
        }
        if self.ffn_dim == 0 {
            return bad("ffn_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !self.field_weights.is_empty() && self.field_weights.len() != num_fields {
            return bad(format!(
                "{} field weights for {num_fields} fields",
                self.field_weights.len()
            ));
        }
        if let Some(w) = self.field_weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return bad(format!("field weight {w} must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn field_weight(&self, field: usize) -> f64 {
        self.field_weights.get(field).copied().unwrap_or(1.0)
    }
}
