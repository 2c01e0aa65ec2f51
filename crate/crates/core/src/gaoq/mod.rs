//! Hierarchical Semantic-ID quantizers.
//!
//! [`quantize_gaoq`] builds a balanced k-means tree and labels each child by matching its
//! centered centroid to a level-wide set of anchor directions, so that a code value means the
//! same direction under every parent. [`quantize_hkmeans_local`] builds the same tree but keeps
//! arbitrary per-parent cluster numbers, and [`quantize_rq_kmeans`] is a residual k-means
//! baseline with global per-level codebooks.

pub mod anchors;
pub mod codebook;
pub mod hungarian;
pub mod kmeans;
mod quantize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anchors::{cosine, ortho_anchors, AnchorSet};
pub use codebook::{CodeBook, LevelInfo, SidTable, TreeNode};
pub use hungarian::{hungarian, Assignment};
pub use kmeans::{balanced_kmeans, kmeans, Clustering, Points};
pub use quantize::{
    align_to_anchors, default_branching, gaoq_level, partition_children, quantize, quantize_gaoq,
    quantize_hkmeans_local, quantize_rq_kmeans, rq_reconstruction_error, Child, Quantization,
};

#[derive(Debug, Error)]
pub enum QuantizeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("cannot form {clusters} clusters from {points} points")]
    TooFewPoints { points: usize, clusters: usize },
    #[error("invalid quantizer config: {0}")]
    Config(String),
    #[error(
        "prefix {prefix:?} holds {population} items but the last level has only {capacity} codes; \
         duplicate embeddings among items {items:?}"
    )]
    Capacity {
        prefix: Vec<usize>,
        population: usize,
        capacity: usize,
        items: Vec<String>,
    },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "gaoq")]
    Gaoq,
    #[serde(rename = "hkmeans-local")]
    HkmeansLocal,
    #[serde(rename = "rq-kmeans")]
    RqKmeans,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gaoq => "gaoq",
            Method::HkmeansLocal => "hkmeans-local",
            Method::RqKmeans => "rq-kmeans",
        })
    }
}

impl FromStr for Method {
    type Err = QuantizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaoq" => Ok(Method::Gaoq),
            "hkmeans" | "hkmeans-local" => Ok(Method::HkmeansLocal),
            "rqkmeans" | "rq-kmeans" => Ok(Method::RqKmeans),
            other => Err(QuantizeError::Config(format!(
                "unknown method '{other}' (expected gaoq, hkmeans or rqkmeans)"
            ))),
        }
    }
}

pub const DEFAULT_KMEANS_ITERS: usize = 50;

/// Quantizer settings. `branching` lists `b_1..b_{L-1}`; the last level is sized automatically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub method: Method,
    pub branching: Vec<usize>,
    /// Anchor counts `g_2..g_{L-1}` for the aligned levels below the root. `None` means
    /// `g_l = b_l`.
    pub anchors: Option<Vec<usize>>,
    /// Fixed last-level alphabet. `None` sizes it to the largest prefix population.
    pub last_level_anchors: Option<usize>,
    pub iters: usize,
    pub seed: u64,
}

impl QuantizerConfig {
    pub fn new(method: Method, branching: Vec<usize>, seed: u64) -> Self {
        Self {
            method,
            branching,
            anchors: None,
            last_level_anchors: None,
            iters: DEFAULT_KMEANS_ITERS,
            seed,
        }
    }

    /// Anchor count for 0-based level index `l >= 1` among the branching levels.
    pub fn anchors_at(&self, l: usize) -> usize {
        match &self.anchors {
            Some(g) => g[l - 1],
            None => self.branching[l],
        }
    }

    pub fn validate(&self) -> Result<(), QuantizeError> {
        if self.branching.is_empty() {
            return Err(QuantizeError::Config(
                "at least one branching factor is required".into(),
            ));
        }
        if let Some(b) = self.branching.iter().find(|&&b| b < 2) {
            return Err(QuantizeError::Config(format!("branching factor {b} is below 2")));
        }
        if self.iters == 0 {
            return Err(QuantizeError::Config("k-means iterations must be at least 1".into()));
        }
        if let Some(g) = &self.anchors {
            if g.len() + 1 != self.branching.len() {
                return Err(QuantizeError::Config(format!(
                    "{} anchor counts given for {} aligned levels",
                    g.len(),
                    self.branching.len() - 1
                )));
            }
            for (i, (&gl, &bl)) in g.iter().zip(&self.branching[1..]).enumerate() {
                if gl < bl {
                    return Err(QuantizeError::Config(format!(
                        "level {}: {gl} anchors cannot index {bl} children",
                        i + 2
                    )));
                }
            }
        }
        if self.last_level_anchors == Some(0) {
            return Err(QuantizeError::Config("last-level anchor count must be positive".into()));
        }
        Ok(())
    }
}
