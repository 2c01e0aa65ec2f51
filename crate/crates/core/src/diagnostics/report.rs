use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::ambiguity::{intra_code_cosine, sid_overlap, SidCorpus};
use super::entropy::entropy_report;
use super::DiagnosticsError;
use crate::data::EmbeddingMatrix;
use crate::gaoq::SidTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub alphabet_size: usize,
    #[serde(rename = "H_marginal")]
    pub h_marginal: f64,
    #[serde(rename = "H_prefix_cond")]
    pub h_prefix_cond: f64,
    /// Absent without embeddings, or when no code has two members.
    pub intra_cosine: Option<f64>,
    /// Absent without a pair corpus.
    pub overlap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    /// "nats" or "bits".
    pub units: String,
    pub levels: Vec<LevelReport>,
    pub joint_entropy: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
    pub overlap_overall: Option<f64>,
    /// How overlap is normalized: per level, target code against the history's codes at the
    /// same level.
    pub overlap_definition: String,
    /// Distinct earlier-code prefixes per level.
    pub prefixes_observed: Vec<usize>,
}

pub fn diagnose(
    sids: &SidTable,
    emb: Option<&EmbeddingMatrix>,
    corpus: Option<&SidCorpus>,
    bits: bool,
) -> Result<DiagnosticReport, DiagnosticsError> {
    let entropy = entropy_report(sids)?;
    let scale = if bits { 1.0 / LN_2 } else { 1.0 };
    let overlap = corpus.map(sid_overlap).transpose()?;
    let levels = entropy
        .levels
        .iter()
        .map(|le| {
            let intra = emb.map(|e| intra_code_cosine(sids, e, le.level)).transpose()?;
            Ok(LevelReport {
                level: le.level + 1,
                alphabet_size: le.alphabet_size,
                h_marginal: le.marginal * scale,
                h_prefix_cond: le.prefix_conditional * scale,
                intra_cosine: intra.filter(|c| !c.is_nan()),
                overlap: overlap.as_ref().map(|o| o.per_level[le.level]),
            })
        })
        .collect::<Result<_, DiagnosticsError>>()?;
    Ok(DiagnosticReport {
        units: if bits { "bits" } else { "nats" }.into(),
        levels,
        joint_entropy: entropy.joint * scale,
        pairs_used: overlap.as_ref().map_or(0, |o| o.pairs_used),
        pairs_skipped: overlap.as_ref().map_or(0, |o| o.pairs_skipped),
        overlap_overall: overlap.as_ref().map(|o| o.overall),
        overlap_definition: "per-level: target code found among history codes at the same level".into(),
        prefixes_observed: entropy.levels.iter().map(|l| l.prefixes_observed).collect(),
    })
}
