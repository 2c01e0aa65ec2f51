use std::collections::HashMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{check_level, DiagnosticsError};
use crate::data::{EmbeddingMatrix, Window};
use crate::gaoq::SidTable;

/// Mean pairwise cosine between raw embeddings of items sharing a level-`level` code, averaged
/// without weights over codes with at least two members. NaN (with a warning) when no code has
/// two members. Embedding rows are matched to code rows by item token.
pub fn intra_code_cosine(sids: &SidTable, emb: &EmbeddingMatrix, level: usize) -> Result<f64, DiagnosticsError> {
    if sids.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    check_level(sids.num_levels(), level)?;
    let rows: HashMap<&str, usize> = emb
        .row_tokens()
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let d = emb.dim();
    let mut sums = vec![vec![0.0f64; d]; sids.alphabet_sizes[level]];
    let mut norms = vec![0.0f64; sums.len()];
    let mut members = vec![0usize; sums.len()];
    for (token, codes) in sids.tokens.iter().zip(&sids.codes) {
        let row = *rows
            .get(token.as_str())
            .ok_or_else(|| DiagnosticsError::Mismatch(format!("item '{token}' has no embedding row")))?;
        let x = emb.row(row);
        let norm = x.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        let c = codes[level];
        members[c] += 1;
        if norm > 0.0 {
            for (s, &v) in sums[c].iter_mut().zip(x) {
                *s += f64::from(v) / norm;
            }
            norms[c] += 1.0;
        }
    }
    // sum_{i != j} u_i . u_j = |sum u|^2 - sum |u|^2, with zero vectors contributing nothing.
    let means: Vec<f64> = (0..sums.len())
        .filter(|&c| members[c] >= 2)
        .map(|c| {
            let m = members[c] as f64;
            let total = sums[c].iter().map(|s| s * s).sum::<f64>();
            ((total - norms[c]) / (m * (m - 1.0))).clamp(-1.0, 1.0)
        })
        .collect();
    if means.is_empty() {
        warn!(
            "no level-{} code has two members; intra-code cosine undefined",
            level + 1
        );
        return Ok(f64::NAN);
    }
    Ok(means.iter().sum::<f64>() / means.len() as f64)
}

/// A target code tuple with the code tuples of its history items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidPair {
    pub history: Vec<Vec<usize>>,
    pub target: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidCorpus {
    pub pairs: Vec<SidPair>,
}

impl SidCorpus {
    /// Resolves windows over item indices through `item_tokens` (the item table's ID vocabulary).
    pub fn from_windows(windows: &[Window], item_tokens: &[String], sids: &SidTable) -> Result<Self, DiagnosticsError> {
        let lookup = token_lookup(sids);
        let codes = |item: usize| -> Result<Vec<usize>, DiagnosticsError> {
            let token = item_tokens
                .get(item)
                .ok_or_else(|| DiagnosticsError::Mismatch(format!("item index {item} has no token")))?;
            lookup
                .get(token.as_str())
                .map(|&r| sids.codes[r].clone())
                .ok_or_else(|| DiagnosticsError::Mismatch(format!("item '{token}' has no code")))
        };
        let pairs = windows
            .iter()
            .map(|w| {
                Ok(SidPair {
                    history: w.history.iter().map(|&i| codes(i)).collect::<Result<_, _>>()?,
                    target: codes(w.target)?,
                })
            })
            .collect::<Result<_, DiagnosticsError>>()?;
        Ok(Self { pairs })
    }

    /// Parses `target<TAB>history tokens separated by spaces` lines; the history may be empty.
    pub fn parse(text: &str, sids: &SidTable) -> Result<Self, DiagnosticsError> {
        let lookup = token_lookup(sids);
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (target, history) = line.split_once('\t').unwrap_or((line, ""));
            let resolve = |token: &str| {
                lookup
                    .get(token)
                    .map(|&r| sids.codes[r].clone())
                    .ok_or_else(|| DiagnosticsError::Corpus {
                        line: line_no,
                        reason: format!("unknown item '{token}'"),
                    })
            };
            pairs.push(SidPair {
                target: resolve(target.trim())?,
                history: history.split_whitespace().map(resolve).collect::<Result<_, _>>()?,
            });
        }
        Ok(Self { pairs })
    }

    pub fn load(path: impl AsRef<Path>, sids: &SidTable) -> Result<Self, DiagnosticsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| DiagnosticsError::Mismatch(format!("{}: {e}", path.display())))?;
        Self::parse(&text, sids)
    }
}

fn token_lookup(sids: &SidTable) -> HashMap<&str, usize> {
    sids.tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    /// Fraction of pairs whose target code at each level occurs among the history's codes at
    /// that level.
    pub per_level: Vec<f64>,
    /// Mean of `per_level`.
    pub overall: f64,
    pub pairs_used: usize,
    /// Pairs without history, excluded from the ratios.
    pub pairs_skipped: usize,
}

pub fn sid_overlap(corpus: &SidCorpus) -> Result<OverlapReport, DiagnosticsError> {
    let used: Vec<&SidPair> = corpus.pairs.iter().filter(|p| !p.history.is_empty()).collect();
    let skipped = corpus.pairs.len() - used.len();
    if skipped > 0 {
        warn!("{skipped} pairs without history skipped");
    }
    let Some(first) = used.first() else {
        return Err(DiagnosticsError::Empty);
    };
    let levels = first.target.len();
    let mut hits = vec![0usize; levels];
    for p in &used {
        if p.target.len() != levels || p.history.iter().any(|h| h.len() != levels) {
            return Err(DiagnosticsError::Mismatch("code tuples of differing lengths".into()));
        }
        for (l, hit) in hits.iter_mut().enumerate() {
            *hit += usize::from(p.history.iter().any(|h| h[l] == p.target[l]));
        }
    }
    let per_level: Vec<f64> = hits.iter().map(|&h| h as f64 / used.len() as f64).collect();
    let overall = if levels == 0 {
        0.0
    } else {
        per_level.iter().sum::<f64>() / levels as f64
    };
    Ok(OverlapReport {
        per_level,
        overall,
        pairs_used: used.len(),
        pairs_skipped: skipped,
    })
}
