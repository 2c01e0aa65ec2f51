use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::anchors::AnchorSet;
use super::{Method, QuantizeError};

/// A node of the quantization tree. The root has level 0 and no parent; a node at level `l`
/// carries the level-`l` code shared by its members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub level: usize,
    pub parent: Option<usize>,
    pub centroid: Vec<f64>,
    pub code: usize,
    #[serde(skip)]
    pub members: Vec<usize>,
    pub size: usize,
}

/// Per-level metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelInfo {
    /// 1-based level.
    pub level: usize,
    /// Requested children per parent (`None` for the auto-sized last level).
    pub branching: Option<usize>,
    /// Number of distinct code values the level may use.
    pub alphabet_size: usize,
    /// Shared anchors (aligned GAOQ levels only).
    pub anchors: Option<AnchorSet>,
    /// Global centroids (RQ-KMeans levels only).
    pub centroids: Option<Vec<Vec<f64>>>,
}

/// Everything needed to interpret a [`SidTable`]: levels, anchors and the cluster tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeBook {
    pub method: Method,
    pub dim: usize,
    pub levels: Vec<LevelInfo>,
    /// Tree nodes for levels `0..L-1`; leaves are implicit in the SID table.
    pub nodes: Vec<TreeNode>,
}

impl CodeBook {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("codebook serializes")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), QuantizeError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| QuantizeError::Io(path.display().to_string(), e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self, QuantizeError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| QuantizeError::Io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| QuantizeError::Format(format!("{}: {e}", path.display())))
    }
}

/// Per-item code tuples `(c_1, ..., c_L)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SidTable {
    pub tokens: Vec<String>,
    pub codes: Vec<Vec<usize>>,
    pub alphabet_sizes: Vec<usize>,
}

impl SidTable {
    pub fn new(tokens: Vec<String>, codes: Vec<Vec<usize>>, alphabet_sizes: Vec<usize>) -> Result<Self, QuantizeError> {
        if tokens.len() != codes.len() {
            return Err(QuantizeError::InvalidInput(format!(
                "{} tokens for {} code tuples",
                tokens.len(),
                codes.len()
            )));
        }
        let levels = alphabet_sizes.len();
        for (t, c) in tokens.iter().zip(&codes) {
            if c.len() != levels {
                return Err(QuantizeError::InvalidInput(format!(
                    "item '{t}' has {} codes, expected {levels}",
                    c.len()
                )));
            }
            if let Some(l) = (0..levels).find(|&l| c[l] >= alphabet_sizes[l]) {
                return Err(QuantizeError::InvalidInput(format!(
                    "item '{t}' code {} at level {} exceeds alphabet {}",
                    c[l],
                    l + 1,
                    alphabet_sizes[l]
                )));
            }
        }
        Ok(Self {
            tokens,
            codes,
            alphabet_sizes,
        })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn num_levels(&self) -> usize {
        self.alphabet_sizes.len()
    }

    /// Level-`level` codes (0-based level) of all items.
    pub fn column(&self, level: usize) -> Vec<usize> {
        self.codes.iter().map(|c| c[level]).collect()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    /// Whether all code tuples are pairwise distinct.
    pub fn all_unique(&self) -> bool {
        let mut sorted: Vec<&Vec<usize>> = self.codes.iter().collect();
        sorted.sort();
        sorted.windows(2).all(|w| w[0] != w[1])
    }

    /// `token<TAB>c1,c2,...` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (t, c) in self.tokens.iter().zip(&self.codes) {
            let codes: Vec<String> = c.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{t}\t{}", codes.join(","));
        }
        out
    }

    /// Parses [`SidTable::to_tsv`] output. Alphabet sizes are inferred as `max code + 1`.
    pub fn from_tsv(text: &str) -> Result<Self, QuantizeError> {
        let mut tokens = Vec::new();
        let mut codes: Vec<Vec<usize>> = Vec::new();
        for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
            if line.trim().is_empty() {
                continue;
            }
            let (tok, rest) = line
                .split_once('\t')
                .ok_or_else(|| QuantizeError::Format(format!("line {lineno}: expected 'token<TAB>codes'")))?;
            let c: Vec<usize> = rest
                .trim()
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| QuantizeError::Format(format!("line {lineno}: {e}")))?;
            if let Some(first) = codes.first() {
                if first.len() != c.len() {
                    return Err(QuantizeError::Format(format!(
                        "line {lineno}: {} codes, expected {}",
                        c.len(),
                        first.len()
                    )));
                }
            }
            tokens.push(tok.to_owned());
            codes.push(c);
        }
        if codes.is_empty() {
            return Err(QuantizeError::Format("empty SID table".into()));
        }
        let levels = codes[0].len();
        let alphabet = (0..levels)
            .map(|l| codes.iter().map(|c| c[l]).max().unwrap_or(0) + 1)
            .collect();
        Self::new(tokens, codes, alphabet)
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<(), QuantizeError> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| QuantizeError::Io(path.display().to_string(), e))
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self, QuantizeError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| QuantizeError::Io(path.display().to_string(), e))?;
        Self::from_tsv(&text).map_err(|e| match e {
            QuantizeError::Format(m) => QuantizeError::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_round_trip() {
        let t = SidTable::new(
            vec!["a".into(), "b".into()],
            vec![vec![0, 2, 1], vec![1, 0, 0]],
            vec![2, 3, 2],
        )
        .unwrap();
        let text = t.to_tsv();
        assert_eq!(text, "a\t0,2,1\nb\t1,0,0\n");
        assert_eq!(SidTable::from_tsv(&text).unwrap(), t);
        assert!(t.all_unique());
    }

    #[test]
    fn rejects_out_of_alphabet() {
        assert!(SidTable::new(vec!["a".into()], vec![vec![3]], vec![3]).is_err());
        assert!(SidTable::from_tsv("a\t1,x\n").is_err());
        assert!(SidTable::from_tsv("a\t1,2\nb\t1\n").is_err());
    }
}
