use std::fs;
use std::path::Path;

use super::{DataError, ItemTable};

/// Default window length: history plus target.
pub const DEFAULT_MAX_LEN: usize = 32;

/// One training or evaluation example: up to `max_len - 1` history items followed by a target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub history: Vec<usize>,
    pub target: usize,
}

impl Window {
    pub fn new(history: Vec<usize>, target: usize) -> Self {
        Self { history, target }
    }

    /// Number of tokens the encoder sees (history + target).
    pub fn len(&self) -> usize {
        self.history.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// How windows are cut from a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowPolicy {
    /// Every position from the second onward is a target exactly once; history is the
    /// preceding items truncated to the last `max_len - 1`.
    #[default]
    Prefix,
    /// Only complete windows of exactly `max_len` items, sliding by `stride`; sequences
    /// shorter than `max_len` contribute one window covering the whole sequence.
    Full,
}

/// Chronologically ordered per-user interaction sequences.
#[derive(Debug, Clone)]
pub struct SequenceStore {
    users: Vec<String>,
    sequences: Vec<Vec<usize>>,
    pub max_len: usize,
}

/// Train / validation / test windows under leave-one-out.
#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train: Vec<Window>,
    pub valid: Vec<Window>,
    pub test: Vec<Window>,
}

impl SequenceStore {
    pub fn new(users: Vec<String>, sequences: Vec<Vec<usize>>, num_items: usize) -> Result<Self, DataError> {
        if users.len() != sequences.len() {
            return Err(DataError::Schema(format!(
                "{} users but {} sequences",
                users.len(),
                sequences.len()
            )));
        }
        for (u, seq) in users.iter().zip(&sequences) {
            if seq.is_empty() {
                return Err(DataError::EmptySequence {
                    user: u.clone(),
                    line: 0,
                });
            }
            if let Some(&bad) = seq.iter().find(|&&i| i >= num_items) {
                return Err(DataError::Schema(format!(
                    "user '{u}' references item index {bad} >= {num_items}"
                )));
            }
        }
        Ok(Self {
            users,
            sequences,
            max_len: DEFAULT_MAX_LEN,
        })
    }

    /// Loads `user<TAB>item item item` lines, resolving item tokens against `items`.
    pub fn load(path: impl AsRef<Path>, items: &ItemTable) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::parse(&text, items)
    }

    pub fn parse(text: &str, items: &ItemTable) -> Result<Self, DataError> {
        let mut users = Vec::new();
        let mut sequences = Vec::new();
        for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
            if line.trim().is_empty() {
                continue;
            }
            let (user, rest) = line.split_once('\t').ok_or_else(|| DataError::Malformed {
                line: lineno,
                reason: "expected 'user<TAB>items'".into(),
            })?;
            let mut seq = Vec::new();
            for token in rest.split_whitespace() {
                let idx = items.item_index(token).ok_or_else(|| DataError::UnknownItem {
                    line: lineno,
                    token: token.to_owned(),
                })?;
                seq.push(idx);
            }
            if seq.is_empty() {
                return Err(DataError::EmptySequence {
                    user: user.to_owned(),
                    line: lineno,
                });
            }
            users.push(user.to_owned());
            sequences.push(seq);
        }
        if sequences.is_empty() {
            return Err(DataError::NoSequences);
        }
        Ok(Self {
            users,
            sequences,
            max_len: DEFAULT_MAX_LEN,
        })
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn sequences(&self) -> &[Vec<usize>] {
        &self.sequences
    }

    /// Cuts every sequence into windows under `policy`.
    pub fn windows(&self, policy: WindowPolicy, stride: usize) -> Vec<Window> {
        self.sequences
            .iter()
            .flat_map(|s| windows_of(s, self.max_len, policy, stride))
            .collect()
    }

    /// Leave-one-out split: for sequences of length >= 4 the last target is test, the
    /// second-to-last is validation and all earlier targets are training windows. Shorter
    /// sequences go entirely to training.
    pub fn leave_one_out(&self) -> Split {
        let mut split = Split::default();
        for seq in &self.sequences {
            let t = seq.len();
            let mut ws = windows_of(seq, self.max_len, WindowPolicy::Prefix, 1);
            if t >= 4 {
                split.test.push(ws.pop().expect("t >= 4"));
                split.valid.push(ws.pop().expect("t >= 4"));
            }
            split.train.extend(ws);
        }
        split
    }
}

/// Windows of a single sequence. A window always has at least one history item, so a
/// length-1 sequence yields nothing.
pub fn windows_of(seq: &[usize], max_len: usize, policy: WindowPolicy, stride: usize) -> Vec<Window> {
    assert!(max_len >= 2, "max_len must leave room for history and target");
    let stride = stride.max(1);
    let t = seq.len();
    if t < 2 {
        return Vec::new();
    }
    let cut = |end: usize| {
        // `end` is exclusive; the target is seq[end - 1].
        let start = end.saturating_sub(max_len);
        Window::new(seq[start..end - 1].to_vec(), seq[end - 1])
    };
    match policy {
        WindowPolicy::Prefix => (2..=t).step_by(stride).map(cut).collect(),
        WindowPolicy::Full => {
            if t <= max_len {
                vec![cut(t)]
            } else {
                (max_len..=t).step_by(stride).map(cut).collect()
            }
        }
    }
}
