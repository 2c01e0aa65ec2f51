use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Ordered field identifiers plus the vocabulary size of each field.
///
/// Field 0 is always the item-ID field, so `vocab_sizes[0]` equals the item count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub field_names: Vec<String>,
    pub vocab_sizes: Vec<usize>,
}

impl FieldSchema {
    pub fn num_fields(&self) -> usize {
        self.field_names.len()
    }

    pub fn num_items(&self) -> usize {
        self.vocab_sizes[0]
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.field_names.is_empty() {
            return Err(DataError::Schema("schema needs at least one field".into()));
        }
        if self.field_names.len() != self.vocab_sizes.len() {
            return Err(DataError::Schema(format!(
                "{} field names but {} vocabulary sizes",
                self.field_names.len(),
                self.vocab_sizes.len()
            )));
        }
        if let Some(k) = self.vocab_sizes.iter().position(|&v| v == 0) {
            return Err(DataError::Schema(format!(
                "field '{}' has an empty vocabulary",
                self.field_names[k]
            )));
        }
        Ok(())
    }
}

/// Per-field token dictionary, frozen in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    /// Returns the index of `token`, interning it if unseen.
    pub fn intern(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), i);
        i
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Items as integer field-value vectors. Row `i` is the item whose ID token interned to `i`,
/// so the item-ID column is the identity map onto `[0, N)`.
#[derive(Debug, Clone)]
pub struct ItemTable {
    field_names: Vec<String>,
    vocabs: Vec<Vocabulary>,
    /// Row-major `N x J`.
    values: Vec<usize>,
}

impl ItemTable {
    /// Builds a table from already-interned rows. Used by synthetic generators and tests.
    pub fn from_rows(field_names: Vec<String>, vocab_sizes: &[usize], rows: &[Vec<usize>]) -> Result<Self, DataError> {
        let j = field_names.len();
        let schema = FieldSchema {
            field_names: field_names.clone(),
            vocab_sizes: vocab_sizes.to_vec(),
        };
        schema.validate()?;
        if rows.is_empty() {
            return Err(DataError::NoItems);
        }
        if vocab_sizes[0] != rows.len() {
            return Err(DataError::Schema(format!(
                "item-ID vocabulary has {} entries but table has {} rows",
                vocab_sizes[0],
                rows.len()
            )));
        }
        let mut values = Vec::with_capacity(rows.len() * j);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != j {
                return Err(DataError::Schema(format!(
                    "row {i} has {} fields, expected {j}",
                    row.len()
                )));
            }
            if row[0] != i {
                return Err(DataError::Schema(format!(
                    "row {i} has item id {}, expected {i}",
                    row[0]
                )));
            }
            for (k, &v) in row.iter().enumerate() {
                if v >= vocab_sizes[k] {
                    return Err(DataError::FieldOutOfRange {
                        item: i,
                        field: k,
                        value: v,
                        vocab: vocab_sizes[k],
                    });
                }
            }
            values.extend_from_slice(row);
        }
        let vocabs = vocab_sizes
            .iter()
            .zip(&field_names)
            .map(|(&n, name)| Vocabulary::from_tokens((0..n).map(|v| format!("{name}_{v}")).collect()))
            .collect();
        Ok(Self {
            field_names,
            vocabs,
            values,
        })
    }

    /// Loads a tab-separated item file: one item per line, `J` columns of tokens, item ID first.
    ///
    /// Tokens are interned per field in first-seen order. Blank lines are skipped.
    pub fn load(path: impl AsRef<Path>, field_names: &[String]) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::parse(&text, field_names)
    }

    pub fn parse(text: &str, field_names: &[String]) -> Result<Self, DataError> {
        let mut names = field_names.to_vec();
        let mut vocabs: Vec<Vocabulary> = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if names.is_empty() {
                names = (0..cols.len()).map(|k| format!("field{k}")).collect();
            }
            if vocabs.is_empty() {
                vocabs = vec![Vocabulary::default(); names.len()];
            }
            if cols.len() != names.len() {
                return Err(DataError::Malformed {
                    line: lineno,
                    reason: format!("expected {} columns, found {}", names.len(), cols.len()),
                });
            }
            if let Some(k) = cols.iter().position(|c| c.trim().is_empty()) {
                return Err(DataError::Malformed {
                    line: lineno,
                    reason: format!("missing value for field '{}'", names[k]),
                });
            }
            let id = cols[0].trim();
            if vocabs[0].get(id).is_some() {
                return Err(DataError::DuplicateItem {
                    line: lineno,
                    token: id.to_owned(),
                });
            }
            for (vocab, col) in vocabs.iter_mut().zip(&cols) {
                values.push(vocab.intern(col.trim()));
            }
        }
        if values.is_empty() {
            return Err(DataError::NoItems);
        }
        Ok(Self {
            field_names: names,
            vocabs,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.num_fields()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_fields(&self) -> usize {
        self.field_names.len()
    }

    pub fn schema(&self) -> FieldSchema {
        FieldSchema {
            field_names: self.field_names.clone(),
            vocab_sizes: self.vocabs.iter().map(Vocabulary::len).collect(),
        }
    }

    /// Field values of item `item`, length `J`.
    pub fn row(&self, item: usize) -> &[usize] {
        let j = self.num_fields();
        &self.values[item * j..(item + 1) * j]
    }

    pub fn vocab(&self, field: usize) -> &Vocabulary {
        &self.vocabs[field]
    }

    pub fn item_token(&self, item: usize) -> &str {
        self.vocabs[0].token(item)
    }

    pub fn item_index(&self, token: &str) -> Option<usize> {
        self.vocabs[0].get(token)
    }

    pub fn item_tokens(&self) -> &[String] {
        self.vocabs[0].tokens()
    }
}
