use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

/// Reserved symbols in index order.
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Token/index bijection with four reserved symbols at indices 0..4.
///
/// Non-reserved tokens are ordered by descending corpus frequency, ties
/// broken lexicographically.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Eq for Vocabulary {}

impl From<Vec<String>> for Vocabulary {
    /// Takes the non-reserved tokens in order; reserved names are skipped.
    fn from(tokens: Vec<String>) -> Self {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for t in tokens {
            if !RESERVED.contains(&t.as_str()) && !all.contains(&t) {
                all.push(t);
            }
        }
        let index = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens: all, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens.into_iter().skip(RESERVED.len()).collect()
    }
}

impl Vocabulary {
    /// Keeps the `cap` most frequent tokens. `cap` must be at least 1.
    pub fn build<'a, I, S>(sequences: I, cap: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = &'a str>,
    {
        assert!(cap >= 1, "vocabulary cap must be at least 1");
        let mut counts: HashMap<&'a str, usize> = HashMap::new();
        for seq in sequences {
            for tok in seq {
                if !RESERVED.contains(&tok) {
                    *counts.entry(tok).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(cap);
        Vocabulary::from(ranked.into_iter().map(|(t, _)| t.to_string()).collect::<Vec<_>>())
    }

    /// Index of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Panics if `id` is out of range.
    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Size including the reserved symbols.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED.len()
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// One non-reserved token per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = String::new();
        for t in &self.tokens[RESERVED.len()..] {
            buf.push_str(t);
            buf.push('\n');
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Vocabulary::from(
            content
                .lines()
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect::<Vec<_>>(),
        ))
    }
}
