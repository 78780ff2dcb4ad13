//! Tables, texts and their flattened forms.
//!
//! All tokens are lowercased and whitespace-split. A [`Table`] is an ordered
//! list of attribute/value [`Record`]s; [`linearize`] flattens it into one
//! token per value word, each carrying its attribute and its 1-based offsets
//! from both ends of the value.

mod io;
mod split;
mod vocab;

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_infobox, load_parallel, load_unlabeled, parse_infobox_line, parse_parallel_line,
    read_token_lines, write_parallel, write_token_lines, InputFormat,
};
pub use split::split_dataset;
pub use vocab::{Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

/// Lowercases and splits on whitespace.
pub fn tokenize(raw: &str) -> TextSequence {
    TextSequence(raw.split_whitespace().map(str::to_lowercase).collect())
}

/// Lowercased attribute name; inner whitespace becomes `_`.
pub fn normalize_attribute(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// Ordered token list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TextSequence(pub Vec<String>);

impl TextSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        TextSequence(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    /// Space-joined form.
    pub fn joined(&self) -> String {
        self.0.join(" ")
    }
}

impl Deref for TextSequence {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for TextSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.joined())
    }
}

impl<S: Into<String>> FromIterator<S> for TextSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TextSequence(iter.into_iter().map(Into::into).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Record {
    pub attribute: String,
    pub value: Vec<String>,
}

impl Record {
    /// Rejects an empty attribute or an empty value.
    pub fn new(attribute: impl Into<String>, value: Vec<String>) -> Result<Self> {
        let attribute = attribute.into();
        if attribute.is_empty() {
            return Err(Error::EmptyInput("record attribute"));
        }
        if value.is_empty() {
            return Err(Error::EmptyInput("record value"));
        }
        Ok(Record { attribute, value })
    }

    /// Builds from raw strings through the tokenizer.
    pub fn from_raw(attribute: &str, value: &str) -> Result<Self> {
        Record::new(normalize_attribute(attribute), tokenize(value).0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Table {
    records: Vec<Record>,
}

impl Table {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("table"));
        }
        Ok(Table { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Total number of value tokens.
    pub fn token_count(&self) -> usize {
        self.records.iter().map(|r| r.value.len()).sum()
    }

    pub fn get(&self, attribute: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.attribute == attribute)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelSample {
    pub id: String,
    pub table: Table,
    pub text: TextSequence,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnlabeledSample {
    pub id: String,
    pub text: TextSequence,
}

impl ParallelSample {
    /// Drops the table, keeping the text as an unlabeled sample.
    pub fn into_unlabeled(self) -> UnlabeledSample {
        UnlabeledSample {
            id: self.id,
            text: self.text,
        }
    }
}

/// One value word with its attribute and position tuple.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinearizedToken {
    pub word: String,
    pub attribute: String,
    /// 1-based offset from the start of the value.
    pub pos_fwd: usize,
    /// 1-based offset from the end of the value.
    pub pos_bwd: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinearizedTable {
    pub tokens: Vec<LinearizedToken>,
}

impl LinearizedTable {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.word.as_str())
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.attribute.as_str())
    }
}

/// Flattens a table in record order.
pub fn linearize(table: &Table) -> LinearizedTable {
    let mut tokens = Vec::with_capacity(table.token_count());
    for record in table.records() {
        let n = record.value.len();
        for (i, word) in record.value.iter().enumerate() {
            tokens.push(LinearizedToken {
                word: word.clone(),
                attribute: record.attribute.clone(),
                pos_fwd: i + 1,
                pos_bwd: n - i,
            });
        }
    }
    LinearizedTable { tokens }
}
