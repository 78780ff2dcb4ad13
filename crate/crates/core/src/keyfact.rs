//! Automatic key-fact labels from table/text co-occurrence.
//!
//! An attribute is selected when at least one word of its value also appears
//! in the text and is neither a stop word nor punctuation. Every token of a
//! selected attribute is labeled 1.

use std::collections::{BTreeSet, HashSet};
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{linearize, LinearizedTable, ParallelSample};
use crate::error::{Error, Result};

const ENGLISH: &str = include_str!("../data/stopwords_en.txt");

/// Stop-word set plus the punctuation rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StopWords {
    words: BTreeSet<String>,
}

impl StopWords {
    /// The bundled English list.
    pub fn english() -> Self {
        Self::parse(ENGLISH)
    }

    /// One word per line; `#` starts a comment line.
    pub fn parse(contents: &str) -> Self {
        let words = contents
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        StopWords { words }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&contents))
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        StopWords {
            words: words.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Listed and not numeric. Numbers are never stop words.
    pub fn is_stop(&self, word: &str) -> bool {
        !is_numeric(word) && self.words.contains(word)
    }

    /// True when `word` may count as an overlap.
    pub fn is_content(&self, word: &str) -> bool {
        !is_punctuation(word) && !self.is_stop(word)
    }
}

impl Default for StopWords {
    fn default() -> Self {
        Self::english()
    }
}

/// A token made only of non-alphanumeric characters.
pub fn is_punctuation(word: &str) -> bool {
    !word.is_empty() && !word.chars().any(char::is_alphanumeric)
}

fn is_numeric(word: &str) -> bool {
    word.chars().any(|c| c.is_ascii_digit())
        && word.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | '-' | '/'))
}

/// 0/1 labels aligned with a linearized table.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyFactLabels(pub Vec<u8>);

impl KeyFactLabels {
    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&l| l == 1).count()
    }
}

impl Deref for KeyFactLabels {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl From<Vec<u8>> for KeyFactLabels {
    fn from(v: Vec<u8>) -> Self {
        KeyFactLabels(v)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnotationMode {
    /// Select attributes first, then label all their tokens.
    #[default]
    TwoPass,
    /// Literal per-token loop: a token is labeled only if its attribute was
    /// already selected when the loop reached it.
    SinglePass,
}

pub fn annotate(table: &LinearizedTable, text: &[String], stops: &StopWords) -> KeyFactLabels {
    annotate_with(table, text, stops, AnnotationMode::TwoPass)
}

pub fn annotate_with(
    table: &LinearizedTable,
    text: &[String],
    stops: &StopWords,
    mode: AnnotationMode,
) -> KeyFactLabels {
    let in_text: HashSet<&str> = text.iter().map(String::as_str).collect();
    let hit = |w: &str| in_text.contains(w) && stops.is_content(w);
    match mode {
        AnnotationMode::TwoPass => {
            let selected: HashSet<&str> = table
                .tokens
                .iter()
                .filter(|t| hit(&t.word))
                .map(|t| t.attribute.as_str())
                .collect();
            table
                .tokens
                .iter()
                .map(|t| u8::from(selected.contains(t.attribute.as_str())))
                .collect::<Vec<_>>()
                .into()
        }
        AnnotationMode::SinglePass => {
            let mut selected: HashSet<&str> = HashSet::new();
            let mut labels = Vec::with_capacity(table.len());
            for t in &table.tokens {
                if hit(&t.word) {
                    selected.insert(&t.attribute);
                }
                labels.push(u8::from(selected.contains(t.attribute.as_str())));
            }
            labels.into()
        }
    }
}

/// Words whose label is 1, in table order.
pub fn extract(table: &LinearizedTable, labels: &[u8]) -> Result<Vec<String>> {
    if labels.len() != table.len() {
        return Err(Error::LengthMismatch {
            what: "key-fact labels",
            expected: table.len(),
            actual: labels.len(),
        });
    }
    Ok(table
        .tokens
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(t, _)| t.word.clone())
        .collect())
}

/// Key facts ordered by first appearance in `text`; facts that never appear
/// keep their table order after the ones that do.
pub fn extract_text_order(table: &LinearizedTable, labels: &[u8], text: &[String]) -> Result<Vec<String>> {
    let facts = extract(table, labels)?;
    let first = |w: &String| text.iter().position(|t| t == w).unwrap_or(usize::MAX);
    let mut order: Vec<usize> = (0..facts.len()).collect();
    order.sort_by_key(|&i| (first(&facts[i]), i));
    Ok(order.into_iter().map(|i| facts[i].clone()).collect())
}

/// A parallel sample with its linearization and labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotatedSample {
    pub id: String,
    pub table: LinearizedTable,
    pub text: Vec<String>,
    pub labels: KeyFactLabels,
}

impl AnnotatedSample {
    pub fn key_facts(&self) -> Vec<String> {
        extract(&self.table, &self.labels).expect("labels built for this table")
    }
}

pub fn annotate_sample(sample: &ParallelSample, stops: &StopWords, mode: AnnotationMode) -> AnnotatedSample {
    let table = linearize(&sample.table);
    let labels = annotate_with(&table, &sample.text, stops, mode);
    AnnotatedSample {
        id: sample.id.clone(),
        table,
        text: sample.text.0.clone(),
        labels,
    }
}

pub fn annotate_dataset(samples: &[ParallelSample], stops: &StopWords, mode: AnnotationMode) -> Vec<AnnotatedSample> {
    samples.iter().map(|s| annotate_sample(s, stops, mode)).collect()
}

/// Dataset-level selection statistics. Overlap is counted both ways since
/// the two are not the same thing: table tokens that occur in the text, and
/// text tokens that occur in the table.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CoverageStats {
    pub samples: usize,
    pub mean_selected_tokens: f64,
    pub mean_selected_attributes: f64,
    pub zero_fact_fraction: f64,
    pub mean_table_overlap: f64,
    pub mean_text_overlap: f64,
}

pub fn coverage_stats(dataset: &[AnnotatedSample], stops: &StopWords) -> CoverageStats {
    if dataset.is_empty() {
        return CoverageStats::default();
    }
    let (mut tokens, mut attrs, mut zero, mut table_ov, mut text_ov) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for s in dataset {
        let ones = s.labels.ones();
        tokens += ones;
        zero += usize::from(ones == 0);
        let selected: HashSet<&str> = s
            .table
            .tokens
            .iter()
            .zip(s.labels.iter())
            .filter(|(_, &l)| l == 1)
            .map(|(t, _)| t.attribute.as_str())
            .collect();
        attrs += selected.len();
        let text: HashSet<&str> = s.text.iter().map(String::as_str).collect();
        let words: HashSet<&str> = s.table.words().collect();
        table_ov += s.table.words().filter(|w| text.contains(w) && stops.is_content(w)).count();
        text_ov += s.text.iter().filter(|w| words.contains(w.as_str()) && stops.is_content(w)).count();
    }
    let n = dataset.len() as f64;
    CoverageStats {
        samples: dataset.len(),
        mean_selected_tokens: tokens as f64 / n,
        mean_selected_attributes: attrs as f64 / n,
        zero_fact_fraction: zero as f64 / n,
        mean_table_overlap: table_ov as f64 / n,
        mean_text_overlap: text_ov as f64 / n,
    }
}
