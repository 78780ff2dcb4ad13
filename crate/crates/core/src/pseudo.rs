//! Pseudo-parallel pairs from unlabeled text: keep the content words of a
//! sentence (by POS tag) as the source, the sentence itself as the target.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::UnlabeledSample;
use crate::error::{Error, Result};

const LEXICON: &str = include_str!("../data/pos_lexicon.tsv");

/// Tags whose words are kept in the pseudo source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContentTagSet(BTreeSet<String>);

impl ContentTagSet {
    pub fn new<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ContentTagSet(tags.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.0.contains(tag)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl Default for ContentTagSet {
    /// Nouns, adjectives, cardinal numbers and foreign words.
    fn default() -> Self {
        ContentTagSet::new(["NN", "NNS", "NNP", "NNPS", "JJ", "JJR", "JJS", "CD", "FW"])
    }
}

/// Anything that maps a token sequence to one tag per token.
pub trait PosBackend: Send + Sync {
    fn tag(&self, tokens: &[String]) -> std::result::Result<Vec<String>, String>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PosTaggedText {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

/// Tags `tokens` and checks the backend honoured the contract.
pub fn pos_tag(id: &str, tokens: &[String], backend: &dyn PosBackend) -> Result<PosTaggedText> {
    let fail = |reason: String| Error::PosBackend {
        id: id.to_string(),
        reason,
    };
    if tokens.is_empty() {
        return Err(fail("empty text".into()));
    }
    let tags = backend.tag(tokens).map_err(fail)?;
    if tags.len() != tokens.len() {
        return Err(fail(format!("{} tags for {} tokens", tags.len(), tokens.len())));
    }
    if tags.iter().any(String::is_empty) {
        return Err(fail("empty tag".into()));
    }
    Ok(PosTaggedText {
        tokens: tokens.to_vec(),
        tags,
    })
}

pub fn filter_content(tagged: &PosTaggedText, tags: &ContentTagSet) -> Vec<String> {
    tagged
        .tokens
        .iter()
        .zip(&tagged.tags)
        .filter(|(_, t)| tags.contains(t))
        .map(|(w, _)| w.clone())
        .collect()
}

/// Context-free tagger: a word lexicon, then suffix rules for unknown words.
#[derive(Clone, Debug)]
pub struct LexiconTagger {
    lexicon: HashMap<String, String>,
}

impl LexiconTagger {
    /// The bundled lexicon.
    pub fn english() -> Self {
        Self::parse(LEXICON).expect("bundled lexicon is well formed")
    }

    /// `word<TAB>tag` lines; `#` comments; the first entry for a word wins.
    pub fn parse(contents: &str) -> std::result::Result<Self, String> {
        let mut lexicon = HashMap::new();
        for (i, line) in contents.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected word<TAB>tag", i + 1))?;
            lexicon.entry(word.to_lowercase()).or_insert_with(|| tag.trim().to_string());
        }
        Ok(LexiconTagger { lexicon })
    }

    /// Whether the word has a lexicon entry rather than a guessed tag.
    pub fn knows(&self, word: &str) -> bool {
        self.lexicon.contains_key(word)
    }

    pub fn tag_word(&self, word: &str) -> String {
        if let Some(t) = self.lexicon.get(word) {
            return t.clone();
        }
        suffix_tag(word).to_string()
    }
}

impl Default for LexiconTagger {
    fn default() -> Self {
        Self::english()
    }
}

impl PosBackend for LexiconTagger {
    fn tag(&self, tokens: &[String]) -> std::result::Result<Vec<String>, String> {
        Ok(tokens.iter().map(|w| self.tag_word(w)).collect())
    }
}

const ADJECTIVE_SUFFIXES: &[&str] = &["able", "ible", "ful", "ous", "ive", "ic", "al", "less", "ish", "ian", "ese"];

fn suffix_tag(word: &str) -> &'static str {
    if !word.chars().any(char::is_alphanumeric) {
        return match word {
            "(" | "[" | "{" => "-LRB-",
            ")" | "]" | "}" => "-RRB-",
            "." | "!" | "?" => ".",
            "," => ",",
            _ => ":",
        };
    }
    if word.chars().any(|c| c.is_ascii_digit())
        && word.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | '-' | '/'))
    {
        return "CD";
    }
    let long = word.chars().count() > 4;
    if long && word.ends_with("ly") {
        "RB"
    } else if long && word.ends_with("ing") {
        "VBG"
    } else if long && word.ends_with("ed") {
        "VBD"
    } else if long && ADJECTIVE_SUFFIXES.iter().any(|s| word.ends_with(s)) {
        "JJ"
    } else if word.len() > 3 && word.ends_with('s') && !["ss", "us", "is"].iter().any(|s| word.ends_with(s)) {
        "NNS"
    } else {
        "NN"
    }
}

/// Reads tags produced elsewhere: `token<TAB>tag` lines with a blank line
/// between sentences. Sentences are looked up by their exact token sequence.
#[derive(Clone, Debug, Default)]
pub struct PreTaggedBackend {
    sentences: HashMap<Vec<String>, Vec<String>>,
}

impl PreTaggedBackend {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut sentences = HashMap::new();
        let (mut toks, mut tags) = (Vec::new(), Vec::new());
        let mut flush = |toks: &mut Vec<String>, tags: &mut Vec<String>| {
            if !toks.is_empty() {
                sentences.insert(std::mem::take(toks), std::mem::take(tags));
            }
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                flush(&mut toks, &mut tags);
                continue;
            }
            let (w, t) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: "expected token<TAB>tag".into(),
            })?;
            toks.push(w.to_lowercase());
            tags.push(t.trim().to_string());
        }
        flush(&mut toks, &mut tags);
        Ok(PreTaggedBackend { sentences })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

impl PosBackend for PreTaggedBackend {
    fn tag(&self, tokens: &[String]) -> std::result::Result<Vec<String>, String> {
        self.sentences
            .get(tokens)
            .cloned()
            .ok_or_else(|| "sentence not found in the pre-tagged file".to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoPair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PseudoCorpus {
    pub pairs: Vec<PseudoPair>,
    pub dropped_empty: usize,
    pub dropped_long: usize,
}

/// One pair per sample, dropping pairs with an empty source or a target
/// longer than `max_target_len`.
pub fn build_pseudo_corpus(
    unlabeled: &[UnlabeledSample],
    backend: &dyn PosBackend,
    tags: &ContentTagSet,
    max_target_len: usize,
) -> Result<PseudoCorpus> {
    let mut out = PseudoCorpus::default();
    for sample in unlabeled {
        if sample.text.len() > max_target_len {
            out.dropped_long += 1;
            continue;
        }
        let tagged = pos_tag(&sample.id, &sample.text, backend)?;
        let source = filter_content(&tagged, tags);
        if source.is_empty() {
            out.dropped_empty += 1;
            continue;
        }
        out.pairs.push(PseudoPair {
            source,
            target: sample.text.0.clone(),
        });
    }
    Ok(out)
}

pub fn write_pseudo(path: impl AsRef<Path>, pairs: &[PseudoPair]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    for p in pairs {
        s.push_str(&serde_json::to_string(p)?);
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn load_pseudo(path: impl AsRef<Path>) -> Result<Vec<PseudoPair>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
