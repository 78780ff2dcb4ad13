//! Two-step generation: predict key facts, then realize them.

use std::path::Path;

use crate::corpus::{linearize, LinearizedTable, Table, RESERVED};
use crate::error::{Error, Result};
use crate::keyfact::extract;
use crate::realizer::Realizer;
use crate::tagger::{TaggerModel, TaggerPrediction};

/// Key facts chosen for one table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    pub facts: Vec<String>,
    /// Set when nothing was predicted and the single most likely token
    /// stands in.
    pub fallback: bool,
}

/// Key facts in table order. An empty prediction falls back to the token
/// with the highest key-fact probability.
pub fn select(table: &LinearizedTable, prediction: &TaggerPrediction) -> Result<Selection> {
    let facts = extract(table, &prediction.labels)?;
    if !facts.is_empty() || table.is_empty() {
        return Ok(Selection { facts, fallback: false });
    }
    let top = prediction.top_token().expect("non-empty table");
    Ok(Selection {
        facts: vec![table.tokens[top].word.clone()],
        fallback: true,
    })
}

#[derive(Clone, Debug)]
pub struct Generation {
    pub selections: Vec<Selection>,
    pub texts: Vec<Vec<String>>,
}

impl Generation {
    pub fn fallbacks(&self) -> usize {
        self.selections.iter().filter(|s| s.fallback).count()
    }
}

#[derive(Clone, Debug)]
pub struct Pipeline {
    pub tagger: TaggerModel,
    pub realizer: Realizer,
    pub batch_size: usize,
}

impl Pipeline {
    /// Fails with [`Error::VocabularyMismatch`] when no table word the
    /// tagger knows is known to the realizer, which means the two
    /// checkpoints come from unrelated data.
    pub fn new(tagger: TaggerModel, realizer: Realizer) -> Result<Self> {
        let words = tagger.words.len();
        let shared = (RESERVED.len()..words).filter(|&i| realizer.vocab.contains(tagger.words.token(i))).count();
        if words > RESERVED.len() && shared == 0 {
            return Err(Error::VocabularyMismatch);
        }
        Ok(Pipeline {
            tagger,
            realizer,
            batch_size: 64,
        })
    }

    pub fn load(tagger: impl AsRef<Path>, realizer: impl AsRef<Path>) -> Result<Self> {
        Self::new(TaggerModel::load(tagger)?, Realizer::load(realizer)?)
    }

    pub fn select(&self, tables: &[LinearizedTable]) -> Result<Vec<Selection>> {
        let predictions = self.tagger.predict_all(tables, self.batch_size);
        tables.iter().zip(&predictions).map(|(t, p)| select(t, p)).collect()
    }

    /// Generates one non-empty token sequence per table.
    pub fn generate(&self, tables: &[Table]) -> Result<Generation> {
        let linear: Vec<LinearizedTable> = tables.iter().map(linearize).collect();
        let selections = self.select(&linear)?;
        let sources: Vec<Vec<String>> = selections.iter().map(|s| s.facts.clone()).collect();
        let texts = self.realizer.generate(&sources, self.batch_size);
        Ok(Generation { selections, texts })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Record, Vocabulary};
    use crate::realizer::{RealizerConfig, Variant};
    use crate::tagger::TaggerConfig;

    fn table() -> Table {
        Table::new(vec![
            Record::from_raw("name", "ada lovelace").unwrap(),
            Record::from_raw("occupation", "writer").unwrap(),
        ])
        .unwrap()
    }

    fn tagger() -> TaggerModel {
        let cfg = TaggerConfig {
            hidden_dim: 4,
            word_emb_dim: 3,
            attr_emb_dim: 2,
            pos_emb_dim: 2,
            ..Default::default()
        };
        let words = Vocabulary::build([["ada", "lovelace", "writer"]], 10);
        let attrs = Vocabulary::build([["name", "occupation"]], 10);
        TaggerModel::new(cfg, words, attrs).unwrap()
    }

    fn realizer(words: &[&str]) -> Realizer {
        let mut cfg = RealizerConfig::desk(Variant::Vanilla);
        cfg.vanilla.hidden_dim = 4;
        cfg.vanilla.emb_dim = 3;
        cfg.max_decode_len = 5;
        Realizer::new(cfg, Vocabulary::build([words.iter().copied()], 10)).unwrap()
    }

    #[test]
    fn all_zero_tagger_falls_back_to_the_top_token() {
        let mut t = tagger();
        crate::tagger::zero_params(&mut t.params, "tagger.classifier");
        let bias = t.params.find("tagger.classifier.bias").unwrap();
        t.params.get_mut(bias).data_mut()[0] = 3.0;
        let p = Pipeline::new(t, realizer(&["ada", "is"])).unwrap();
        let g = p.generate(&[table()]).unwrap();
        assert_eq!(g.fallbacks(), 1);
        assert_eq!(g.selections[0].facts.len(), 1);
        assert!(!g.texts[0].is_empty());
    }

    #[test]
    fn fallback_prefers_the_most_likely_token() {
        let lt = linearize(&table());
        let pred = TaggerPrediction {
            probs: vec![[0.9, 0.1], [0.6, 0.4], [0.8, 0.2]],
            labels: vec![0, 0, 0],
        };
        assert_eq!(select(&lt, &pred).unwrap().facts, vec!["lovelace"]);
        let pred = TaggerPrediction {
            labels: vec![1, 0, 1],
            ..pred
        };
        let s = select(&lt, &pred).unwrap();
        assert_eq!((s.facts, s.fallback), (vec!["ada".to_string(), "writer".to_string()], false));
    }

    #[test]
    fn unrelated_vocabularies_are_rejected() {
        assert!(matches!(
            Pipeline::new(tagger(), realizer(&["zebra", "is"])),
            Err(Error::VocabularyMismatch)
        ));
    }
}
