//! Stage one: a BiLSTM over the linearized table with a per-token binary
//! classifier. Each token's input is its word, attribute, forward position
//! and backward position embeddings, concatenated.

use pivot_nn::layers::{BiLstm, Embedding, Init, Linear};
use pivot_nn::{row_distribution, Graph, ParamSet, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use std::collections::BTreeMap;
use std::path::Path;

use crate::checkpoint::{shapes, Checkpoint, Header};
use crate::corpus::{LinearizedTable, Vocabulary, PAD};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggerConfig {
    pub hidden_dim: usize,
    pub word_emb_dim: usize,
    pub attr_emb_dim: usize,
    pub pos_emb_dim: usize,
    /// Positions above this share the last embedding row.
    pub max_position: usize,
    pub word_vocab_cap: usize,
    pub attr_vocab_cap: usize,
    pub dropout: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            hidden_dim: 500,
            word_emb_dim: 400,
            attr_emb_dim: 50,
            pos_emb_dim: 5,
            max_position: 30,
            word_vocab_cap: 20_000,
            attr_vocab_cap: 1_000,
            dropout: 0.2,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

impl TaggerConfig {
    /// Small dimensions for tests and desk-scale experiments.
    pub fn desk() -> Self {
        TaggerConfig {
            hidden_dim: 64,
            word_emb_dim: 32,
            attr_emb_dim: 16,
            pos_emb_dim: 5,
            ..Default::default()
        }
    }

    pub fn input_dim(&self) -> usize {
        self.word_emb_dim + self.attr_emb_dim + 2 * self.pos_emb_dim
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.hidden_dim, self.word_emb_dim, self.attr_emb_dim, self.pos_emb_dim, self.max_position];
        if dims.contains(&0) || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("invalid tagger settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Net {
    words: Embedding,
    attributes: Embedding,
    positions: Embedding,
    encoder: BiLstm,
    classifier: Linear,
}

/// Key-fact tagger with its vocabularies and parameters.
#[derive(Clone, Debug)]
pub struct TaggerModel {
    pub config: TaggerConfig,
    pub words: Vocabulary,
    pub attributes: Vocabulary,
    pub params: ParamSet,
    net: Net,
}

/// Per-token `(p(0), p(1))` and hard labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggerPrediction {
    pub probs: Vec<[f64; 2]>,
    pub labels: Vec<u8>,
}

impl TaggerPrediction {
    /// Index of the token most likely to be a key fact.
    pub fn top_token(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, p) in self.probs.iter().enumerate() {
            if best.map_or(true, |b| p[1] > self.probs[b][1]) {
                best = Some(i);
            }
        }
        best
    }
}

/// Index layout of a padded, time-major batch.
pub struct TaggerBatch {
    pub batch: usize,
    pub steps: usize,
    pub lens: Vec<usize>,
}

impl TaggerBatch {
    /// Row of token `t` of sequence `b`.
    pub fn row(&self, b: usize, t: usize) -> usize {
        t * self.batch + b
    }
}

impl TaggerModel {
    pub fn new(config: TaggerConfig, words: Vocabulary, attributes: Vocabulary) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let init = Init::Uniform(config.init_scale);
        let net = Net {
            words: Embedding::new(&mut params, "tagger.word_emb", words.len(), config.word_emb_dim, init, &mut rng),
            attributes: Embedding::new(&mut params, "tagger.attr_emb", attributes.len(), config.attr_emb_dim, init, &mut rng),
            positions: Embedding::new(&mut params, "tagger.pos_emb", config.max_position + 1, config.pos_emb_dim, init, &mut rng),
            encoder: BiLstm::new(&mut params, "tagger.encoder", config.input_dim(), config.hidden_dim, init, &mut rng),
            classifier: Linear::new(&mut params, "tagger.classifier", 2 * config.hidden_dim, 2, true, init, &mut rng),
        };
        Ok(TaggerModel {
            config,
            words,
            attributes,
            params,
            net,
        })
    }

    /// Builds a model around stored parameters; shapes must match.
    pub fn with_params(config: TaggerConfig, words: Vocabulary, attributes: Vocabulary, params: ParamSet) -> Result<Self> {
        let mut model = TaggerModel::new(config, words, attributes)?;
        crate::checkpoint::install_params(&mut model.params, params)?;
        Ok(model)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            header: Header {
                kind: "tagger".into(),
                variant: None,
                config: serde_json::to_value(&self.config)?,
                vocabularies: BTreeMap::from([
                    ("words".to_string(), self.words.clone().into()),
                    ("attributes".to_string(), self.attributes.clone().into()),
                ]),
                params: shapes(&self.params),
            },
            params: self.params.clone(),
        })
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        c.expect_kind("tagger")?;
        let config: TaggerConfig = serde_json::from_value(c.header.config.clone())?;
        let (words, attributes) = (c.vocabulary("words")?, c.vocabulary("attributes")?);
        TaggerModel::with_params(config, words, attributes, c.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }

    fn position(&self, p: usize) -> usize {
        p.min(self.config.max_position)
    }

    /// Feature rows (time-major, `steps * batch x input_dim`) for a batch.
    pub fn embed(&self, g: &mut Graph<'_>, tables: &[&LinearizedTable]) -> (Var, TaggerBatch) {
        let batch = tables.len();
        let lens: Vec<usize> = tables.iter().map(|t| t.len()).collect();
        let steps = lens.iter().copied().max().unwrap_or(0);
        let n = steps * batch;
        let (mut w, mut a, mut pf, mut pb) = (vec![PAD; n], vec![PAD; n], vec![0; n], vec![0; n]);
        for (b, table) in tables.iter().enumerate() {
            for (t, tok) in table.tokens.iter().enumerate() {
                let r = t * batch + b;
                w[r] = self.words.id(&tok.word);
                a[r] = self.attributes.id(&tok.attribute);
                pf[r] = self.position(tok.pos_fwd);
                pb[r] = self.position(tok.pos_bwd);
            }
        }
        let parts = [
            self.net.words.forward(g, &w),
            self.net.attributes.forward(g, &a),
            self.net.positions.forward(g, &pf),
            self.net.positions.forward(g, &pb),
        ];
        let x = g.concat_cols(&parts);
        (x, TaggerBatch { batch, steps, lens })
    }

    /// BiLSTM states, `steps * batch x 2 hidden`, forward half first.
    pub fn encode(&self, g: &mut Graph<'_>, features: Var, layout: &TaggerBatch) -> Var {
        let x = g.dropout(features, self.config.dropout);
        let h = self.net.encoder.run(g, x, layout.batch, &layout.lens).outputs;
        g.dropout(h, self.config.dropout)
    }

    /// Two logits per row.
    pub fn classify(&self, g: &mut Graph<'_>, hidden: Var) -> Var {
        self.net.classifier.forward(g, hidden)
    }

    pub fn logits(&self, g: &mut Graph<'_>, tables: &[&LinearizedTable]) -> (Var, TaggerBatch) {
        let (x, layout) = self.embed(g, tables);
        let h = self.encode(g, x, &layout);
        (self.classify(g, h), layout)
    }

    /// Cross-entropy summed over the real tokens of each sequence and
    /// averaged over the batch.
    pub fn batch_loss(&self, g: &mut Graph<'_>, samples: &[(&LinearizedTable, &[u8])]) -> Result<Var> {
        for (t, l) in samples {
            if t.len() != l.len() {
                return Err(Error::LengthMismatch {
                    what: "tagger gold labels",
                    expected: t.len(),
                    actual: l.len(),
                });
            }
        }
        let tables: Vec<&LinearizedTable> = samples.iter().map(|(t, _)| *t).collect();
        let (logits, layout) = self.logits(g, &tables);
        let mut targets = vec![None; layout.steps * layout.batch];
        for (b, (_, labels)) in samples.iter().enumerate() {
            for (t, &l) in labels.iter().enumerate() {
                targets[layout.row(b, t)] = Some(usize::from(l));
            }
        }
        let ce = g.cross_entropy(logits, &targets);
        Ok(g.scale(ce, 1.0 / samples.len().max(1) as f64))
    }

    pub fn predict(&self, table: &LinearizedTable) -> TaggerPrediction {
        self.predict_batch(&[table]).pop().expect("one prediction per table")
    }

    pub fn predict_batch(&self, tables: &[&LinearizedTable]) -> Vec<TaggerPrediction> {
        if tables.is_empty() {
            return Vec::new();
        }
        let mut g = Graph::new(&self.params);
        let (logits, layout) = self.logits(&mut g, tables);
        let values = g.value(logits);
        (0..layout.batch)
            .map(|b| {
                let probs: Vec<[f64; 2]> = (0..layout.lens[b])
                    .map(|t| {
                        let d = row_distribution(values, layout.row(b, t));
                        [d[0], d[1]]
                    })
                    .collect();
                let labels = probs.iter().map(|p| u8::from(p[1] >= p[0])).collect();
                TaggerPrediction { probs, labels }
            })
            .collect()
    }

    /// Predictions in chunks of `batch_size`.
    pub fn predict_all(&self, tables: &[LinearizedTable], batch_size: usize) -> Vec<TaggerPrediction> {
        let refs: Vec<&LinearizedTable> = tables.iter().collect();
        refs.chunks(batch_size.max(1)).flat_map(|c| self.predict_batch(c)).collect()
    }
}

/// `-sum_t log p(gold_t)` from per-token probability pairs.
pub fn loss(probs: &[[f64; 2]], gold: &[u8]) -> Result<f64> {
    if probs.len() != gold.len() {
        return Err(Error::LengthMismatch {
            what: "tagger gold labels",
            expected: probs.len(),
            actual: gold.len(),
        });
    }
    Ok(probs.iter().zip(gold).map(|(p, &l)| -p[usize::from(l)].ln()).sum())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Global token counts.
    #[default]
    Micro,
    /// Mean of per-sequence scores.
    Macro,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

/// Precision, recall and F1 of the positive class.
pub fn evaluate_prf<P: AsRef<[u8]>, G: AsRef<[u8]>>(pred: &[P], gold: &[G], averaging: Averaging) -> Result<Prf> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            what: "tagger evaluation sequences",
            expected: gold.len(),
            actual: pred.len(),
        });
    }
    let mut counts = Vec::with_capacity(pred.len());
    for (p, g) in pred.iter().zip(gold) {
        let (p, g) = (p.as_ref(), g.as_ref());
        if p.len() != g.len() {
            return Err(Error::LengthMismatch {
                what: "tagger evaluation tokens",
                expected: g.len(),
                actual: p.len(),
            });
        }
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (&a, &b) in p.iter().zip(g) {
            match (a, b) {
                (1, 1) => tp += 1,
                (1, _) => fp += 1,
                (_, 1) => fn_ += 1,
                _ => {}
            }
        }
        counts.push((tp, fp, fn_));
    }
    Ok(match averaging {
        Averaging::Micro => {
            let (tp, fp, fn_) = counts.iter().fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
            Prf::from_counts(tp, fp, fn_)
        }
        Averaging::Macro => {
            if counts.is_empty() {
                return Ok(Prf::default());
            }
            let n = counts.len() as f64;
            let all: Vec<Prf> = counts.iter().map(|&(a, b, c)| Prf::from_counts(a, b, c)).collect();
            Prf {
                precision: all.iter().map(|p| p.precision).sum::<f64>() / n,
                recall: all.iter().map(|p| p.recall).sum::<f64>() / n,
                f1: all.iter().map(|p| p.f1).sum::<f64>() / n,
            }
        }
    })
}

/// Zeroes every parameter whose name starts with `prefix`.
#[cfg(test)]
pub(crate) fn zero_params(params: &mut ParamSet, prefix: &str) {
    use pivot_nn::Tensor;
    let ids: Vec<_> = params.iter().filter(|(_, n, _)| n.starts_with(prefix)).map(|(id, _, _)| id).collect();
    for id in ids {
        let t = params.get_mut(id);
        *t = Tensor::zeros(t.rows(), t.cols());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{linearize, Record, Table};

    fn table(records: &[(&str, &str)]) -> LinearizedTable {
        linearize(&Table::new(records.iter().map(|(a, v)| Record::from_raw(a, v).unwrap()).collect()).unwrap())
    }

    fn model(config: TaggerConfig) -> TaggerModel {
        let words = Vocabulary::build([vec!["denise", "margaret", "scott", "1955"]], 100);
        let attrs = Vocabulary::build([vec!["name", "born"]], 10);
        TaggerModel::new(config, words, attrs).unwrap()
    }

    #[test]
    fn checkpoint_round_trip_keeps_predictions() {
        let m = model(TaggerConfig::desk());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tagger.ckpt");
        m.save(&path).unwrap();
        let back = TaggerModel::load(&path).unwrap();
        let t = table(&[("name", "denise margaret scott"), ("born", "1955")]);
        assert_eq!(back.predict(&t), m.predict(&t));
        assert!(crate::realizer::Realizer::load(&path).is_err());
    }

    fn tiny() -> TaggerConfig {
        TaggerConfig {
            hidden_dim: 6,
            word_emb_dim: 4,
            attr_emb_dim: 3,
            pos_emb_dim: 2,
            ..Default::default()
        }
    }

    #[test]
    fn full_size_dims_give_460_features_and_1000_states() {
        let m = model(TaggerConfig::default());
        let t = table(&[("name", "denise margaret scott")]);
        let mut g = Graph::new(&m.params);
        let (x, layout) = m.embed(&mut g, &[&t]);
        assert_eq!(g.shape(x), (3, 460));
        let h = m.encode(&mut g, x, &layout);
        assert_eq!(g.shape(h), (3, 1000));
        let logits = m.classify(&mut g, h);
        assert_eq!(g.shape(logits), (3, 2));
    }

    #[test]
    fn unknown_words_use_unk_row() {
        let m = model(tiny());
        let t = table(&[("zzz", "qqq")]);
        let mut g = Graph::new(&m.params);
        let (x, _) = m.embed(&mut g, &[&t]);
        let unk_word = m.params.get(m.net.words.table).row(crate::corpus::UNK).to_vec();
        assert_eq!(&g.value(x).row(0)[..4], unk_word.as_slice());
    }

    #[test]
    fn zero_lstm_gives_zero_states() {
        let mut m = model(tiny());
        zero_params(&mut m.params, "tagger.encoder");
        let t = table(&[("name", "denise margaret scott")]);
        let mut g = Graph::new(&m.params);
        let (x, layout) = m.embed(&mut g, &[&t]);
        let h = m.encode(&mut g, x, &layout);
        // all gates sit at sigmoid(0) = 0.5 and the candidate at tanh(0) = 0,
        // so every cell state and hidden state stays 0
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reversal_with_swapped_directions() {
        let m = model(tiny());
        let mut swapped = m.clone();
        let (f, b) = (&m.net.encoder.forward, &m.net.encoder.backward);
        for (x, y) in [(f.w_ih, b.w_ih), (f.w_hh, b.w_hh), (f.bias, b.bias)] {
            *swapped.params.get_mut(x) = m.params.get(y).clone();
            *swapped.params.get_mut(y) = m.params.get(x).clone();
        }
        let t = table(&[("name", "denise margaret scott"), ("born", "1955")]);
        let mut rev = t.clone();
        rev.tokens.reverse();
        let mut g1 = Graph::new(&m.params);
        let (x1, l1) = m.embed(&mut g1, &[&t]);
        let h1 = m.encode(&mut g1, x1, &l1);
        let mut g2 = Graph::new(&swapped.params);
        let (x2, l2) = swapped.embed(&mut g2, &[&rev]);
        let h2 = swapped.encode(&mut g2, x2, &l2);
        let hd = m.config.hidden_dim;
        for t in 0..4 {
            let a = g1.value(h1).row(t);
            let b = g2.value(h2).row(3 - t);
            for j in 0..hd {
                assert!((a[j] - b[hd + j]).abs() < 1e-12);
                assert!((a[hd + j] - b[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn classifier_bias_only() {
        let mut m = model(tiny());
        zero_params(&mut m.params, "tagger.classifier");
        let t = table(&[("name", "denise margaret scott")]);
        let p = m.predict(&t);
        assert!(p.probs.iter().all(|q| q == &[0.5, 0.5]));
        assert_eq!(p.labels, vec![1, 1, 1]);
        let bias = m.params.find("tagger.classifier.bias").unwrap();
        *m.params.get_mut(bias) = pivot_nn::Tensor::from_vec(1, 2, vec![0.0, 10.0]);
        let p = m.predict(&t);
        let e10 = 10f64.exp();
        for q in &p.probs {
            assert!((q[0] - 1.0 / (1.0 + e10)).abs() < 1e-12);
            assert!((q[1] - e10 / (1.0 + e10)).abs() < 1e-12);
        }
    }

    #[test]
    fn batching_does_not_change_predictions() {
        let m = model(tiny());
        let a = table(&[("name", "denise margaret scott"), ("born", "1955")]);
        let b = table(&[("born", "1955")]);
        let together = m.predict_batch(&[&a, &b]);
        let alone = [m.predict(&a), m.predict(&b)];
        for (x, y) in together.iter().zip(&alone) {
            assert_eq!(x.labels, y.labels);
            for (p, q) in x.probs.iter().zip(&y.probs) {
                assert!((p[0] - q[0]).abs() < 1e-12 && (p[0] + p[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_values() {
        assert!((loss(&[[0.5, 0.5]; 4], &[1, 0, 1, 0]).unwrap() - 4.0 * 2f64.ln()).abs() < 1e-12);
        assert!(loss(&[[0.0, 1.0]], &[1]).unwrap().abs() < 1e-12);
        assert!(loss(&[[0.5, 0.5]], &[1, 1]).is_err());
    }

    #[test]
    fn prf_counts() {
        let p = evaluate_prf(&[vec![1u8, 1, 1, 0]], &[vec![1u8, 0, 1, 1]], Averaging::Micro).unwrap();
        for v in [p.precision, p.recall, p.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
        let same = evaluate_prf(&[vec![1u8, 0]], &[vec![1u8, 0]], Averaging::Micro).unwrap();
        assert_eq!((same.precision, same.recall, same.f1), (1.0, 1.0, 1.0));
        let zero = evaluate_prf(&[vec![0u8, 0]], &[vec![1u8, 1]], Averaging::Micro).unwrap();
        assert_eq!((zero.precision, zero.recall, zero.f1), (0.0, 0.0, 0.0));
        let mac = evaluate_prf(&[vec![1u8], vec![0u8, 1]], &[vec![1u8], vec![1u8, 1]], Averaging::Macro).unwrap();
        assert!((mac.recall - 0.75).abs() < 1e-12);
    }

    #[test]
    fn batch_loss_rejects_misaligned_labels() {
        let m = model(tiny());
        let t = table(&[("name", "denise")]);
        let mut g = Graph::new(&m.params);
        assert!(m.batch_loss(&mut g, &[(&t, &[1, 0][..])]).is_err());
    }

    #[test]
    fn same_seed_same_init() {
        let a = model(tiny());
        let b = model(tiny());
        for ((_, _, x), (_, _, y)) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(x, y);
        }
    }
}
