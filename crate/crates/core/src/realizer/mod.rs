//! Stage two: generate text from a key-fact sequence.
//!
//! Two architectures share one interface: an attention Seq2Seq model
//! (BiLSTM encoder, LSTM decoder, bilinear global attention) and a pre-norm
//! Transformer. Source and target share one vocabulary but not embeddings.

mod transformer;
mod vanilla;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use pivot_nn::{argmax, Graph, ParamSet, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{shapes, Checkpoint, Header};
use crate::corpus::{Vocabulary, BOS, EOS, PAD, UNK};
use crate::error::{Error, Result};

pub use transformer::TransformerConfig;
pub use vanilla::VanillaConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Vanilla,
    Transformer,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Vanilla => "vanilla",
            Variant::Transformer => "transformer",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Variant::Vanilla),
            "transformer" => Ok(Variant::Transformer),
            _ => Err(Error::Config(format!("unknown realizer variant {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RealizerConfig {
    pub variant: Variant,
    pub vanilla: VanillaConfig,
    pub transformer: TransformerConfig,
    pub max_decode_len: usize,
    pub vocab_cap: usize,
    pub seed: u64,
}

impl Default for RealizerConfig {
    fn default() -> Self {
        RealizerConfig {
            variant: Variant::Vanilla,
            vanilla: VanillaConfig::default(),
            transformer: TransformerConfig::default(),
            max_decode_len: 60,
            vocab_cap: 20_000,
            seed: 0,
        }
    }
}

impl RealizerConfig {
    /// Small dimensions for tests and desk-scale experiments.
    pub fn desk(variant: Variant) -> Self {
        RealizerConfig {
            variant,
            vanilla: VanillaConfig::desk(),
            transformer: TransformerConfig::desk(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_decode_len == 0 {
            return Err(Error::Config("realizer.max_decode_len must be positive".into()));
        }
        match self.variant {
            Variant::Vanilla => self.vanilla.validate(),
            Variant::Transformer => self.transformer.validate(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Eos,
    MaxLength,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
    /// Next-token distribution at every step, when requested.
    pub distributions: Option<Vec<Vec<f64>>>,
    pub terminated_by: Termination,
}

#[derive(Clone, Debug)]
enum Net {
    Vanilla(vanilla::VanillaNet),
    Transformer(transformer::TransformerNet),
}

#[derive(Clone, Debug)]
pub struct Realizer {
    pub config: RealizerConfig,
    pub vocab: Vocabulary,
    pub params: ParamSet,
    net: Net,
}

/// One source/target pair as vocabulary ids, without BOS or EOS.
pub type IdPair = (Vec<usize>, Vec<usize>);

/// Padded batch-major id matrices and lengths.
pub(crate) struct Padded {
    pub batch: usize,
    pub steps: usize,
    pub lens: Vec<usize>,
    /// `ids[b * steps + t]`
    pub ids: Vec<usize>,
}

impl Padded {
    pub fn new(seqs: &[&[usize]]) -> Padded {
        let batch = seqs.len();
        let lens: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        let steps = lens.iter().copied().max().unwrap_or(0);
        let mut ids = vec![PAD; batch * steps];
        for (b, s) in seqs.iter().enumerate() {
            ids[b * steps..b * steps + s.len()].copy_from_slice(s);
        }
        Padded { batch, steps, lens, ids }
    }

    pub fn time_major(&self) -> Vec<usize> {
        (0..self.steps * self.batch)
            .map(|r| self.ids[(r % self.batch) * self.steps + r / self.batch])
            .collect()
    }
}

/// Row permutation from time-major (`t * batch + b`) to batch-major
/// (`b * steps + t`) order.
pub(crate) fn to_batch_major(batch: usize, steps: usize) -> Vec<usize> {
    (0..batch * steps).map(|r| (r % steps) * batch + r / steps).collect()
}

impl Realizer {
    pub fn new(config: RealizerConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let v = vocab.len();
        let net = match config.variant {
            Variant::Vanilla => Net::Vanilla(vanilla::VanillaNet::new(&config.vanilla, v, &mut params, &mut rng)),
            Variant::Transformer => {
                Net::Transformer(transformer::TransformerNet::new(&config.transformer, v, &mut params, &mut rng))
            }
        };
        Ok(Realizer {
            config,
            vocab,
            params,
            net,
        })
    }

    pub fn with_params(config: RealizerConfig, vocab: Vocabulary, params: ParamSet) -> Result<Self> {
        let mut model = Realizer::new(config, vocab)?;
        crate::checkpoint::install_params(&mut model.params, params)?;
        Ok(model)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            header: Header {
                kind: "realizer".into(),
                variant: Some(self.config.variant.to_string()),
                config: serde_json::to_value(&self.config)?,
                vocabularies: BTreeMap::from([("tokens".to_string(), self.vocab.clone().into())]),
                params: shapes(&self.params),
            },
            params: self.params.clone(),
        })
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        c.expect_kind("realizer")?;
        let config: RealizerConfig = serde_json::from_value(c.header.config.clone())?;
        let vocab = c.vocabulary("tokens")?;
        Realizer::with_params(config, vocab, c.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Source ids; an empty source becomes a single UNK.
    pub fn source_ids<S: AsRef<str>>(&self, source: &[S]) -> Vec<usize> {
        if source.is_empty() {
            vec![UNK]
        } else {
            self.vocab.encode(source)
        }
    }

    pub fn encode_pair<S: AsRef<str>, T: AsRef<str>>(&self, source: &[S], target: &[T]) -> IdPair {
        (self.source_ids(source), self.vocab.encode(target))
    }

    /// Per-position encoder outputs for one source, `len x dim`.
    pub fn encode_source<S: AsRef<str>>(&self, source: &[S]) -> Tensor {
        let ids = self.source_ids(source);
        let mut g = Graph::new(&self.params);
        let padded = Padded::new(&[&ids]);
        match &self.net {
            Net::Vanilla(n) => {
                let enc = n.encode(&mut g, &padded);
                g.value(enc.keys).clone()
            }
            Net::Transformer(n) => {
                let out = n.encode(&mut g, &padded);
                g.value(out).clone()
            }
        }
    }

    /// Teacher-forced logits, batch-major `batch * (max_target + 1) x vocab`,
    /// and the matching next-token targets (`None` on padding).
    pub fn teacher_forced(&self, g: &mut Graph<'_>, pairs: &[(&[usize], &[usize])]) -> (Var, Vec<Option<usize>>) {
        let sources: Vec<&[usize]> = pairs.iter().map(|(s, _)| if s.is_empty() { &[UNK][..] } else { *s }).collect();
        let inputs: Vec<Vec<usize>> = pairs.iter().map(|(_, t)| std::iter::once(BOS).chain(t.iter().copied()).collect()).collect();
        let src = Padded::new(&sources);
        let tgt = Padded::new(&inputs.iter().map(Vec::as_slice).collect::<Vec<_>>());
        let mut targets = vec![None; tgt.batch * tgt.steps];
        for (b, (_, t)) in pairs.iter().enumerate() {
            for (i, &y) in t.iter().chain(std::iter::once(&EOS)).enumerate() {
                targets[b * tgt.steps + i] = Some(y);
            }
        }
        let logits = match &self.net {
            Net::Vanilla(n) => n.teacher_forced(g, &src, &tgt),
            Net::Transformer(n) => n.teacher_forced(g, &src, &tgt),
        };
        (logits, targets)
    }

    /// Token-summed, batch-averaged negative log-likelihood.
    pub fn batch_loss(&self, g: &mut Graph<'_>, pairs: &[(&[usize], &[usize])]) -> Var {
        let (logits, targets) = self.teacher_forced(g, pairs);
        let ce = g.cross_entropy(logits, &targets);
        g.scale(ce, 1.0 / pairs.len().max(1) as f64)
    }

    /// Loss of token pairs, for inspection; training uses [`batch_loss`](Self::batch_loss).
    pub fn loss<S: AsRef<str>>(&self, pairs: &[(&[S], &[S])]) -> f64 {
        let ids: Vec<IdPair> = pairs.iter().map(|(s, t)| self.encode_pair(s, t)).collect();
        let refs: Vec<(&[usize], &[usize])> = ids.iter().map(|(s, t)| (s.as_slice(), t.as_slice())).collect();
        let mut g = Graph::new(&self.params);
        let l = self.batch_loss(&mut g, &refs);
        g.value(l).item()
    }

    /// Teacher-forced next-token distributions for one pair: one row per
    /// target token plus the final EOS step.
    pub fn teacher_forced_distributions(&self, source: &[usize], target: &[usize]) -> Vec<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let (logits, _) = self.teacher_forced(&mut g, &[(source, target)]);
        let t = g.value(logits);
        (0..=target.len()).map(|r| pivot_nn::row_distribution(t, r)).collect()
    }

    /// Next-token distributions computed by the step-wise decoding path while
    /// feeding `prefix`; row `i` is the distribution after `prefix[..i]`.
    pub fn decode_path_distributions(&self, source: &[usize], prefix: &[usize]) -> Vec<Vec<f64>> {
        let mut dists = Vec::new();
        self.run_decoder(&[source], prefix.len() + 1, |step, d| {
            dists.push(d[0].clone());
            prefix.get(step).map(|&y| vec![y])
        });
        dists
    }

    /// Drives the step-wise decoder for a batch. `choose` sees the step index
    /// and each row's distribution and returns the tokens fed next, or `None`
    /// to stop. At most `steps` steps run.
    fn run_decoder(&self, sources: &[&[usize]], steps: usize, choose: impl FnMut(usize, &[Vec<f64>]) -> Option<Vec<usize>>) {
        let sources: Vec<&[usize]> = sources.iter().map(|s| if s.is_empty() { &[UNK][..] } else { *s }).collect();
        match &self.net {
            Net::Vanilla(n) => n.decode(&self.params, &sources, steps, choose),
            Net::Transformer(n) => n.decode(&self.params, &sources, steps, choose),
        }
    }

    pub fn greedy_decode<S: AsRef<str>>(&self, source: &[S]) -> DecodeResult {
        self.greedy_decode_batch(&[self.source_ids(source)], false).pop().expect("one result")
    }

    /// Greedy decoding of id sources. PAD and BOS are never emitted, and EOS
    /// is blocked at the first step so no output is empty.
    pub fn greedy_decode_batch(&self, sources: &[Vec<usize>], keep_distributions: bool) -> Vec<DecodeResult> {
        self.greedy_decode_limit(sources, self.config.max_decode_len, keep_distributions)
    }

    pub fn greedy_decode_limit(&self, sources: &[Vec<usize>], max_len: usize, keep_distributions: bool) -> Vec<DecodeResult> {
        let n = sources.len();
        let mut ids: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut dists: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
        let mut done: Vec<Option<Termination>> = vec![None; n];
        let refs: Vec<&[usize]> = sources.iter().map(Vec::as_slice).collect();
        self.run_decoder(&refs, max_len, |step, rows| {
            let next = rows
                .iter()
                .enumerate()
                .map(|(b, d)| {
                    if done[b].is_some() {
                        return EOS;
                    }
                    let mut masked = d.clone();
                    masked[PAD] = f64::NEG_INFINITY;
                    masked[BOS] = f64::NEG_INFINITY;
                    if step == 0 {
                        masked[EOS] = f64::NEG_INFINITY;
                    }
                    let y = argmax(&masked);
                    if keep_distributions {
                        dists[b].push(d.clone());
                    }
                    if y == EOS {
                        done[b] = Some(Termination::Eos);
                    } else {
                        ids[b].push(y);
                        if ids[b].len() >= max_len {
                            done[b] = Some(Termination::MaxLength);
                        }
                    }
                    y
                })
                .collect();
            (!done.iter().all(Option::is_some)).then_some(next)
        });
        ids.into_iter()
            .zip(dists)
            .zip(done)
            .map(|((ids, d), done)| DecodeResult {
                tokens: self.vocab.decode(&ids),
                ids,
                distributions: keep_distributions.then_some(d),
                terminated_by: done.unwrap_or(Termination::MaxLength),
            })
            .collect()
    }

    /// Greedy decoding in chunks of `batch_size`, returning token lists.
    pub fn generate(&self, sources: &[Vec<String>], batch_size: usize) -> Vec<Vec<String>> {
        let ids: Vec<Vec<usize>> = sources.iter().map(|s| self.source_ids(s)).collect();
        ids.chunks(batch_size.max(1))
            .flat_map(|c| self.greedy_decode_batch(c, false))
            .map(|r| r.tokens)
            .collect()
    }

    /// Cross-attention weights under teacher forcing; each row is a
    /// distribution over source positions.
    pub fn attention_rows(&self, source: &[usize], target: &[usize]) -> Vec<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let src = Padded::new(&[source]);
        let input: Vec<usize> = std::iter::once(BOS).chain(target.iter().copied()).collect();
        let tgt = Padded::new(&[&input]);
        let nodes = match &self.net {
            Net::Vanilla(n) => n.attention_nodes(&mut g, &src, &tgt),
            Net::Transformer(n) => n.attention_nodes(&mut g, &src, &tgt),
        };
        let klen = source.len();
        nodes
            .into_iter()
            .flat_map(|v| {
                g.attention_weights(v)
                    .expect("attention node")
                    .chunks(klen)
                    .map(<[f64]>::to_vec)
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// Softmax rows of a logits tensor.
pub(crate) fn distributions(logits: &Tensor, rows: impl Iterator<Item = usize>) -> Vec<Vec<f64>> {
    rows.map(|r| pivot_nn::row_distribution(logits, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagger::zero_params;
    use crate::training::{adam_step, AdamState, OptimizerConfig};

    fn vocab() -> Vocabulary {
        Vocabulary::build([vec!["john", "smith", "is", "an", "actor", ".", "born", "1950"]], 100)
    }

    fn tiny(variant: Variant) -> RealizerConfig {
        RealizerConfig {
            variant,
            vanilla: VanillaConfig {
                hidden_dim: 8,
                emb_dim: 6,
                // activations vanish at these widths with the default scale
                init_scale: 0.5,
                ..Default::default()
            },
            transformer: TransformerConfig {
                model_dim: 8,
                ff_dim: 12,
                heads: 2,
                blocks: 2,
                dropout: 0.1,
            },
            max_decode_len: 12,
            ..Default::default()
        }
    }

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    const BOTH: [Variant; 2] = [Variant::Vanilla, Variant::Transformer];

    #[test]
    fn encoder_output_dims_at_full_size() {
        let src = words("john smith is an actor");
        let v = Realizer::new(RealizerConfig::default(), vocab()).unwrap();
        assert_eq!(v.encode_source(&src).shape(), (5, 1000));
        let mut cfg = RealizerConfig {
            variant: Variant::Transformer,
            ..Default::default()
        };
        assert_eq!(cfg.transformer.head_dim(), 64);
        cfg.transformer.blocks = 1;
        let t = Realizer::new(cfg, vocab()).unwrap();
        assert_eq!(t.encode_source(&src).shape(), (5, 512));
    }

    #[test]
    fn bad_head_count_is_rejected() {
        let mut cfg = tiny(Variant::Transformer);
        cfg.transformer.heads = 3;
        assert!(Realizer::new(cfg, vocab()).is_err());
    }

    #[test]
    fn attention_rows_are_distributions() {
        for variant in BOTH {
            let m = Realizer::new(tiny(variant), vocab()).unwrap();
            let (s, t) = m.encode_pair(&words("john smith actor"), &words("john smith is an actor ."));
            for row in m.attention_rows(&s, &t) {
                assert!(row.iter().all(|&w| w >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            let (s, t) = m.encode_pair(&words("actor"), &words("is an actor"));
            for row in m.attention_rows(&s, &t) {
                assert_eq!(row, vec![1.0]);
            }
        }
    }

    #[test]
    fn zero_generator_is_uniform_and_loss_is_n_log_v() {
        for variant in BOTH {
            let mut m = Realizer::new(tiny(variant), vocab()).unwrap();
            zero_params(&mut m.params, "realizer.generator");
            let (s, t) = m.encode_pair(&words("john"), &words("john is an"));
            let v = m.vocab.len() as f64;
            for d in m.teacher_forced_distributions(&s, &t) {
                assert!(d.iter().all(|&p| (p - 1.0 / v).abs() < 1e-12));
            }
            // three tokens plus the end marker make four predictions
            let l = m.loss(&[(&words("john")[..], &words("john is an")[..])]);
            assert!((l - 4.0 * v.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn teacher_forcing_matches_the_decode_path() {
        for variant in BOTH {
            let m = Realizer::new(tiny(variant), vocab()).unwrap();
            let (s, t) = m.encode_pair(&words("john smith 1950 actor"), &words("john smith is an actor ."));
            let tf = m.teacher_forced_distributions(&s, &t);
            let dp = m.decode_path_distributions(&s, &t);
            assert_eq!(tf.len(), dp.len());
            for (a, b) in tf.iter().zip(&dp) {
                assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() < 1e-9, "{variant}: {x} vs {y}");
                }
            }
            // the loss of each step is -log of the gold entry
            let mut g = Graph::new(&m.params);
            let l = m.batch_loss(&mut g, &[(&s, &t)]);
            let gold: Vec<usize> = t.iter().copied().chain([EOS]).collect();
            let nll: f64 = tf.iter().zip(&gold).map(|(d, &y)| -d[y].ln()).sum();
            assert!((g.value(l).item() - nll).abs() < 1e-9);
        }
    }

    #[test]
    fn transformer_step_ignores_later_tokens() {
        let m = Realizer::new(tiny(Variant::Transformer), vocab()).unwrap();
        let s = m.source_ids(&words("john actor"));
        let a = m.teacher_forced_distributions(&s, &[]);
        let b = m.teacher_forced_distributions(&s, &m.vocab.encode(&words("actor . . born")));
        for (x, y) in a[0].iter().zip(&b[0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_stops_at_max_length_without_eos() {
        for variant in BOTH {
            let mut m = Realizer::new(tiny(variant), vocab()).unwrap();
            zero_params(&mut m.params, "realizer.generator");
            let bias = m.params.find("realizer.generator.bias").unwrap();
            let actor = m.vocab.id("actor");
            let b = m.params.get_mut(bias);
            b.data_mut()[actor] = 5.0;
            b.data_mut()[EOS] = -5.0;
            let r = m.greedy_decode_limit(&[m.source_ids(&words("john"))], 5, true).pop().unwrap();
            assert_eq!(r.tokens, vec!["actor"; 5]);
            assert_eq!(r.terminated_by, Termination::MaxLength);
            assert_eq!(r.distributions.unwrap().len(), 5);
        }
    }

    #[test]
    fn eos_is_blocked_at_the_first_step() {
        let mut m = Realizer::new(tiny(Variant::Vanilla), vocab()).unwrap();
        zero_params(&mut m.params, "realizer.generator");
        let bias = m.params.find("realizer.generator.bias").unwrap();
        m.params.get_mut(bias).data_mut()[EOS] = 10.0;
        m.params.get_mut(bias).data_mut()[PAD] = 20.0;
        let r = m.greedy_decode(&Vec::<String>::new());
        assert_eq!(r.ids.len(), 1);
        assert_eq!(r.terminated_by, Termination::Eos);
        assert!(r.ids.iter().all(|&i| i != PAD && i != BOS && i != EOS));
    }

    #[test]
    fn overfits_a_single_pair() {
        for variant in BOTH {
            let mut m = Realizer::new(tiny(variant), vocab()).unwrap();
            let (s, t) = m.encode_pair(&words("john smith actor"), &words("john smith is an actor ."));
            let cfg = OptimizerConfig {
                lr: 0.003,
                ..Default::default()
            };
            let mut state = AdamState::new(&m.params);
            for step in 0..400 {
                let grads = {
                    let mut g = Graph::training(&m.params, step);
                    let l = m.batch_loss(&mut g, &[(&s, &t)]);
                    g.backward(l)
                };
                adam_step(&mut m.params, &grads, &mut state, &cfg, cfg.lr, step as usize).unwrap();
            }
            let out = m.greedy_decode(&words("john smith actor"));
            assert_eq!(out.tokens, words("john smith is an actor ."), "{variant}");
            assert_eq!(out.terminated_by, Termination::Eos);
            assert_eq!(out, m.greedy_decode(&words("john smith actor")));
        }
    }

    #[test]
    fn checkpoint_restores_identical_outputs() {
        let dir = tempfile::tempdir().unwrap();
        for variant in BOTH {
            let m = Realizer::new(tiny(variant), vocab()).unwrap();
            let path = dir.path().join(format!("{variant}.ckpt"));
            m.save(&path).unwrap();
            let back = Realizer::load(&path).unwrap();
            assert_eq!(back.config, m.config);
            assert_eq!(back.params, m.params);
            let src = words("john smith 1950");
            assert_eq!(back.greedy_decode(&src), m.greedy_decode(&src));
        }
    }

    #[test]
    fn batched_decoding_matches_single() {
        for variant in BOTH {
            let m = Realizer::new(tiny(variant), vocab()).unwrap();
            let srcs = vec![m.source_ids(&words("john smith actor")), m.source_ids(&words("1950"))];
            let together = m.greedy_decode_batch(&srcs, false);
            for (s, r) in srcs.iter().zip(&together) {
                assert_eq!(&m.greedy_decode_batch(std::slice::from_ref(s), false)[0].ids, &r.ids);
            }
        }
    }
}
