use std::fmt;
use std::path::Path;

use pivot_nn::{Graph, ParamSet, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    adam_step, clip_gradients, epoch_batches, AdamState, BatchMixer, BatchSource, Decision, KeyFactOrder, MixMode,
    ScheduleState, TrainPlan,
};
use crate::corpus::{LinearizedTable, Vocabulary};
use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::keyfact::{extract_text_order, AnnotatedSample};
use crate::metrics::bleu4;
use crate::pseudo::PseudoPair;
use crate::realizer::Realizer;
use crate::tagger::{evaluate_prf, Averaging, TaggerModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Tagger,
    /// Realizer on parallel pairs only.
    Parallel,
    Pretrain,
    Finetune,
    Joint,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Tagger => "tagger",
            Phase::Parallel => "parallel",
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
            Phase::Joint => "joint",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    /// Mean batch loss; `None` for the epoch-0 score of a carried-over model.
    pub train_loss: Option<f64>,
    pub valid_score: f64,
    pub lr: f64,
    pub decision: Decision,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn tsv(&self) -> String {
        let mut out = String::from("phase\tepoch\ttrain_loss\tvalid_score\tlr\tdecision\n");
        for e in &self.epochs {
            let loss = e.train_loss.map_or_else(|| "-".to_string(), |l| format!("{l:.6}"));
            out.push_str(&format!(
                "{}\t{}\t{loss}\t{:.6}\t{:e}\t{}\n",
                e.phase, e.epoch, e.valid_score, e.lr, e.decision
            ));
        }
        out
    }
}

/// A trained model, the score of the kept checkpoint and the epoch log.
#[derive(Clone, Debug)]
pub struct Trained<M> {
    pub model: M,
    pub best_score: f64,
    pub log: TrainLog,
}

impl<M> Trained<M> {
    pub fn write_log(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.log.tsv()).map_err(|e| Error::io(path, e))
    }
}

trait HasParams {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
}

impl HasParams for TaggerModel {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

impl HasParams for Realizer {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

/// Optimizer state and counters shared by every phase of one run.
struct Runner<'p> {
    plan: &'p TrainPlan,
    step: u64,
    log: TrainLog,
}

impl<'p> Runner<'p> {
    fn new(plan: &'p TrainPlan) -> Self {
        Runner {
            plan,
            step: 0,
            log: TrainLog::default(),
        }
    }

    /// One clipped Adam update; returns the batch loss.
    fn update<M: HasParams>(
        &mut self,
        model: &mut M,
        adam: &mut AdamState,
        lr: f64,
        loss: impl FnOnce(&M, &mut Graph<'_>) -> Result<Var>,
    ) -> Result<f64> {
        self.step += 1;
        let seed = self.plan.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(self.step);
        let (value, mut grads) = {
            let mut g = Graph::training(model.params(), seed);
            let l = loss(model, &mut g)?;
            (g.value(l).item(), g.backward(l))
        };
        if !value.is_finite() {
            return Err(Error::NonFiniteGradient { batch: self.step as usize });
        }
        if grads.all_finite() {
            clip_gradients(&mut grads, self.plan.optimizer.clip_norm);
        }
        adam_step(model.params_mut(), &grads, adam, &self.plan.optimizer, lr, self.step as usize)?;
        Ok(value)
    }

    /// Runs epochs until the schedule stops or `max_epochs` is reached and
    /// leaves the best-scoring parameters in `model`. `start` is an already
    /// scored starting point that later epochs must beat.
    fn phase<M: HasParams>(
        &mut self,
        phase: Phase,
        model: &mut M,
        start: Option<f64>,
        mut epoch: impl FnMut(&mut Self, &mut M, &mut AdamState, f64, usize) -> Result<f64>,
        score: impl Fn(&M) -> f64,
    ) -> Result<f64> {
        let mut schedule = ScheduleState::new(self.plan.optimizer.lr, &self.plan.schedule);
        let mut adam = AdamState::new(model.params());
        let mut best = model.params().clone();
        let mut best_score = f64::NEG_INFINITY;
        if let Some(s) = start {
            let decision = schedule.epoch_end(s);
            best_score = s;
            self.record(phase, 0, None, s, schedule.lr, decision);
        }
        for e in 1..=self.plan.schedule.max_epochs {
            let lr = schedule.lr;
            let first = self.step;
            let mut losses = vec![epoch(self, model, &mut adam, lr, e)?];
            while ((self.step - first) as usize) < self.plan.schedule.min_updates_per_epoch && self.step > first {
                losses.push(epoch(self, model, &mut adam, lr, e)?);
            }
            let loss = mean(&losses);
            let s = score(model);
            let decision = schedule.epoch_end(s);
            if schedule.improved() {
                best = model.params().clone();
                best_score = s;
            }
            self.record(phase, e, Some(loss), s, lr, decision);
            if decision == Decision::Stop {
                break;
            }
        }
        *model.params_mut() = best;
        Ok(best_score)
    }

    fn record(&mut self, phase: Phase, epoch: usize, loss: Option<f64>, score: f64, lr: f64, decision: Decision) {
        log::info!("{phase} epoch {epoch}: loss {loss:?} valid {score:.4} lr {lr:e} {decision}");
        self.log.epochs.push(EpochRecord {
            phase,
            epoch,
            train_loss: loss,
            valid_score: score,
            lr,
            decision,
        });
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Micro F1 of the tagger over `samples`.
pub fn tagger_f1(model: &TaggerModel, tables: &[LinearizedTable], gold: &[&[u8]], batch_size: usize) -> Result<f64> {
    let pred: Vec<Vec<u8>> = model.predict_all(tables, batch_size).into_iter().map(|p| p.labels).collect();
    Ok(evaluate_prf(&pred, gold, Averaging::Micro)?.f1)
}

/// Trains the key-fact tagger, keeping the epoch with the best validation
/// F1. An empty validation set falls back to the training set.
pub fn train_tagger(plan: &TrainPlan, train: &[AnnotatedSample], valid: &[AnnotatedSample]) -> Result<Trained<TaggerModel>> {
    plan.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("tagger training set"));
    }
    let cfg = plan.tagger.clone();
    let words = Vocabulary::build(train.iter().map(|s| s.table.words()), cfg.word_vocab_cap);
    let attributes = Vocabulary::build(train.iter().map(|s| s.table.attributes()), cfg.attr_vocab_cap);
    let mut model = TaggerModel::new(cfg, words, attributes)?;

    let valid = if valid.is_empty() { train } else { valid };
    let valid_tables: Vec<LinearizedTable> = valid.iter().map(|s| s.table.clone()).collect();
    let valid_gold: Vec<&[u8]> = valid.iter().map(|s| &s.labels[..]).collect();
    let bs = plan.optimizer.batch_size;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);

    let mut runner = Runner::new(plan);
    let best_score = runner.phase(
        Phase::Tagger,
        &mut model,
        None,
        |r, m, adam, lr, _| {
            let mut losses = Vec::new();
            for batch in epoch_batches(train.len(), bs, &mut rng) {
                let items: Vec<(&LinearizedTable, &[u8])> =
                    batch.iter().map(|&i| (&train[i].table, &train[i].labels[..])).collect();
                losses.push(r.update(m, adam, lr, |m, g| m.batch_loss(g, &items))?);
            }
            Ok(mean(&losses))
        },
        |m| tagger_f1(m, &valid_tables, &valid_gold, bs).unwrap_or(0.0),
    )?;
    Ok(Trained {
        model,
        best_score,
        log: runner.log,
    })
}

/// Token-level `(source, target)` pair.
pub type TokenPair = (Vec<String>, Vec<String>);

/// Realizer training data. Parallel pairs map key facts to text; pseudo
/// pairs map content words to text.
#[derive(Clone, Debug, Default)]
pub struct RealizerData {
    pub parallel: Vec<TokenPair>,
    pub valid: Vec<TokenPair>,
    pub pseudo: Vec<PseudoPair>,
    pub pseudo_valid: Vec<PseudoPair>,
}

impl RealizerData {
    /// Builds the shared vocabulary from every training source and target.
    pub fn vocabulary(&self, cap: usize) -> Vocabulary {
        let par = self.parallel.iter().flat_map(|(s, t)| [s, t]);
        let pse = self.pseudo.iter().flat_map(|p| [&p.source, &p.target]);
        Vocabulary::build(par.chain(pse).map(|v| v.iter().map(String::as_str)), cap)
    }
}

/// Held-out pseudo pairs when none are given: the last 5%, at most 200.
fn split_pseudo(data: &RealizerData) -> (Vec<PseudoPair>, Vec<PseudoPair>) {
    if !data.pseudo_valid.is_empty() || data.pseudo.is_empty() {
        return (data.pseudo.clone(), data.pseudo_valid.clone());
    }
    let n = data.pseudo.len();
    let hold = (n / 20).clamp(1, 200).min(n - 1);
    let (train, valid) = data.pseudo.split_at(n - hold);
    (train.to_vec(), valid.to_vec())
}

/// Corpus BLEU-4 of greedy output on `pairs`.
pub fn realizer_bleu(model: &Realizer, pairs: &[TokenPair], batch_size: usize) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let sources: Vec<Vec<String>> = pairs.iter().map(|(s, _)| s.clone()).collect();
    let refs: Vec<Vec<String>> = pairs.iter().map(|(_, t)| t.clone()).collect();
    let hyps = model.generate(&sources, batch_size);
    bleu4(&hyps, &refs).unwrap_or(0.0)
}

/// `(key facts, text)` pairs in the requested key-fact order. Samples
/// without key facts are skipped since the realizer would see an empty input.
pub fn key_fact_pairs(samples: &[AnnotatedSample], order: KeyFactOrder) -> Result<Vec<TokenPair>> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let facts = match order {
            KeyFactOrder::Table => s.key_facts(),
            KeyFactOrder::Text => extract_text_order(&s.table, &s.labels, &s.text)?,
        };
        if !facts.is_empty() {
            out.push((facts, s.text.clone()));
        }
    }
    Ok(out)
}

type IdPair = (Vec<usize>, Vec<usize>);

/// Trains the surface realizer. With pseudo pairs the default is two
/// phases (pretrain on pseudo, fine-tune on parallel, the pretrained model
/// scored first as the epoch-0 candidate); joint mode mixes batches.
pub fn train_realizer(plan: &TrainPlan, data: &RealizerData) -> Result<Trained<Realizer>> {
    plan.validate()?;
    if data.parallel.is_empty() && data.pseudo.is_empty() {
        return Err(Error::EmptyInput("realizer training set"));
    }
    let vocab = data.vocabulary(plan.realizer.vocab_cap);
    let mut model = Realizer::new(plan.realizer.clone(), vocab)?;
    let (pseudo, pseudo_valid) = split_pseudo(data);

    let encode = |m: &Realizer, s: &[String], t: &[String]| -> IdPair { m.encode_pair(s, t) };
    let par_ids: Vec<IdPair> = data.parallel.iter().map(|(s, t)| encode(&model, s, t)).collect();
    let pse_ids: Vec<IdPair> = pseudo.iter().map(|p| encode(&model, &p.source, &p.target)).collect();
    let donors = par_ids.iter().chain(&pse_ids).map(|(s, _)| s.clone()).collect();
    let denoiser = Denoiser::new(plan.noise.clone(), donors)?;
    let pse_valid: Vec<TokenPair> = pseudo_valid.iter().map(|p| (p.source.clone(), p.target.clone())).collect();

    let bs = plan.optimizer.batch_size;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut runner = Runner::new(plan);

    // One epoch over `ids` in shuffled batches.
    let mut sweep = |r: &mut Runner<'_>, m: &mut Realizer, adam: &mut AdamState, lr: f64, ids: &[IdPair], pseudo: bool| {
        let mut losses = Vec::new();
        for batch in epoch_batches(ids.len(), bs, &mut rng) {
            let raw: Vec<IdPair> = batch.iter().map(|&i| ids[i].clone()).collect();
            let noisy = denoiser.augment_batch(&raw, pseudo, &mut rng);
            losses.push(r.update(m, adam, lr, |m, g| Ok(batch_loss(m, g, &noisy)))?);
        }
        Ok::<f64, Error>(mean(&losses))
    };

    let best_score = if pse_ids.is_empty() {
        runner.phase(
            Phase::Parallel,
            &mut model,
            None,
            |r, m, adam, lr, _| sweep(r, m, adam, lr, &par_ids, false),
            |m| realizer_bleu(m, &data.valid, bs),
        )?
    } else if plan.mixing.mode == MixMode::TwoPhase || par_ids.is_empty() {
        let pretrain_valid = if pse_valid.is_empty() { &data.valid } else { &pse_valid };
        let pre = runner.phase(
            Phase::Pretrain,
            &mut model,
            None,
            |r, m, adam, lr, _| sweep(r, m, adam, lr, &pse_ids, true),
            |m| realizer_bleu(m, pretrain_valid, bs),
        )?;
        if par_ids.is_empty() {
            pre
        } else {
            let start = realizer_bleu(&model, &data.valid, bs);
            runner.phase(
                Phase::Finetune,
                &mut model,
                Some(start),
                |r, m, adam, lr, _| sweep(r, m, adam, lr, &par_ids, false),
                |m| realizer_bleu(m, &data.valid, bs),
            )?
        }
    } else {
        let per_epoch = par_ids.len().max(pse_ids.len()).div_ceil(bs);
        let mut mixer = BatchMixer::new(par_ids.len(), pse_ids.len(), plan.mixing.ratio, bs, plan.seed)?;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(plan.seed ^ 0x5EED);
        runner.phase(
            Phase::Joint,
            &mut model,
            None,
            |r, m, adam, lr, _| {
                let mut losses = Vec::new();
                for (source, batch) in mixer.by_ref().take(per_epoch) {
                    let (ids, pseudo) = match source {
                        BatchSource::Parallel => (&par_ids, false),
                        BatchSource::Pseudo => (&pse_ids, true),
                    };
                    let raw: Vec<IdPair> = batch.iter().map(|&i| ids[i].clone()).collect();
                    let noisy = denoiser.augment_batch(&raw, pseudo, &mut noise_rng);
                    losses.push(r.update(m, adam, lr, |m, g| Ok(batch_loss(m, g, &noisy)))?);
                }
                Ok(mean(&losses))
            },
            |m| realizer_bleu(m, &data.valid, bs),
        )?
    };
    Ok(Trained {
        model,
        best_score,
        log: runner.log,
    })
}

fn batch_loss(m: &Realizer, g: &mut Graph<'_>, pairs: &[IdPair]) -> Var {
    let refs: Vec<(&[usize], &[usize])> = pairs.iter().map(|(s, t)| (&s[..], &t[..])).collect();
    m.batch_loss(g, &refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyfact::{annotate_dataset, AnnotationMode, StopWords};
    use crate::synth::{generate, SynthSpec};
    use crate::training::Stage;

    fn tiny_plan(stage: Stage) -> TrainPlan {
        let mut p = TrainPlan::for_stage(stage);
        p.optimizer.batch_size = 8;
        p.optimizer.lr = 0.01;
        p.schedule.max_epochs = 3;
        p.tagger = crate::tagger::TaggerConfig {
            hidden_dim: 8,
            word_emb_dim: 6,
            attr_emb_dim: 4,
            pos_emb_dim: 2,
            ..Default::default()
        };
        p.realizer.vanilla.hidden_dim = 8;
        p.realizer.vanilla.emb_dim = 6;
        p.realizer.max_decode_len = 20;
        p
    }

    fn samples(n: usize) -> Vec<AnnotatedSample> {
        let c = generate(&SynthSpec {
            samples: n,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        annotate_dataset(&c.parallel, &StopWords::english(), AnnotationMode::TwoPass)
    }

    fn pairs(samples: &[AnnotatedSample]) -> Vec<TokenPair> {
        samples.iter().map(|s| (s.key_facts(), s.text.clone())).collect()
    }

    #[test]
    fn tagger_log_has_one_row_per_epoch() {
        let data = samples(24);
        let t = train_tagger(&tiny_plan(Stage::Tagger), &data[..16], &data[16..]).unwrap();
        assert_eq!(t.log.epochs.len(), 3);
        let tsv = t.log.tsv();
        assert_eq!(tsv.lines().count(), 4);
        assert!(tsv.starts_with("phase\tepoch\ttrain_loss\tvalid_score\tlr\tdecision"));
        let best = t.log.epochs.iter().map(|e| e.valid_score).fold(f64::MIN, f64::max);
        assert_eq!(t.best_score, best);
        let gold: Vec<&[u8]> = data[16..].iter().map(|s| &s.labels[..]).collect();
        let tables: Vec<_> = data[16..].iter().map(|s| s.table.clone()).collect();
        assert_eq!(tagger_f1(&t.model, &tables, &gold, 8).unwrap(), best);
    }

    #[test]
    fn small_sets_repeat_passes_up_to_the_update_minimum() {
        let data = samples(24);
        let mut plan = tiny_plan(Stage::Tagger);
        plan.schedule.max_epochs = 2;
        plan.schedule.min_updates_per_epoch = 5;
        let mut runner = Runner::new(&plan);
        let mut model = train_tagger(&plan, &data[..16], &[]).unwrap().model;
        let mut passes = 0;
        runner
            .phase(
                Phase::Tagger,
                &mut model,
                None,
                |r, m, adam, lr, _| {
                    passes += 1;
                    let items: Vec<_> = data[..8].iter().map(|s| (&s.table, &s.labels[..])).collect();
                    r.update(m, adam, lr, |m, g| m.batch_loss(g, &items))?;
                    r.update(m, adam, lr, |m, g| m.batch_loss(g, &items))
                },
                |_| 0.0,
            )
            .unwrap();
        assert_eq!((passes, runner.step), (6, 12));
    }

    #[test]
    fn two_phase_logs_the_pretrained_candidate() {
        let data = samples(40);
        let pseudo = data[10..]
            .iter()
            .map(|s| PseudoPair {
                source: s.key_facts(),
                target: s.text.clone(),
            })
            .collect();
        let rd = RealizerData {
            parallel: pairs(&data[..6]),
            valid: pairs(&data[6..10]),
            pseudo,
            pseudo_valid: Vec::new(),
        };
        let t = train_realizer(&tiny_plan(Stage::Realizer), &rd).unwrap();
        let phases: Vec<(Phase, usize)> = t.log.epochs.iter().map(|e| (e.phase, e.epoch)).collect();
        assert_eq!(&phases[..3], &[(Phase::Pretrain, 1), (Phase::Pretrain, 2), (Phase::Pretrain, 3)]);
        assert_eq!(phases[3], (Phase::Finetune, 0));
        assert!(t.log.epochs[3].train_loss.is_none());
        assert_eq!(phases.len(), 7);
    }

    #[test]
    fn joint_mode_and_reruns_are_deterministic() {
        let data = samples(30);
        let rd = RealizerData {
            parallel: pairs(&data[..8]),
            valid: pairs(&data[8..12]),
            pseudo: data[12..]
                .iter()
                .map(|s| PseudoPair {
                    source: s.key_facts(),
                    target: s.text.clone(),
                })
                .collect(),
            pseudo_valid: Vec::new(),
        };
        let mut plan = tiny_plan(Stage::Realizer);
        plan.mixing.mode = MixMode::Joint;
        let a = train_realizer(&plan, &rd).unwrap();
        let b = train_realizer(&plan, &rd).unwrap();
        assert!(a.log.epochs.iter().all(|e| e.phase == Phase::Joint));
        assert_eq!(a.log, b.log);
        assert_eq!(a.model.params, b.model.params);
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(train_tagger(&tiny_plan(Stage::Tagger), &[], &[]).is_err());
        assert!(train_realizer(&tiny_plan(Stage::Realizer), &RealizerData::default()).is_err());
    }
}
