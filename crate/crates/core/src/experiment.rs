//! Parallel-size sweeps and ablations.
//!
//! For each size K the pool is shuffled, the first K samples stay parallel
//! and the rest lose their tables and join the unlabeled texts. A tagger is
//! trained on the K samples, then one realizer per system and variant.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{linearize, LinearizedTable, ParallelSample, UnlabeledSample};
use crate::denoise::NoiseConfig;
use crate::error::{Error, Result};
use crate::keyfact::{annotate_dataset, AnnotatedSample, AnnotationMode, StopWords};
use crate::metrics::{evaluate, MetricReport};
use crate::pipeline::select;
use crate::pseudo::{build_pseudo_corpus, ContentTagSet, PosBackend, PseudoPair};
use crate::realizer::Variant;
use crate::tagger::TaggerModel;
use crate::training::{
    key_fact_pairs, tagger_f1, train_realizer, train_tagger, RealizerData, Stage, TokenPair, TrainPlan,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum System {
    /// Tagger plus a realizer pretrained on pseudo pairs with denoising.
    Pivot,
    NoPseudo,
    NoDenoise,
    /// A vanilla realizer reading every table value, no tagger.
    EndToEnd,
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::Pivot => "pivot",
            System::NoPseudo => "no-pseudo",
            System::NoDenoise => "no-denoise",
            System::EndToEnd => "end-to-end",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Parallel sizes, ascending.
    pub sizes: Vec<usize>,
    pub variants: Vec<Variant>,
    /// Realizer systems per size; empty trains and scores taggers only.
    pub systems: Vec<System>,
    pub seed: u64,
    /// Unlabeled texts longer than this are not used for pseudo pairs.
    pub max_pseudo_len: usize,
    pub tagger: TrainPlan,
    pub realizer: TrainPlan,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            sizes: vec![100, 300, 1000, 3000],
            variants: vec![Variant::Vanilla, Variant::Transformer],
            systems: vec![System::Pivot],
            seed: 0,
            max_pseudo_len: 60,
            tagger: TrainPlan::for_stage(Stage::Tagger),
            realizer: TrainPlan::for_stage(Stage::Realizer),
        }
    }
}

impl ExperimentSpec {
    /// Small model dimensions that train on one CPU core in minutes.
    pub fn desk() -> Self {
        let mut spec = ExperimentSpec::default();
        spec.tagger.tagger = crate::tagger::TaggerConfig::desk();
        spec.realizer.realizer = crate::realizer::RealizerConfig::desk(Variant::Vanilla);
        spec.tagger.schedule.min_updates_per_epoch = 25;
        spec.realizer.schedule.min_updates_per_epoch = 100;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) || !self.sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!("sizes must be positive and ascending, got {:?}", self.sizes)));
        }
        if self.variants.is_empty() && self.systems.iter().any(|s| *s != System::EndToEnd) {
            return Err(Error::Config("no realizer variants given".into()));
        }
        if self.tagger.stage != Stage::Tagger || self.realizer.stage != Stage::Realizer {
            return Err(Error::Config("tagger and realizer plans have the wrong stage".into()));
        }
        self.tagger.validate()?;
        self.realizer.validate()
    }
}

/// Inputs to a sweep. `valid` drives early stopping and `test` is scored.
#[derive(Clone, Debug, Default)]
pub struct ExperimentData {
    pub pool: Vec<ParallelSample>,
    pub unlabeled: Vec<UnlabeledSample>,
    pub valid: Vec<ParallelSample>,
    pub test: Vec<ParallelSample>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub size: usize,
    /// `None` on tagger-only rows.
    pub system: Option<System>,
    pub variant: Option<Variant>,
    pub report: Option<MetricReport>,
    pub tagger_f1: Option<f64>,
    pub config_hash: String,
    /// SHA-256 of the tagger and realizer checkpoints behind the row.
    pub tagger_digest: Option<String>,
    pub realizer_digest: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
}

impl ExperimentResults {
    /// Scores as percentages except NIST; `-` marks a column that does not
    /// apply to the row.
    pub fn tsv(&self) -> String {
        let mut out = String::from("k\tsystem\tvariant\tbleu\tnist\trouge\ttagger_f1\tconfig_hash\n");
        for r in &self.rows {
            let dash = || "-".to_string();
            let metrics = r.report.as_ref().map_or_else(|| "-\t-\t-".to_string(), MetricReport::tsv);
            out.push_str(&format!(
                "{}\t{}\t{}\t{metrics}\t{}\t{}\n",
                r.size,
                r.system.map_or_else(|| "tagger".to_string(), |s| s.to_string()),
                r.variant.map_or_else(dash, |v| v.to_string()),
                r.tagger_f1.map_or_else(dash, |f| format!("{:.2}", 100.0 * f)),
                r.config_hash,
            ));
        }
        out
    }

    pub fn find(&self, size: usize, system: System, variant: Variant) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.size == size && r.system == Some(system) && r.variant == Some(variant))
    }
}

#[derive(Serialize)]
struct HashInput<'a> {
    size: usize,
    system: Option<System>,
    variant: Option<Variant>,
    seed: u64,
    tagger: &'a TrainPlan,
    realizer: Option<&'a TrainPlan>,
}

fn config_hash(input: &HashInput<'_>) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(input).expect("serializable")))
}

fn table_pairs(samples: &[AnnotatedSample]) -> Vec<TokenPair> {
    samples
        .iter()
        .map(|s| (s.table.words().map(String::from).collect(), s.text.clone()))
        .collect()
}

/// Runs the sweep described by `spec`.
pub fn run_experiment(
    spec: &ExperimentSpec,
    data: &ExperimentData,
    stops: &StopWords,
    backend: &dyn PosBackend,
) -> Result<ExperimentResults> {
    spec.validate()?;
    if let Some(&k) = spec.sizes.iter().find(|&&k| k > data.pool.len()) {
        return Err(Error::NotEnoughData {
            requested: k,
            available: data.pool.len(),
        });
    }
    if data.test.is_empty() {
        return Err(Error::EmptyInput("experiment test set"));
    }
    let mode = AnnotationMode::default();
    let valid = annotate_dataset(&data.valid, stops, mode);
    let test = annotate_dataset(&data.test, stops, mode);
    let test_tables: Vec<LinearizedTable> = data.test.iter().map(|s| linearize(&s.table)).collect();
    let test_gold: Vec<&[u8]> = test.iter().map(|s| &s.labels[..]).collect();
    let test_refs: Vec<Vec<String>> = test.iter().map(|s| s.text.clone()).collect();
    let order = spec.realizer.data.key_fact_order;

    let mut shuffled = data.pool.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));

    let mut tagger_plan = spec.tagger.clone();
    tagger_plan.seed = spec.seed;
    let mut results = ExperimentResults::default();
    for &k in &spec.sizes {
        let (parallel, rest) = shuffled.split_at(k);
        let train = annotate_dataset(parallel, stops, mode);
        let base_hash = |system, variant, realizer: Option<&TrainPlan>| {
            config_hash(&HashInput {
                size: k,
                system,
                variant,
                seed: spec.seed,
                tagger: &tagger_plan,
                realizer,
            })
        };

        let needs_tagger = spec.systems.is_empty() || spec.systems.iter().any(|s| *s != System::EndToEnd);
        let mut tagger: Option<(TaggerModel, f64, String)> = None;
        if needs_tagger {
            log::info!("k={k}: training tagger");
            let t = train_tagger(&tagger_plan, &train, &valid)?;
            let f1 = tagger_f1(&t.model, &test_tables, &test_gold, tagger_plan.optimizer.batch_size)?;
            let digest = t.model.to_checkpoint()?.digest()?;
            tagger = Some((t.model, f1, digest));
        }
        if spec.systems.is_empty() {
            results.rows.push(ResultRow {
                size: k,
                system: None,
                variant: None,
                report: None,
                tagger_f1: tagger.as_ref().map(|t| t.1),
                config_hash: base_hash(None, None, None),
                tagger_digest: tagger.as_ref().map(|t| t.2.clone()),
                realizer_digest: None,
            });
            continue;
        }

        let predicted: Vec<Vec<String>> = match &tagger {
            Some((model, _, _)) => {
                let preds = model.predict_all(&test_tables, tagger_plan.optimizer.batch_size);
                test_tables
                    .iter()
                    .zip(&preds)
                    .map(|(t, p)| select(t, p).map(|s| s.facts))
                    .collect::<Result<_>>()?
            }
            None => Vec::new(),
        };

        let uses_pseudo = spec.systems.iter().any(|s| matches!(s, System::Pivot | System::NoDenoise));
        let pseudo: Vec<PseudoPair> = if uses_pseudo {
            let mut texts: Vec<UnlabeledSample> = rest.iter().cloned().map(ParallelSample::into_unlabeled).collect();
            texts.extend(data.unlabeled.iter().cloned());
            if spec.realizer.data.use_parallel_text_for_pseudo {
                texts.extend(parallel.iter().cloned().map(ParallelSample::into_unlabeled));
            }
            build_pseudo_corpus(&texts, backend, &ContentTagSet::default(), spec.max_pseudo_len)?.pairs
        } else {
            Vec::new()
        };
        let fact_data = RealizerData {
            parallel: key_fact_pairs(&train, order)?,
            valid: key_fact_pairs(&valid, order)?,
            pseudo: Vec::new(),
            pseudo_valid: Vec::new(),
        };

        for &system in &spec.systems {
            let variants = if system == System::EndToEnd {
                vec![Variant::Vanilla]
            } else {
                spec.variants.clone()
            };
            for variant in variants {
                let mut plan = spec.realizer.clone();
                plan.seed = spec.seed;
                plan.realizer.variant = variant;
                let mut rd = fact_data.clone();
                let sources = match system {
                    System::Pivot => {
                        rd.pseudo = pseudo.clone();
                        predicted.clone()
                    }
                    System::NoDenoise => {
                        rd.pseudo = pseudo.clone();
                        plan.noise = NoiseConfig::off();
                        predicted.clone()
                    }
                    System::NoPseudo => predicted.clone(),
                    System::EndToEnd => {
                        plan.noise = NoiseConfig::off();
                        rd.parallel = table_pairs(&train);
                        rd.valid = table_pairs(&valid);
                        test_tables.iter().map(|t| t.words().map(String::from).collect()).collect()
                    }
                };
                log::info!("k={k}: training {system} {variant}");
                let trained = train_realizer(&plan, &rd)?;
                let hyps = trained.model.generate(&sources, plan.optimizer.batch_size);
                let report = evaluate(&hyps, &test_refs)?;
                log::info!("k={k} {system} {variant}: {}", report.tsv());
                results.rows.push(ResultRow {
                    size: k,
                    system: Some(system),
                    variant: Some(variant),
                    report: Some(report),
                    tagger_f1: tagger.as_ref().filter(|_| system != System::EndToEnd).map(|t| t.1),
                    config_hash: base_hash(Some(system), Some(variant), Some(&plan)),
                    tagger_digest: tagger.as_ref().filter(|_| system != System::EndToEnd).map(|t| t.2.clone()),
                    realizer_digest: Some(trained.model.to_checkpoint()?.digest()?),
                });
            }
        }
    }
    Ok(results)
}
