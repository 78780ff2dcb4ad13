//! Pretrains the realizer on pseudo pairs from unlabeled text, fine-tunes
//! on a few parallel pairs and reports test BLEU.
//!
//! cargo run --release --example train_realizer -- [vanilla|transformer]

use pivotgen::keyfact::{annotate_dataset, AnnotationMode, StopWords};
use pivotgen::pseudo::{build_pseudo_corpus, ContentTagSet, LexiconTagger};
use pivotgen::realizer::{RealizerConfig, Variant};
use pivotgen::synth::{generate, SynthSpec};
use pivotgen::training::{key_fact_pairs, realizer_bleu, train_realizer, KeyFactOrder, RealizerData, Stage, TrainPlan};

fn main() -> pivotgen::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let variant: Variant = std::env::args().nth(1).unwrap_or_else(|| "vanilla".into()).parse()?;
    let labeled = generate(&SynthSpec {
        samples: 250,
        seed: 1,
        ..Default::default()
    })?;
    let unlabeled = generate(&SynthSpec {
        samples: 1500,
        unlabeled_fraction: 1.0,
        seed: 2,
        ..Default::default()
    })?;

    let annotated = annotate_dataset(&labeled.parallel, &StopWords::english(), AnnotationMode::TwoPass);
    let pairs = key_fact_pairs(&annotated, KeyFactOrder::Table)?;
    let (train, rest) = pairs.split_at(50);
    let (valid, test) = rest.split_at(100);
    let pseudo = build_pseudo_corpus(&unlabeled.unlabeled, &LexiconTagger::english(), &ContentTagSet::default(), 60)?;

    let mut plan = TrainPlan::for_stage(Stage::Realizer);
    plan.realizer = RealizerConfig::desk(variant);
    plan.schedule.max_epochs = 15;
    plan.schedule.min_updates_per_epoch = 100;
    let data = RealizerData {
        parallel: train.to_vec(),
        valid: valid.to_vec(),
        pseudo: pseudo.pairs,
        pseudo_valid: Vec::new(),
    };
    let trained = train_realizer(&plan, &data)?;
    println!("{}", trained.log.tsv());

    let sample = trained.model.generate(&[test[0].0.clone()], 1);
    println!("input:  {}\noutput: {}", test[0].0.join(" "), sample[0].join(" "));
    println!("test BLEU {:.2}", 100.0 * realizer_bleu(&trained.model, test, 64));
    trained.model.save("realizer.ckpt")?;
    Ok(())
}
