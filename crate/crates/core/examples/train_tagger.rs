//! Trains the key-fact tagger on annotated synthetic samples and saves it.
//!
//! cargo run --release --example train_tagger -- [train size]

use pivotgen::keyfact::{annotate_dataset, AnnotationMode, StopWords};
use pivotgen::synth::{generate, SynthSpec};
use pivotgen::tagger::TaggerConfig;
use pivotgen::training::{tagger_f1, train_tagger, Stage, TrainPlan};

fn main() -> pivotgen::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let n: usize = std::env::args().nth(1).map_or(300, |a| a.parse().expect("numeric size"));
    let corpus = generate(&SynthSpec {
        samples: n + 200,
        seed: 1,
        ..Default::default()
    })?;
    let data = annotate_dataset(&corpus.parallel, &StopWords::english(), AnnotationMode::TwoPass);
    let (train, rest) = data.split_at(n);
    let (valid, test) = rest.split_at(100);

    let mut plan = TrainPlan::for_stage(Stage::Tagger);
    plan.tagger = TaggerConfig::desk();
    plan.schedule.max_epochs = 20;
    plan.schedule.min_updates_per_epoch = 25;
    let trained = train_tagger(&plan, train, valid)?;

    let tables: Vec<_> = test.iter().map(|s| s.table.clone()).collect();
    let gold: Vec<&[u8]> = test.iter().map(|s| &s.labels[..]).collect();
    println!("{}", trained.log.tsv());
    println!("test F1 {:.2}", 100.0 * tagger_f1(&trained.model, &tables, &gold, 64)?);
    trained.model.save("tagger.ckpt")?;
    Ok(())
}
