//! End to end: tagger and realizer trained from 100 parallel samples plus
//! unlabeled text, then tables in, sentences out.

use pivotgen::corpus::Table;
use pivotgen::keyfact::{annotate_dataset, AnnotationMode, StopWords};
use pivotgen::metrics::evaluate;
use pivotgen::pipeline::Pipeline;
use pivotgen::pseudo::{build_pseudo_corpus, ContentTagSet, LexiconTagger};
use pivotgen::realizer::{RealizerConfig, Variant};
use pivotgen::synth::{generate, SynthSpec};
use pivotgen::tagger::TaggerConfig;
use pivotgen::training::{key_fact_pairs, train_realizer, train_tagger, KeyFactOrder, RealizerData, Stage, TrainPlan};

fn main() -> pivotgen::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let stops = StopWords::english();
    let synth = |samples, seed, unlabeled_fraction| {
        generate(&SynthSpec {
            samples,
            seed,
            unlabeled_fraction,
            ..Default::default()
        })
    };
    let labeled = annotate_dataset(&synth(150, 1, 0.0)?.parallel, &stops, AnnotationMode::TwoPass);
    let (train, valid) = labeled.split_at(100);
    let unlabeled = synth(2000, 2, 1.0)?.unlabeled;
    let test = synth(50, 3, 0.0)?.parallel;

    let mut tagger_plan = TrainPlan::for_stage(Stage::Tagger);
    tagger_plan.tagger = TaggerConfig::desk();
    tagger_plan.schedule.min_updates_per_epoch = 25;
    let tagger = train_tagger(&tagger_plan, train, valid)?.model;

    let mut realizer_plan = TrainPlan::for_stage(Stage::Realizer);
    realizer_plan.realizer = RealizerConfig::desk(Variant::Vanilla);
    realizer_plan.schedule.min_updates_per_epoch = 100;
    let pseudo = build_pseudo_corpus(&unlabeled, &LexiconTagger::english(), &ContentTagSet::default(), 60)?;
    let data = RealizerData {
        parallel: key_fact_pairs(train, KeyFactOrder::Table)?,
        valid: key_fact_pairs(valid, KeyFactOrder::Table)?,
        pseudo: pseudo.pairs,
        pseudo_valid: Vec::new(),
    };
    let realizer = train_realizer(&realizer_plan, &data)?.model;

    let pipeline = Pipeline::new(tagger, realizer)?;
    let tables: Vec<Table> = test.iter().map(|s| s.table.clone()).collect();
    let out = pipeline.generate(&tables)?;
    for (sel, text) in out.selections.iter().zip(&out.texts).take(3) {
        println!("{}\n  -> {}", sel.facts.join(" "), text.join(" "));
    }
    let refs: Vec<Vec<String>> = test.iter().map(|s| s.text.0.clone()).collect();
    println!("BLEU\tNIST\tROUGE\n{}", evaluate(&out.texts, &refs)?.tsv());
    Ok(())
}
