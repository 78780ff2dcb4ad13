//! Turns unlabeled sentences into (content words, sentence) pairs.

use pivotgen::pseudo::{build_pseudo_corpus, ContentTagSet, LexiconTagger};
use pivotgen::synth::{generate, SynthSpec};

fn main() -> pivotgen::Result<()> {
    let corpus = generate(&SynthSpec {
        samples: 300,
        unlabeled_fraction: 1.0,
        seed: 11,
        ..Default::default()
    })?;
    let built = build_pseudo_corpus(&corpus.unlabeled, &LexiconTagger::english(), &ContentTagSet::default(), 60)?;
    for p in built.pairs.iter().take(5) {
        println!("{}\n  -> {}", p.source.join(" "), p.target.join(" "));
    }
    println!(
        "{} pairs, {} dropped as empty, {} dropped as too long",
        built.pairs.len(),
        built.dropped_empty,
        built.dropped_long
    );
    Ok(())
}
