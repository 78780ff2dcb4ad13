//! Labels table tokens that reappear in the text and reports coverage.

use pivotgen::keyfact::{annotate_dataset, coverage_stats, AnnotationMode, StopWords};
use pivotgen::synth::{generate, SynthSpec};

fn main() -> pivotgen::Result<()> {
    let corpus = generate(&SynthSpec {
        samples: 500,
        seed: 3,
        ..Default::default()
    })?;
    let stops = StopWords::english();
    let annotated = annotate_dataset(&corpus.parallel, &stops, AnnotationMode::TwoPass);

    let first = &annotated[0];
    println!("text: {}", first.text.join(" "));
    for (tok, label) in first.table.tokens.iter().zip(first.labels.iter()) {
        println!("  {label} {:<12} {}", tok.attribute, tok.word);
    }
    println!("key facts: {}", first.key_facts().join(" "));

    let agree = annotated.iter().zip(&corpus.gold).filter(|(a, g)| a.labels.0 == **g).count();
    println!("matches generator labels on {agree}/{} samples", annotated.len());
    println!("{}", serde_json::to_string_pretty(&coverage_stats(&annotated, &stops)).expect("stats serialize"));
    Ok(())
}
