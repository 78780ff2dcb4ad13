//! Generates a small biography corpus and writes it as pipeline inputs.
//!
//! cargo run --example synth_corpus -- out/synth

use pivotgen::synth::{generate, SynthSpec};

fn main() -> pivotgen::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "synth_out".into());
    let spec = SynthSpec {
        samples: 200,
        unlabeled_fraction: 0.5,
        seed: 7,
        ..Default::default()
    };
    let corpus = generate(&spec)?;
    for s in corpus.parallel.iter().take(3) {
        let table: Vec<String> = s.table.records().iter().map(|r| format!("{}={}", r.attribute, r.value.join(" "))).collect();
        println!("{}\n  table: {}\n  text:  {}", s.id, table.join(" | "), s.text.joined());
    }
    corpus.write(&dir)?;
    println!(
        "wrote {} parallel and {} unlabeled samples to {dir}",
        corpus.parallel.len(),
        corpus.unlabeled.len()
    );
    Ok(())
}
