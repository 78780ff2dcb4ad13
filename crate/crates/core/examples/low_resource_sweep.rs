//! Pivot pipeline against its ablations and an end-to-end baseline with
//! 100 parallel samples and 4,900 unlabeled texts.
//!
//! cargo run --release --example low_resource_sweep -- [pool] [k]

use std::time::Instant;

use pivotgen::experiment::{run_experiment, ExperimentData, ExperimentSpec, System};
use pivotgen::keyfact::StopWords;
use pivotgen::pseudo::LexiconTagger;
use pivotgen::realizer::Variant;
use pivotgen::synth::{generate, SynthSpec};

fn corpus(samples: usize, seed: u64, prefix: &str) -> pivotgen::Result<Vec<pivotgen::corpus::ParallelSample>> {
    let spec = SynthSpec {
        samples,
        seed,
        id_prefix: prefix.into(),
        ..Default::default()
    };
    Ok(generate(&spec)?.parallel)
}

fn main() -> pivotgen::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let pool = args.next().unwrap_or(5000);
    let k = args.next().unwrap_or(100);

    let data = ExperimentData {
        pool: corpus(pool, 1, "pool")?,
        unlabeled: Vec::new(),
        valid: corpus(100, 2, "valid")?,
        test: corpus(200, 3, "test")?,
    };
    let spec = ExperimentSpec {
        sizes: vec![k],
        variants: vec![Variant::Vanilla],
        systems: vec![System::Pivot, System::NoPseudo, System::EndToEnd],
        ..ExperimentSpec::desk()
    };
    let start = Instant::now();
    let results = run_experiment(&spec, &data, &StopWords::english(), &LexiconTagger::english())?;
    print!("{}", results.tsv());
    eprintln!("finished in {:.1?}", start.elapsed());
    Ok(())
}
