//! Corpus BLEU-4, NIST-4 and ROUGE-4 for a handful of hypotheses.

use pivotgen::metrics::evaluate;

fn main() -> pivotgen::Result<()> {
    let split = |s: &str| s.split(' ').map(str::to_owned).collect::<Vec<_>>();
    let refs: Vec<Vec<String>> = [
        "ada lovelace ( born 10 december 1815 in london ) is a british mathematician .",
        "alan turing , a british computer scientist , was born on 23 june 1912 .",
    ]
    .map(split)
    .into();
    let hyps: Vec<Vec<String>> = [
        "ada lovelace ( born 10 december 1815 in london ) is a british writer .",
        "alan turing , a computer scientist , was born on 23 june 1912 .",
    ]
    .map(split)
    .into();
    let report = evaluate(&hyps, &refs)?;
    println!("BLEU\tNIST\tROUGE\n{}", report.tsv());
    Ok(())
}
