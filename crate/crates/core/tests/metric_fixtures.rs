//! Frozen metric values computed by hand outside this crate.

use pivotgen::metrics::{bleu4, nist4, rouge4_f};

fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
    lines.iter().map(|l| l.split_whitespace().map(String::from).collect()).collect()
}

const TOL: f64 = 1e-4;

#[test]
fn bleu_brevity_fixture() {
    let b = bleu4(&corpus(&["a b c d"]), &corpus(&["a b c d e"])).unwrap();
    assert!((b - 0.778_800_783_071_404_9).abs() < TOL, "{b}");
}

#[test]
fn rouge_overlap_fixture() {
    let f = rouge4_f(&corpus(&["a b c d e"]), &corpus(&["a b c d"])).unwrap();
    assert!((f - 2.0 / 3.0).abs() < TOL, "{f}");
}

#[test]
fn nist_two_segment_fixture() {
    let refs = corpus(&["the cat sat on a mat", "the dog ran in a park"]);
    let hyps = corpus(&["the cat sat on the mat", "a dog ran in the park today"]);
    let n = nist4(&hyps, &refs).unwrap();
    assert!((n - 2.893_569_668_442_376).abs() < TOL, "{n}");
}

#[test]
fn nist_two_segment_fixture_with_length_penalty() {
    let refs = corpus(&["the cat sat on a mat", "the dog ran in a park"]);
    let hyps = corpus(&["the cat sat", "the dog ran in the park"]);
    let n = nist4(&hyps, &refs).unwrap();
    assert!((n - 2.292_765_981_620_008).abs() < TOL, "{n}");
}
