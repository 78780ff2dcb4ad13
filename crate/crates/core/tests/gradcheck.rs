mod common;

use common::gradcheck::{realizer_worst_error, tagger_worst_error, REL_TOL};
use pivotgen::realizer::Variant;

#[test]
fn vanilla_realizer_gradients() {
    let worst = realizer_worst_error(Variant::Vanilla);
    assert!(worst < REL_TOL, "{worst:e}");
}

#[test]
fn transformer_realizer_gradients() {
    let worst = realizer_worst_error(Variant::Transformer);
    assert!(worst < REL_TOL, "{worst:e}");
}

#[test]
fn tagger_gradients() {
    let worst = tagger_worst_error();
    assert!(worst < REL_TOL, "{worst:e}");
}
