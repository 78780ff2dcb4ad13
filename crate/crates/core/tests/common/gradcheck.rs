//! Finite-difference checks of both stages' analytic gradients.

use pivot_nn::{Graph, ParamSet};
use pivotgen::corpus::{linearize, Record, Table, Vocabulary};
use pivotgen::realizer::{Realizer, RealizerConfig, TransformerConfig, VanillaConfig, Variant};
use pivotgen::tagger::{TaggerConfig, TaggerModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-3;

/// Worst relative error between analytic and central-difference gradients
/// on a random ~1% of the scalars (at least two per tensor).
fn check(params: &ParamSet, loss: impl Fn(&ParamSet) -> f64, analytic: impl Fn(&ParamSet) -> pivot_nn::Gradients) -> f64 {
    let grads = analytic(params);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    let mut worst = 0.0f64;
    for (id, _, t) in params.iter() {
        let n = t.data().len();
        let picks = (n / 100).max(2).min(n);
        for _ in 0..picks {
            let k = rng.gen_range(0..n);
            let mut plus = params.clone();
            plus.get_mut(id).data_mut()[k] += EPS;
            let mut minus = params.clone();
            minus.get_mut(id).data_mut()[k] -= EPS;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * EPS);
            let a = grads.get(id).map_or(0.0, |g| g.data()[k]);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(err);
            checked += 1;
        }
    }
    assert!(checked > 0);
    worst
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn realizer(variant: Variant) -> Realizer {
    let config = RealizerConfig {
        variant,
        vanilla: VanillaConfig {
            hidden_dim: 6,
            emb_dim: 5,
            dropout: 0.0,
            init_scale: 0.3,
        },
        transformer: TransformerConfig {
            model_dim: 8,
            ff_dim: 10,
            heads: 2,
            blocks: 1,
            dropout: 0.0,
        },
        ..Default::default()
    };
    let vocab = Vocabulary::build([["ada", "lovelace", "writer", "is", "a"]], 50);
    Realizer::new(config, vocab).unwrap()
}

pub fn realizer_worst_error(variant: Variant) -> f64 {
    let m = realizer(variant);
    let a = m.encode_pair(&words("ada lovelace writer"), &words("ada is a"));
    let b = m.encode_pair(&words("writer"), &words("lovelace writer"));
    let pairs = [(&a.0[..], &a.1[..]), (&b.0[..], &b.1[..])];
    let loss = |p: &ParamSet| {
        let mut g = Graph::new(p);
        let l = m.batch_loss(&mut g, &pairs);
        g.value(l).item()
    };
    let analytic = |p: &ParamSet| {
        let mut g = Graph::new(p);
        let l = m.batch_loss(&mut g, &pairs);
        g.backward(l)
    };
    check(&m.params, loss, analytic)
}

pub fn tagger_worst_error() -> f64 {
    let t1 = Table::new(vec![
        Record::from_raw("name", "ada lovelace").unwrap(),
        Record::from_raw("occupation", "writer").unwrap(),
    ])
    .unwrap();
    let t2 = Table::new(vec![Record::from_raw("born", "1815").unwrap()]).unwrap();
    let (l1, l2) = (linearize(&t1), linearize(&t2));
    let config = TaggerConfig {
        hidden_dim: 5,
        word_emb_dim: 4,
        attr_emb_dim: 3,
        pos_emb_dim: 2,
        dropout: 0.0,
        init_scale: 0.3,
        ..Default::default()
    };
    let wv = Vocabulary::build([l1.words(), l2.words()], 50);
    let av = Vocabulary::build([l1.attributes(), l2.attributes()], 50);
    let m = TaggerModel::new(config, wv, av).unwrap();
    let samples: [(&_, &[u8]); 2] = [(&l1, &[1, 0, 1]), (&l2, &[0])];
    let loss = |p: &ParamSet| {
        let mut g = Graph::new(p);
        let l = m.batch_loss(&mut g, &samples).unwrap();
        g.value(l).item()
    };
    let analytic = |p: &ParamSet| {
        let mut g = Graph::new(p);
        let l = m.batch_loss(&mut g, &samples).unwrap();
        g.backward(l)
    };
    check(&m.params, loss, analytic)
}
