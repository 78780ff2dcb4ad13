//! Central finite differences against the tape's analytic gradients, one
//! op family at a time.

use pivot_nn::layers::{BiLstm, Embedding, FeedForward, Init, LayerNorm, Linear, MultiHeadAttention};
use pivot_nn::{AttentionSpec, Graph, ParamSet, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-6;

/// Reduces any output to a scalar with a fixed pseudo-random weighting.
fn weighted_sum(g: &mut Graph<'_>, out: Var) -> Var {
    let (r, c) = g.shape(out);
    let w: Vec<f64> = (0..r * c).map(|i| ((i * 7919 % 13) as f64 - 6.0) / 6.0).collect();
    let w = g.constant(Tensor::from_vec(r, c, w));
    let prod = g.mul(out, w);
    let ones_c = g.constant(Tensor::filled(c, 1, 1.0));
    let col = g.matmul(prod, ones_c);
    let ones_r = g.constant(Tensor::filled(1, r, 1.0));
    g.matmul(ones_r, col)
}

fn check<F>(params: &mut ParamSet, f: F)
where
    F: Fn(&mut Graph<'_>) -> Var,
{
    let grads = {
        let mut g = Graph::new(params);
        let loss = f(&mut g);
        g.backward(loss)
    };
    let eval = |p: &ParamSet| {
        let mut g = Graph::new(p);
        let loss = f(&mut g);
        g.value(loss).item()
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        for i in 0..params.get(id).len() {
            let orig = params.get(id).data()[i];
            params.get_mut(id).data_mut()[i] = orig + EPS;
            let up = eval(params);
            params.get_mut(id).data_mut()[i] = orig - EPS;
            let down = eval(params);
            params.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            let analytic = grads.get(id).map_or(0.0, |t| t.data()[i]);
            let denom = numeric.abs().max(analytic.abs()).max(1e-4);
            assert!(
                (numeric - analytic).abs() / denom < TOL,
                "{}[{i}]: analytic {analytic} vs numeric {numeric}",
                params.name(id)
            );
        }
    }
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(11)
}

#[test]
fn elementwise_and_structural_ops() {
    let mut r = rng();
    let mut p = ParamSet::new();
    let a = p.add("a", Init::Normal(1.0).tensor(3, 4, &mut r));
    let b = p.add("b", Init::Normal(1.0).tensor(3, 4, &mut r));
    let row = p.add("row", Init::Normal(1.0).tensor(1, 4, &mut r));
    check(&mut p, |g| {
        let (a, b, row) = (g.param(a), g.param(b), g.param(row));
        let s = g.add(a, b);
        let m = g.mul(s, a);
        let t = g.tanh(m);
        let sg = g.sigmoid(b);
        let r2 = g.add_row(sg, row);
        let rl = g.relu(r2);
        let sc = g.scale(rl, 0.7);
        let cat = g.concat_cols(&[t, sc]);
        let sl = g.slice_cols(cat, 2, 5);
        let rows = g.concat_rows(&[sl, sl]);
        let sr = g.slice_rows(rows, 1, 4);
        let ga = g.gather_rows(sr, &[3, 0, 0, 2]);
        let other = g.slice_rows(rows, 0, 4);
        let bl = g.blend_rows(ga, other, &[1.0, 0.0, 0.3, 1.0]);
        weighted_sum(g, bl)
    });
}

#[test]
fn matmul_and_linear() {
    let mut r = rng();
    let mut p = ParamSet::new();
    let x = p.add("x", Init::Normal(1.0).tensor(5, 3, &mut r));
    let lin = Linear::new(&mut p, "lin", 3, 4, true, Init::Normal(0.5), &mut r);
    check(&mut p, |g| {
        let x = g.param(x);
        let y = lin.forward(g, x);
        weighted_sum(g, y)
    });
}

#[test]
fn cross_entropy_with_masked_rows() {
    let mut r = rng();
    let mut p = ParamSet::new();
    let logits = p.add("logits", Init::Normal(2.0).tensor(4, 5, &mut r));
    check(&mut p, |g| {
        let l = g.param(logits);
        g.cross_entropy(l, &[Some(1), None, Some(4), Some(0)])
    });
}

#[test]
fn layer_norm() {
    let mut r = rng();
    let mut p = ParamSet::new();
    let x = p.add("x", Init::Normal(1.0).tensor(3, 6, &mut r));
    let ln = LayerNorm::new(&mut p, "ln", 6);
    *p.get_mut(ln.gamma) = Init::Normal(1.0).tensor(1, 6, &mut r);
    *p.get_mut(ln.beta) = Init::Normal(1.0).tensor(1, 6, &mut r);
    check(&mut p, |g| {
        let x = g.param(x);
        let y = ln.forward(g, x);
        weighted_sum(g, y)
    });
}

#[test]
fn attention_masked_and_causal() {
    let mut r = rng();
    let mut p = ParamSet::new();
    let q = p.add("q", Init::Normal(1.0).tensor(2 * 3, 4, &mut r));
    let k = p.add("k", Init::Normal(1.0).tensor(2 * 3, 4, &mut r));
    let v = p.add("v", Init::Normal(1.0).tensor(2 * 3, 6, &mut r));
    for causal in [false, true] {
        check(&mut p, |g| {
            let (q, k, v) = (g.param(q), g.param(k), g.param(v));
            let spec = AttentionSpec {
                batch: 2,
                query_len: 3,
                key_len: 3,
                heads: 2,
                scale: 0.5,
                causal,
                key_lens: vec![3, 2],
            };
            let o = g.attention(q, k, v, spec);
            weighted_sum(g, o)
        });
    }
}

#[test]
fn bilstm_with_padding() {
    let mut r = rng();
    let mut p = ParamSet::new();
    let emb = Embedding::new(&mut p, "emb", 6, 3, Init::Normal(1.0), &mut r);
    let lstm = BiLstm::new(&mut p, "enc", 3, 4, Init::Uniform(0.5), &mut r);
    // time-major ids for batch 2, lengths 3 and 2
    let ids = [1, 2, 3, 4, 5, 0];
    check(&mut p, |g| {
        let x = emb.forward(g, &ids);
        let run = lstm.run(g, x, 2, &[3, 2]);
        let fin = g.concat_cols(&[run.forward.final_h, run.backward.final_c]);
        let a = weighted_sum(g, run.outputs);
        let b = weighted_sum(g, fin);
        g.add(a, b)
    });
}

#[test]
fn transformer_pieces() {
    let mut r = rng();
    let mut p = ParamSet::new();
    let x = p.add("x", Init::Normal(1.0).tensor(2 * 3, 4, &mut r));
    let mha = MultiHeadAttention::new(&mut p, "mha", 4, 2, &mut r);
    let ff = FeedForward::new(&mut p, "ff", 4, 8, &mut r);
    check(&mut p, |g| {
        let x = g.param(x);
        let (a, _) = mha.forward(g, x, x, 2, 3, 3, &[3, 1], true);
        let h = g.add(x, a);
        let y = ff.forward(g, h, 0.0);
        weighted_sum(g, y)
    });
}

#[test]
fn dropout_only_in_training() {
    let mut p = ParamSet::new();
    let x = p.add("x", Tensor::filled(4, 4, 1.0));
    let mut g = Graph::new(&p);
    let xv = g.param(x);
    let y = g.dropout(xv, 0.5);
    assert_eq!(g.value(y), p.get(x));

    let mut g = Graph::training(&p, 3);
    let xv = g.param(x);
    let y = g.dropout(xv, 0.5);
    assert!(g.value(y).data().iter().all(|&v| v == 0.0 || v == 2.0));
}
