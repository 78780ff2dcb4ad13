use pivot_nn::layers::{BiLstm, Embedding, Init, Linear, Lstm};
use pivot_nn::{AttentionSpec, Graph, ParamSet, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{distributions, to_batch_major, Padded};
use crate::corpus::BOS;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VanillaConfig {
    pub hidden_dim: usize,
    pub emb_dim: usize,
    pub dropout: f64,
    pub init_scale: f64,
}

impl Default for VanillaConfig {
    fn default() -> Self {
        VanillaConfig {
            hidden_dim: 500,
            emb_dim: 400,
            dropout: 0.2,
            init_scale: 0.1,
        }
    }
}

impl VanillaConfig {
    pub fn desk() -> Self {
        VanillaConfig {
            hidden_dim: 128,
            emb_dim: 64,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.emb_dim == 0 || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("invalid vanilla realizer settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub(super) struct VanillaNet {
    src_emb: Embedding,
    tgt_emb: Embedding,
    encoder: BiLstm,
    bridge_h: Linear,
    bridge_c: Linear,
    decoder: Lstm,
    /// `W_a` of the bilinear score `s_t W_a h_j`.
    score: Linear,
    combine: Linear,
    generator: Linear,
    dropout: f64,
}

pub(super) struct Encoded {
    /// Encoder states, batch-major `batch * steps x 2 hidden`.
    pub keys: Var,
    pub h0: Var,
    pub c0: Var,
    pub steps: usize,
    pub lens: Vec<usize>,
}

impl VanillaNet {
    pub fn new<R: Rng>(c: &VanillaConfig, vocab: usize, params: &mut ParamSet, rng: &mut R) -> Self {
        let init = Init::Uniform(c.init_scale);
        let (e, h) = (c.emb_dim, c.hidden_dim);
        VanillaNet {
            src_emb: Embedding::new(params, "realizer.src_emb", vocab, e, init, rng),
            tgt_emb: Embedding::new(params, "realizer.tgt_emb", vocab, e, init, rng),
            encoder: BiLstm::new(params, "realizer.encoder", e, h, init, rng),
            bridge_h: Linear::new(params, "realizer.bridge_h", 2 * h, h, true, init, rng),
            bridge_c: Linear::new(params, "realizer.bridge_c", 2 * h, h, true, init, rng),
            decoder: Lstm::new(params, "realizer.decoder", e, h, init, rng),
            score: Linear::new(params, "realizer.attn_score", h, 2 * h, false, init, rng),
            combine: Linear::new(params, "realizer.attn_combine", 3 * h, h, true, init, rng),
            generator: Linear::new(params, "realizer.generator", h, vocab, true, init, rng),
            dropout: c.dropout,
        }
    }

    pub fn encode(&self, g: &mut Graph<'_>, src: &Padded) -> Encoded {
        let x = self.src_emb.forward(g, &src.time_major());
        let x = g.dropout(x, self.dropout);
        let run = self.encoder.run(g, x, src.batch, &src.lens);
        let keys = g.gather_rows(run.outputs, &to_batch_major(src.batch, src.steps));
        let fh = g.concat_cols(&[run.forward.final_h, run.backward.final_h]);
        let fc = g.concat_cols(&[run.forward.final_c, run.backward.final_c]);
        Encoded {
            keys,
            h0: self.bridge_h.forward(g, fh),
            c0: self.bridge_c.forward(g, fc),
            steps: src.steps,
            lens: src.lens.clone(),
        }
    }

    /// Attention, combination and generator for batch-major decoder states
    /// (`batch * qlen` rows). Returns `(logits, attention node)`.
    fn readout(&self, g: &mut Graph<'_>, s: Var, enc: &Encoded, batch: usize, qlen: usize) -> (Var, Var) {
        let q = self.score.forward(g, s);
        let spec = AttentionSpec {
            batch,
            query_len: qlen,
            key_len: enc.steps,
            heads: 1,
            scale: 1.0,
            causal: false,
            key_lens: enc.lens.clone(),
        };
        let ctx = g.attention(q, enc.keys, enc.keys, spec);
        let cat = g.concat_cols(&[ctx, s]);
        let v = self.combine.forward(g, cat);
        let v = g.tanh(v);
        let v = g.dropout(v, self.dropout);
        (self.generator.forward(g, v), ctx)
    }

    fn decoder_states(&self, g: &mut Graph<'_>, enc: &Encoded, tgt: &Padded) -> Var {
        let y = self.tgt_emb.forward(g, &tgt.time_major());
        let y = g.dropout(y, self.dropout);
        let run = self.decoder.run(g, y, tgt.batch, &tgt.lens, false, Some((enc.h0, enc.c0)));
        let s = g.concat_rows(&run.outputs);
        g.gather_rows(s, &to_batch_major(tgt.batch, tgt.steps))
    }

    pub fn teacher_forced(&self, g: &mut Graph<'_>, src: &Padded, tgt: &Padded) -> Var {
        let enc = self.encode(g, src);
        let s = self.decoder_states(g, &enc, tgt);
        self.readout(g, s, &enc, tgt.batch, tgt.steps).0
    }

    pub fn attention_nodes(&self, g: &mut Graph<'_>, src: &Padded, tgt: &Padded) -> Vec<Var> {
        let enc = self.encode(g, src);
        let s = self.decoder_states(g, &enc, tgt);
        vec![self.readout(g, s, &enc, tgt.batch, tgt.steps).1]
    }

    pub fn decode(
        &self,
        params: &ParamSet,
        sources: &[&[usize]],
        steps: usize,
        mut choose: impl FnMut(usize, &[Vec<f64>]) -> Option<Vec<usize>>,
    ) {
        let mut g = Graph::new(params);
        let src = Padded::new(sources);
        let enc = self.encode(&mut g, &src);
        let batch = src.batch;
        let (mut h, mut c) = (enc.h0, enc.c0);
        let mut last = vec![BOS; batch];
        for step in 0..steps {
            let x = self.tgt_emb.forward(&mut g, &last);
            (h, c) = self.decoder.step(&mut g, x, h, c);
            let (logits, _) = self.readout(&mut g, h, &enc, batch, 1);
            let d = distributions(g.value(logits), 0..batch);
            match choose(step, &d) {
                Some(next) => last = next,
                None => break,
            }
        }
    }
}
