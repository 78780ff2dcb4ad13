use pivot_nn::layers::{sinusoidal_positions, Embedding, FeedForward, Init, LayerNorm, Linear, MultiHeadAttention};
use pivot_nn::{Graph, ParamSet, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{distributions, Padded};
use crate::corpus::BOS;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerConfig {
    pub model_dim: usize,
    pub ff_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub dropout: f64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            model_dim: 512,
            ff_dim: 2048,
            heads: 8,
            blocks: 6,
            dropout: 0.1,
        }
    }
}

impl TransformerConfig {
    pub fn desk() -> Self {
        TransformerConfig {
            model_dim: 64,
            ff_dim: 128,
            heads: 4,
            blocks: 2,
            dropout: 0.1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.model_dim > 0
            && self.ff_dim > 0
            && self.heads > 0
            && self.blocks > 0
            && self.model_dim % self.heads == 0
            && (0.0..1.0).contains(&self.dropout);
        if !ok {
            return Err(Error::Config(format!("invalid transformer settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct EncoderBlock {
    norm_attn: LayerNorm,
    attn: MultiHeadAttention,
    norm_ff: LayerNorm,
    ff: FeedForward,
}

#[derive(Clone, Debug)]
struct DecoderBlock {
    norm_self: LayerNorm,
    self_attn: MultiHeadAttention,
    norm_cross: LayerNorm,
    cross_attn: MultiHeadAttention,
    norm_ff: LayerNorm,
    ff: FeedForward,
}

#[derive(Clone, Debug)]
pub(super) struct TransformerNet {
    src_emb: Embedding,
    tgt_emb: Embedding,
    encoder: Vec<EncoderBlock>,
    encoder_norm: LayerNorm,
    decoder: Vec<DecoderBlock>,
    decoder_norm: LayerNorm,
    generator: Linear,
    dim: usize,
    dropout: f64,
}

impl TransformerNet {
    pub fn new<R: Rng>(c: &TransformerConfig, vocab: usize, params: &mut ParamSet, rng: &mut R) -> Self {
        let d = c.model_dim;
        let emb_init = Init::fan_in(d);
        let encoder = (0..c.blocks)
            .map(|i| {
                let n = format!("realizer.enc{i}");
                EncoderBlock {
                    norm_attn: LayerNorm::new(params, &format!("{n}.norm_attn"), d),
                    attn: MultiHeadAttention::new(params, &format!("{n}.attn"), d, c.heads, rng),
                    norm_ff: LayerNorm::new(params, &format!("{n}.norm_ff"), d),
                    ff: FeedForward::new(params, &format!("{n}.ff"), d, c.ff_dim, rng),
                }
            })
            .collect();
        let decoder = (0..c.blocks)
            .map(|i| {
                let n = format!("realizer.dec{i}");
                DecoderBlock {
                    norm_self: LayerNorm::new(params, &format!("{n}.norm_self"), d),
                    self_attn: MultiHeadAttention::new(params, &format!("{n}.self_attn"), d, c.heads, rng),
                    norm_cross: LayerNorm::new(params, &format!("{n}.norm_cross"), d),
                    cross_attn: MultiHeadAttention::new(params, &format!("{n}.cross_attn"), d, c.heads, rng),
                    norm_ff: LayerNorm::new(params, &format!("{n}.norm_ff"), d),
                    ff: FeedForward::new(params, &format!("{n}.ff"), d, c.ff_dim, rng),
                }
            })
            .collect();
        TransformerNet {
            src_emb: Embedding::new(params, "realizer.src_emb", vocab, d, emb_init, rng),
            tgt_emb: Embedding::new(params, "realizer.tgt_emb", vocab, d, emb_init, rng),
            encoder,
            encoder_norm: LayerNorm::new(params, "realizer.enc_norm", d),
            decoder,
            decoder_norm: LayerNorm::new(params, "realizer.dec_norm", d),
            generator: Linear::new(params, "realizer.generator", d, vocab, true, Init::fan_in(d), rng),
            dim: d,
            dropout: c.dropout,
        }
    }

    /// Scaled embeddings plus sinusoidal positions, batch-major.
    fn embed(&self, g: &mut Graph<'_>, emb: &Embedding, seqs: &Padded) -> Var {
        let x = emb.forward(g, &seqs.ids);
        let x = g.scale(x, (self.dim as f64).sqrt());
        let table = sinusoidal_positions(seqs.steps, self.dim);
        let mut pos = Tensor::zeros(seqs.batch * seqs.steps, self.dim);
        for b in 0..seqs.batch {
            for t in 0..seqs.steps {
                pos.row_mut(b * seqs.steps + t).copy_from_slice(table.row(t));
            }
        }
        let pos = g.constant(pos);
        let x = g.add(x, pos);
        g.dropout(x, self.dropout)
    }

    fn residual(&self, g: &mut Graph<'_>, x: Var, y: Var) -> Var {
        let y = g.dropout(y, self.dropout);
        g.add(x, y)
    }

    /// Encoder output, batch-major `batch * steps x dim`.
    pub fn encode(&self, g: &mut Graph<'_>, src: &Padded) -> Var {
        let mut x = self.embed(g, &self.src_emb, src);
        let (b, t) = (src.batch, src.steps);
        for block in &self.encoder {
            let a = block.norm_attn.forward(g, x);
            let (a, _) = block.attn.forward(g, a, a, b, t, t, &src.lens, false);
            x = self.residual(g, x, a);
            let f = block.norm_ff.forward(g, x);
            let f = block.ff.forward(g, f, self.dropout);
            x = self.residual(g, x, f);
        }
        self.encoder_norm.forward(g, x)
    }

    /// Decoder logits for every target position plus the cross-attention nodes.
    fn decode_full(&self, g: &mut Graph<'_>, memory: Var, src: &Padded, tgt: &Padded) -> (Var, Vec<Var>) {
        let mut y = self.embed(g, &self.tgt_emb, tgt);
        let (b, tq, tk) = (tgt.batch, tgt.steps, src.steps);
        let mut cross = Vec::with_capacity(self.decoder.len());
        for block in &self.decoder {
            let a = block.norm_self.forward(g, y);
            let (a, _) = block.self_attn.forward(g, a, a, b, tq, tq, &tgt.lens, true);
            y = self.residual(g, y, a);
            let c = block.norm_cross.forward(g, y);
            let (c, node) = block.cross_attn.forward(g, c, memory, b, tq, tk, &src.lens, false);
            cross.push(node);
            y = self.residual(g, y, c);
            let f = block.norm_ff.forward(g, y);
            let f = block.ff.forward(g, f, self.dropout);
            y = self.residual(g, y, f);
        }
        let y = self.decoder_norm.forward(g, y);
        (self.generator.forward(g, y), cross)
    }

    pub fn teacher_forced(&self, g: &mut Graph<'_>, src: &Padded, tgt: &Padded) -> Var {
        let memory = self.encode(g, src);
        self.decode_full(g, memory, src, tgt).0
    }

    pub fn attention_nodes(&self, g: &mut Graph<'_>, src: &Padded, tgt: &Padded) -> Vec<Var> {
        let memory = self.encode(g, src);
        self.decode_full(g, memory, src, tgt).1
    }

    /// Recomputes the decoder over the whole prefix at each step on a fresh
    /// graph, with the encoder output held as a constant.
    pub fn decode(
        &self,
        params: &ParamSet,
        sources: &[&[usize]],
        steps: usize,
        mut choose: impl FnMut(usize, &[Vec<f64>]) -> Option<Vec<usize>>,
    ) {
        let src = Padded::new(sources);
        let memory = {
            let mut g = Graph::new(params);
            let m = self.encode(&mut g, &src);
            g.value(m).clone()
        };
        let batch = src.batch;
        let mut prefixes: Vec<Vec<usize>> = vec![vec![BOS]; batch];
        for step in 0..steps {
            let mut g = Graph::new(params);
            let mem = g.constant(memory.clone());
            let refs: Vec<&[usize]> = prefixes.iter().map(Vec::as_slice).collect();
            let tgt = Padded::new(&refs);
            let (logits, _) = self.decode_full(&mut g, mem, &src, &tgt);
            let d = distributions(g.value(logits), (0..batch).map(|b| b * tgt.steps + step));
            match choose(step, &d) {
                Some(next) => {
                    for (p, y) in prefixes.iter_mut().zip(next) {
                        p.push(y);
                    }
                }
                None => break,
            }
        }
    }
}
