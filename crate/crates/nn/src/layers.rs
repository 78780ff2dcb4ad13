//! Layers built on the tape. Each layer owns [`ParamId`]s into a shared
//! [`ParamSet`] and is otherwise stateless.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::graph::{AttentionSpec, Graph, Var};
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform on `(-a, a)`.
    Uniform(f64),
    /// Zero-mean normal with the given standard deviation.
    Normal(f64),
}

impl Init {
    /// Normal with standard deviation `1 / sqrt(fan_in)`.
    pub fn fan_in(fan_in: usize) -> Init {
        Init::Normal(1.0 / (fan_in.max(1) as f64).sqrt())
    }

    pub fn tensor<R: Rng + ?Sized>(self, rows: usize, cols: usize, rng: &mut R) -> Tensor {
        let n = rows * cols;
        let data = match self {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Uniform(a) => {
                let d = Uniform::new(-a, a);
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Init::Normal(std) => {
                let d = Normal::new(0.0, std).expect("finite standard deviation");
                (0..n).map(|_| d.sample(rng)).collect()
            }
        };
        Tensor::from_vec(rows, cols, data)
    }
}

/// `y = x W + b` with `W` stored as `in x out`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), init.tensor(input, output, rng));
        let bias = bias.then(|| params.add(format!("{name}.bias"), Tensor::zeros(1, output)));
        Linear { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let w = g.param(self.weight);
        let y = g.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => y,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        count: usize,
        dim: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let table = params.add(format!("{name}.table"), init.tensor(count, dim, rng));
        Embedding { table, dim }
    }

    pub fn forward(&self, g: &mut Graph<'_>, ids: &[usize]) -> Var {
        let t = g.param(self.table);
        g.gather_rows(t, ids)
    }
}

/// Output of running an [`Lstm`] over a padded batch.
pub struct LstmRun {
    /// Hidden state per time step, each `batch x hidden`, indexed by position
    /// (not by processing order).
    pub outputs: Vec<Var>,
    pub final_h: Var,
    pub final_c: Var,
}

/// Single-layer LSTM with gates ordered `[i | f | g | o]`.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let w_ih = params.add(format!("{name}.w_ih"), init.tensor(input, 4 * hidden, rng));
        let w_hh = params.add(format!("{name}.w_hh"), init.tensor(hidden, 4 * hidden, rng));
        let bias = params.add(format!("{name}.bias"), init.tensor(1, 4 * hidden, rng));
        Lstm {
            w_ih,
            w_hh,
            bias,
            hidden,
        }
    }

    /// One step on an unprojected input `x` (`batch x input`).
    pub fn step(&self, g: &mut Graph<'_>, x: Var, h: Var, c: Var) -> (Var, Var) {
        let w_ih = g.param(self.w_ih);
        let b = g.param(self.bias);
        let xp = g.matmul(x, w_ih);
        let xp = g.add_row(xp, b);
        self.step_projected(g, xp, h, c)
    }

    fn step_projected(&self, g: &mut Graph<'_>, xp: Var, h: Var, c: Var) -> (Var, Var) {
        let w_hh = g.param(self.w_hh);
        let hp = g.matmul(h, w_hh);
        let gates = g.add(xp, hp);
        g.lstm_cell(gates, c)
    }

    pub fn zero_state(&self, g: &mut Graph<'_>, batch: usize) -> (Var, Var) {
        let h = g.constant(Tensor::zeros(batch, self.hidden));
        let c = g.constant(Tensor::zeros(batch, self.hidden));
        (h, c)
    }

    /// Runs over time-major inputs (`steps * batch` rows). Positions at or
    /// beyond `lens[b]` leave batch element `b`'s state untouched, so the
    /// final state of a forward run is the state after the last real token,
    /// and a reverse run starts each sequence at its own end.
    pub fn run(
        &self,
        g: &mut Graph<'_>,
        inputs: Var,
        batch: usize,
        lens: &[usize],
        reverse: bool,
        init: Option<(Var, Var)>,
    ) -> LstmRun {
        assert_eq!(lens.len(), batch, "one length per batch element");
        let rows = g.shape(inputs).0;
        assert_eq!(rows % batch, 0, "inputs must be steps * batch rows");
        let steps = rows / batch;
        let w_ih = g.param(self.w_ih);
        let b = g.param(self.bias);
        let proj = g.matmul(inputs, w_ih);
        let proj = g.add_row(proj, b);
        let (mut h, mut c) = match init {
            Some(s) => s,
            None => self.zero_state(g, batch),
        };
        let mut outputs = vec![h; steps];
        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        for t in order {
            let xp = g.slice_rows(proj, t * batch, batch);
            let (hn, cn) = self.step_projected(g, xp, h, c);
            let mask: Vec<f64> = lens.iter().map(|&l| if t < l { 1.0 } else { 0.0 }).collect();
            if mask.iter().all(|&m| m == 1.0) {
                h = hn;
                c = cn;
            } else {
                h = g.blend_rows(hn, h, &mask);
                c = g.blend_rows(cn, c, &mask);
            }
            outputs[t] = h;
        }
        LstmRun {
            outputs,
            final_h: h,
            final_c: c,
        }
    }
}

/// Output of a [`BiLstm`] run.
pub struct BiLstmRun {
    /// Time-major `steps * batch x 2 hidden`, forward state then backward state.
    pub outputs: Var,
    pub forward: LstmRun,
    pub backward: LstmRun,
}

#[derive(Clone, Debug)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        BiLstm {
            forward: Lstm::new(params, &format!("{name}.fwd"), input, hidden, init, rng),
            backward: Lstm::new(params, &format!("{name}.bwd"), input, hidden, init, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden + self.backward.hidden
    }

    pub fn run(&self, g: &mut Graph<'_>, inputs: Var, batch: usize, lens: &[usize]) -> BiLstmRun {
        let forward = self.forward.run(g, inputs, batch, lens, false, None);
        let backward = self.backward.run(g, inputs, batch, lens, true, None);
        let f = g.concat_rows(&forward.outputs);
        let b = g.concat_rows(&backward.outputs);
        let outputs = g.concat_cols(&[f, b]);
        BiLstmRun {
            outputs,
            forward,
            backward,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(params: &mut ParamSet, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: params.add(format!("{name}.gamma"), Tensor::filled(1, dim, 1.0)),
            beta: params.add(format!("{name}.beta"), Tensor::zeros(1, dim)),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta, self.eps)
    }
}

/// Multi-head attention with separate query, key, value and output projections.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        assert!(heads > 0 && dim % heads == 0, "model dim must divide into heads");
        let init = Init::fan_in(dim);
        MultiHeadAttention {
            query: Linear::new(params, &format!("{name}.q"), dim, dim, true, init, rng),
            key: Linear::new(params, &format!("{name}.k"), dim, dim, true, init, rng),
            value: Linear::new(params, &format!("{name}.v"), dim, dim, true, init, rng),
            output: Linear::new(params, &format!("{name}.o"), dim, dim, true, init, rng),
            heads,
            dim,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Returns `(output, attention node)`; the attention node exposes weights
    /// through [`Graph::attention_weights`].
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        queries: Var,
        keys: Var,
        batch: usize,
        query_len: usize,
        key_len: usize,
        key_lens: &[usize],
        causal: bool,
    ) -> (Var, Var) {
        let q = self.query.forward(g, queries);
        let k = self.key.forward(g, keys);
        let v = self.value.forward(g, keys);
        let spec = AttentionSpec {
            batch,
            query_len,
            key_len,
            heads: self.heads,
            scale: 1.0 / (self.head_dim() as f64).sqrt(),
            causal,
            key_lens: key_lens.to_vec(),
        };
        let attn = g.attention(q, k, v, spec);
        (self.output.forward(g, attn), attn)
    }
}

/// Position-wise `relu(x W1 + b1) W2 + b2`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        FeedForward {
            inner: Linear::new(params, &format!("{name}.in"), dim, hidden, true, Init::fan_in(dim), rng),
            outer: Linear::new(params, &format!("{name}.out"), hidden, dim, true, Init::fan_in(hidden), rng),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, dropout: f64) -> Var {
        let h = self.inner.forward(g, x);
        let h = g.relu(h);
        let h = g.dropout(h, dropout);
        self.outer.forward(g, h)
    }
}

/// Sinusoidal position encodings, `len x dim`.
pub fn sinusoidal_positions(len: usize, dim: usize) -> Tensor {
    let mut t = Tensor::zeros(len, dim);
    for pos in 0..len {
        for i in 0..dim {
            let exponent = (2 * (i / 2)) as f64 / dim as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            t.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    t
}
