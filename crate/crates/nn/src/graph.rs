use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::params::{Gradients, ParamId, ParamSet};
use crate::tensor::{gemm, softmax_in_place, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Shape and masking of a fused scaled dot-product attention call.
///
/// Queries are laid out batch-major as `batch * query_len` rows, keys and
/// values as `batch * key_len` rows. Heads split the columns of the key and
/// value matrices evenly.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionSpec {
    pub batch: usize,
    pub query_len: usize,
    pub key_len: usize,
    pub heads: usize,
    pub scale: f64,
    pub causal: bool,
    /// Number of valid keys per batch element; keys past it are masked.
    pub key_lens: Vec<usize>,
}

impl AttentionSpec {
    #[inline]
    fn allowed(&self, b: usize, i: usize, j: usize) -> bool {
        j < self.key_lens[b] && (!self.causal || j <= i)
    }
}

enum Op {
    Param(ParamId),
    Const,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Gather(Var, Vec<usize>),
    Blend(Var, Var, Vec<f64>),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        spec: AttentionSpec,
        probs: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Tensor,
    },
    LstmCell(Var, Var),
    LstmHidden(Var, Var),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
}

/// A single-use reverse-mode tape.
///
/// Parameters are borrowed immutably for the lifetime of the graph; the
/// gradients returned by [`Graph::backward`] are applied afterwards, so
/// forward passes on a shared model are reentrant.
pub struct Graph<'p> {
    params: &'p ParamSet,
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node>,
    dropout_rng: Option<ChaCha8Rng>,
}

impl<'p> Graph<'p> {
    /// Inference graph: dropout is the identity.
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            param_vars: vec![None; params.len()],
            nodes: Vec::new(),
            dropout_rng: None,
        }
    }

    /// Training graph with dropout masks drawn from a stream seeded by `seed`.
    pub fn training(params: &'p ParamSet, seed: u64) -> Self {
        let mut g = Graph::new(params);
        g.dropout_rng = Some(ChaCha8Rng::seed_from_u64(seed));
        g
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            (None, _) => unreachable!("non-parameter node without a value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Const)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let bias = self.value(row);
        assert_eq!(bias.rows(), 1, "add_row expects a single row");
        assert_eq!(bias.cols(), self.value(a).cols(), "add_row width mismatch");
        let bias = bias.data().to_vec();
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            for (x, b) in out.row_mut(r).iter_mut().zip(&bias) {
                *x += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(va.rows(), va.cols(), data);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_in_place(s);
        self.push(out, Op::Scale(a, s))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let va = self.value(a);
        Tensor::from_vec(va.rows(), va.cols(), va.data().iter().map(|&x| f(x)).collect())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.unary(a, sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.unary(a, f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.unary(a, |x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let vp = self.value(p);
            assert_eq!(vp.rows(), rows, "concat_cols row mismatch");
            let w = vp.cols();
            for r in 0..rows {
                out.row_mut(r)[offset..offset + w].copy_from_slice(vp.row(r));
            }
            offset += w;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let va = self.value(a);
        assert!(start + len <= va.cols(), "slice_cols out of range");
        let mut out = Tensor::zeros(va.rows(), len);
        for r in 0..va.rows() {
            out.row_mut(r).copy_from_slice(&va.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let vp = self.value(p);
            assert_eq!(vp.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(vp.data());
            rows += vp.rows();
        }
        let out = Tensor::from_vec(rows, cols, data);
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let va = self.value(a);
        assert!(start + len <= va.rows(), "slice_rows out of range");
        let c = va.cols();
        let out = Tensor::from_vec(len, c, va.data()[start * c..(start + len) * c].to_vec());
        self.push(out, Op::SliceRows(a, start))
    }

    /// Row gather: output row `r` is row `index[r]` of `a`. Also serves as
    /// embedding lookup when `a` is a parameter table.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Var {
        let va = self.value(a);
        let c = va.cols();
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index {
            data.extend_from_slice(va.row(i));
        }
        let out = Tensor::from_vec(index.len(), c, data);
        self.push(out, Op::Gather(a, index.to_vec()))
    }

    /// Per-row blend `mask[r] * new[r] + (1 - mask[r]) * old[r]`.
    pub fn blend_rows(&mut self, new: Var, old: Var, mask: &[f64]) -> Var {
        let (vn, vo) = (self.value(new), self.value(old));
        assert_eq!(vn.shape(), vo.shape(), "blend shape mismatch");
        assert_eq!(mask.len(), vn.rows(), "blend mask length mismatch");
        let mut out = vn.clone();
        for (r, &m) in mask.iter().enumerate() {
            if m != 1.0 {
                for (x, o) in out.row_mut(r).iter_mut().zip(vo.row(r)) {
                    *x = m * *x + (1.0 - m) * o;
                }
            }
        }
        self.push(out, Op::Blend(new, old, mask.to_vec()))
    }

    /// Inverted dropout. Identity on inference graphs or when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if p <= 0.0 || self.dropout_rng.is_none() {
            return a;
        }
        let (rows, cols) = self.shape(a);
        let keep = 1.0 - p;
        let rng = self.dropout_rng.as_mut().expect("checked above");
        let mask: Vec<f64> = (0..rows * cols)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = Tensor::from_vec(rows, cols, mask);
        let va = self.value(a);
        let data = va.data().iter().zip(mask.data()).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(rows, cols, data);
        self.push(out, Op::MulConst(a, mask))
    }

    /// Row-wise layer normalization with learned `1 x n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let vx = self.value(x);
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let n = vx.cols();
        assert_eq!(g.len(), n, "layer_norm gain width mismatch");
        assert_eq!(b.len(), n, "layer_norm bias width mismatch");
        let mut out = Tensor::zeros(vx.rows(), n);
        for r in 0..vx.rows() {
            let (mean, rstd) = row_stats(vx.row(r), eps);
            for (c, y) in out.row_mut(r).iter_mut().enumerate() {
                *y = (vx.get(r, c) - mean) * rstd * g[c] + b[c];
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                eps,
            },
        )
    }

    /// Fused multi-head scaled dot-product attention.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, spec: AttentionSpec) -> Var {
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        let AttentionSpec {
            batch,
            query_len: tq,
            key_len: tk,
            heads,
            scale,
            ..
        } = spec;
        assert_eq!(vq.rows(), batch * tq, "attention query rows");
        assert_eq!(vk.rows(), batch * tk, "attention key rows");
        assert_eq!(vv.rows(), batch * tk, "attention value rows");
        assert_eq!(vq.cols(), vk.cols(), "attention query/key width");
        assert_eq!(spec.key_lens.len(), batch, "attention key_lens length");
        assert!(heads > 0 && vk.cols() % heads == 0 && vv.cols() % heads == 0);
        let dk = vk.cols() / heads;
        let dv = vv.cols() / heads;
        let mut out = Tensor::zeros(batch * tq, vv.cols());
        let mut probs = vec![0.0; batch * heads * tq * tk];
        let mut scores = vec![0.0; tk];
        for b in 0..batch {
            for h in 0..heads {
                for i in 0..tq {
                    let qrow = &vq.row(b * tq + i)[h * dk..(h + 1) * dk];
                    let mut max = f64::NEG_INFINITY;
                    let mut any = false;
                    for (j, s) in scores.iter_mut().enumerate() {
                        if spec.allowed(b, i, j) {
                            let krow = &vk.row(b * tk + j)[h * dk..(h + 1) * dk];
                            *s = scale * dot(qrow, krow);
                            max = max.max(*s);
                            any = true;
                        }
                    }
                    if !any {
                        continue;
                    }
                    let base = ((b * heads + h) * tq + i) * tk;
                    let p = &mut probs[base..base + tk];
                    let mut sum = 0.0;
                    for j in 0..tk {
                        if spec.allowed(b, i, j) {
                            p[j] = (scores[j] - max).exp();
                            sum += p[j];
                        }
                    }
                    let orow = &mut out.row_mut(b * tq + i)[h * dv..(h + 1) * dv];
                    for j in 0..tk {
                        if p[j] != 0.0 {
                            p[j] /= sum;
                            let vrow = &vv.row(b * tk + j)[h * dv..(h + 1) * dv];
                            for (o, x) in orow.iter_mut().zip(vrow) {
                                *o += p[j] * x;
                            }
                        }
                    }
                }
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                spec,
                probs,
            },
        )
    }

    /// Attention weights of an attention node, laid out `[batch][head][query][key]`.
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Summed softmax cross-entropy over the rows that carry a target.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Var {
        let vl = self.value(logits);
        assert_eq!(vl.rows(), targets.len(), "cross_entropy target count");
        let probs = vl.softmax_rows();
        let mut loss = 0.0;
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                // log-softmax directly, so saturated rows stay finite
                let row = vl.row(r);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                loss += lse - row[t];
            }
        }
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// One LSTM cell update from pre-activation gates laid out `[i | f | g | o]`.
    /// Returns `(h, c)`.
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Var) -> (Var, Var) {
        let vg = self.value(gates);
        let vc = self.value(c_prev);
        let hd = vc.cols();
        assert_eq!(vg.cols(), 4 * hd, "lstm gate width");
        assert_eq!(vg.rows(), vc.rows(), "lstm batch mismatch");
        let mut c = Tensor::zeros(vc.rows(), hd);
        let mut h = Tensor::zeros(vc.rows(), hd);
        for r in 0..vc.rows() {
            let gr = vg.row(r);
            for j in 0..hd {
                let i = sigmoid(gr[j]);
                let f = sigmoid(gr[hd + j]);
                let gg = gr[2 * hd + j].tanh();
                let o = sigmoid(gr[3 * hd + j]);
                let cv = f * vc.get(r, j) + i * gg;
                c.set(r, j, cv);
                h.set(r, j, o * cv.tanh());
            }
        }
        let c = self.push(c, Op::LstmCell(gates, c_prev));
        let h = self.push(h, Op::LstmHidden(gates, c));
        (h, c)
    }

    /// Sum of several `1 x 1` nodes.
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "sum of nothing");
        let mut acc = parts[0];
        for &p in &parts[1..] {
            acc = self.add(acc, p);
        }
        acc
    }

    /// Reverse sweep from a `1 x 1` node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut param_grads: Vec<Option<Tensor>> = vec![None; self.params.len()];

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Param(id) => accumulate(&mut param_grads[id.index()], g),
                Op::Const => {}
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = slot(&mut grads, *a, va.shape());
                    gemm(&g, false, vb, true, ga, 1.0, 1.0);
                    let gb = slot(&mut grads, *b, vb.shape());
                    gemm(va, true, &g, false, gb, 1.0, 1.0);
                }
                Op::Add(a, b) => {
                    slot(&mut grads, *a, g.shape()).add_assign(&g);
                    slot(&mut grads, *b, g.shape()).add_assign(&g);
                }
                Op::AddRow(a, row) => {
                    slot(&mut grads, *a, g.shape()).add_assign(&g);
                    let gr = slot(&mut grads, *row, (1, g.cols()));
                    for r in 0..g.rows() {
                        for (acc, x) in gr.data_mut().iter_mut().zip(g.row(r)) {
                            *acc += x;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = slot(&mut grads, *a, g.shape());
                    zip_acc(ga, &g, vb, |g, y| g * y);
                    let gb = slot(&mut grads, *b, g.shape());
                    zip_acc(gb, &g, va, |g, x| g * x);
                }
                Op::MulConst(a, mask) => {
                    let ga = slot(&mut grads, *a, g.shape());
                    zip_acc(ga, &g, mask, |g, m| g * m);
                }
                Op::Scale(a, s) => {
                    let ga = slot(&mut grads, *a, g.shape());
                    for (acc, x) in ga.data_mut().iter_mut().zip(g.data()) {
                        *acc += s * x;
                    }
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().unwrap();
                    let ga = slot(&mut grads, *a, g.shape());
                    zip_acc(ga, &g, y, |g, y| g * y * (1.0 - y));
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap();
                    let ga = slot(&mut grads, *a, g.shape());
                    zip_acc(ga, &g, y, |g, y| g * (1.0 - y * y));
                }
                Op::Relu(a) => {
                    let y = node.value.as_ref().unwrap();
                    let ga = slot(&mut grads, *a, g.shape());
                    zip_acc(ga, &g, y, |g, y| if y > 0.0 { g } else { 0.0 });
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.shape(p);
                        let gp = slot(&mut grads, p, shape);
                        for r in 0..shape.0 {
                            let src = &g.row(r)[offset..offset + shape.1];
                            for (acc, x) in gp.row_mut(r).iter_mut().zip(src) {
                                *acc += x;
                            }
                        }
                        offset += shape.1;
                    }
                }
                Op::SliceCols(a, start) => {
                    let shape = self.shape(*a);
                    let ga = slot(&mut grads, *a, shape);
                    for r in 0..g.rows() {
                        let dst = &mut ga.row_mut(r)[*start..*start + g.cols()];
                        for (acc, x) in dst.iter_mut().zip(g.row(r)) {
                            *acc += x;
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.shape(p);
                        let gp = slot(&mut grads, p, shape);
                        let c = shape.1;
                        let src = &g.data()[offset * c..(offset + shape.0) * c];
                        for (acc, x) in gp.data_mut().iter_mut().zip(src) {
                            *acc += x;
                        }
                        offset += shape.0;
                    }
                }
                Op::SliceRows(a, start) => {
                    let shape = self.shape(*a);
                    let ga = slot(&mut grads, *a, shape);
                    let c = shape.1;
                    let dst = &mut ga.data_mut()[start * c..(start + g.rows()) * c];
                    for (acc, x) in dst.iter_mut().zip(g.data()) {
                        *acc += x;
                    }
                }
                Op::Gather(a, index) => {
                    let shape = self.shape(*a);
                    let ga = slot(&mut grads, *a, shape);
                    for (r, &i) in index.iter().enumerate() {
                        for (acc, x) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                            *acc += x;
                        }
                    }
                }
                Op::Blend(new, old, mask) => {
                    let gn = slot(&mut grads, *new, g.shape());
                    for (r, &m) in mask.iter().enumerate() {
                        for (acc, x) in gn.row_mut(r).iter_mut().zip(g.row(r)) {
                            *acc += m * x;
                        }
                    }
                    let go = slot(&mut grads, *old, g.shape());
                    for (r, &m) in mask.iter().enumerate() {
                        if m != 1.0 {
                            for (acc, x) in go.row_mut(r).iter_mut().zip(g.row(r)) {
                                *acc += (1.0 - m) * x;
                            }
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    eps,
                } => self.layer_norm_backward(&mut grads, &g, *x, *gamma, *beta, *eps),
                Op::Attention {
                    q,
                    k,
                    v,
                    spec,
                    probs,
                } => self.attention_backward(&mut grads, &g, (*q, *k, *v), spec, probs),
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let scale = g.item();
                    let gl = slot(&mut grads, *logits, probs.shape());
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = *t {
                            let dst = gl.row_mut(r);
                            for (acc, p) in dst.iter_mut().zip(probs.row(r)) {
                                *acc += scale * p;
                            }
                            dst[t] -= scale;
                        }
                    }
                }
                Op::LstmCell(gates, c_prev) => {
                    let vg = self.value(*gates);
                    let vc = self.value(*c_prev);
                    let hd = vc.cols();
                    let gc = slot(&mut grads, *c_prev, vc.shape());
                    for r in 0..vc.rows() {
                        for j in 0..hd {
                            let f = sigmoid(vg.get(r, hd + j));
                            gc.row_mut(r)[j] += g.get(r, j) * f;
                        }
                    }
                    let gg = slot(&mut grads, *gates, vg.shape());
                    for r in 0..vc.rows() {
                        let gr = vg.row(r);
                        for j in 0..hd {
                            let dc = g.get(r, j);
                            let i = sigmoid(gr[j]);
                            let f = sigmoid(gr[hd + j]);
                            let cand = gr[2 * hd + j].tanh();
                            let dst = gg.row_mut(r);
                            dst[j] += dc * cand * i * (1.0 - i);
                            dst[hd + j] += dc * vc.get(r, j) * f * (1.0 - f);
                            dst[2 * hd + j] += dc * i * (1.0 - cand * cand);
                        }
                    }
                }
                Op::LstmHidden(gates, c) => {
                    let vg = self.value(*gates);
                    let vc = self.value(*c);
                    let hd = vc.cols();
                    let gc = slot(&mut grads, *c, vc.shape());
                    for r in 0..vc.rows() {
                        for j in 0..hd {
                            let o = sigmoid(vg.get(r, 3 * hd + j));
                            let t = vc.get(r, j).tanh();
                            gc.row_mut(r)[j] += g.get(r, j) * o * (1.0 - t * t);
                        }
                    }
                    let gg = slot(&mut grads, *gates, vg.shape());
                    for r in 0..vc.rows() {
                        for j in 0..hd {
                            let o = sigmoid(vg.get(r, 3 * hd + j));
                            let t = vc.get(r, j).tanh();
                            gg.row_mut(r)[3 * hd + j] += g.get(r, j) * t * o * (1.0 - o);
                        }
                    }
                }
            }
        }
        Gradients::new(param_grads)
    }

    fn layer_norm_backward(
        &self,
        grads: &mut [Option<Tensor>],
        g: &Tensor,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) {
        let vx = self.value(x);
        let gam = self.value(gamma).data().to_vec();
        let n = vx.cols();
        let mut dgamma = vec![0.0; n];
        let mut dbeta = vec![0.0; n];
        let mut dx = Tensor::zeros(vx.rows(), n);
        let mut xhat = vec![0.0; n];
        let mut dxhat = vec![0.0; n];
        for r in 0..vx.rows() {
            let (mean, rstd) = row_stats(vx.row(r), eps);
            let gr = g.row(r);
            for c in 0..n {
                xhat[c] = (vx.get(r, c) - mean) * rstd;
                dxhat[c] = gr[c] * gam[c];
                dgamma[c] += gr[c] * xhat[c];
                dbeta[c] += gr[c];
            }
            let m1 = dxhat.iter().sum::<f64>() / n as f64;
            let m2 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                *d = rstd * (dxhat[c] - m1 - xhat[c] * m2);
            }
        }
        slot(grads, x, vx.shape()).add_assign(&dx);
        let gg = slot(grads, gamma, (1, n));
        for (acc, d) in gg.data_mut().iter_mut().zip(&dgamma) {
            *acc += d;
        }
        let gb = slot(grads, beta, (1, n));
        for (acc, d) in gb.data_mut().iter_mut().zip(&dbeta) {
            *acc += d;
        }
    }

    fn attention_backward(
        &self,
        grads: &mut [Option<Tensor>],
        g: &Tensor,
        (q, k, v): (Var, Var, Var),
        spec: &AttentionSpec,
        probs: &[f64],
    ) {
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        let (batch, tq, tk, heads) = (spec.batch, spec.query_len, spec.key_len, spec.heads);
        let dk = vk.cols() / heads;
        let dv = vv.cols() / heads;
        let mut gq = Tensor::zeros(vq.rows(), vq.cols());
        let mut gk = Tensor::zeros(vk.rows(), vk.cols());
        let mut gv = Tensor::zeros(vv.rows(), vv.cols());
        let mut dp = vec![0.0; tk];
        for b in 0..batch {
            for h in 0..heads {
                for i in 0..tq {
                    let base = ((b * heads + h) * tq + i) * tk;
                    let p = &probs[base..base + tk];
                    let grow = &g.row(b * tq + i)[h * dv..(h + 1) * dv];
                    let mut inner = 0.0;
                    for j in 0..tk {
                        dp[j] = 0.0;
                        if p[j] != 0.0 {
                            let vrow = &vv.row(b * tk + j)[h * dv..(h + 1) * dv];
                            dp[j] = dot(grow, vrow);
                            inner += p[j] * dp[j];
                            let gvrow = &mut gv.row_mut(b * tk + j)[h * dv..(h + 1) * dv];
                            for (acc, x) in gvrow.iter_mut().zip(grow) {
                                *acc += p[j] * x;
                            }
                        }
                    }
                    for j in 0..tk {
                        if p[j] == 0.0 {
                            continue;
                        }
                        let ds = spec.scale * p[j] * (dp[j] - inner);
                        let krow = &vk.row(b * tk + j)[h * dk..(h + 1) * dk];
                        let gqrow = &mut gq.row_mut(b * tq + i)[h * dk..(h + 1) * dk];
                        for (acc, x) in gqrow.iter_mut().zip(krow) {
                            *acc += ds * x;
                        }
                        let qrow = &vq.row(b * tq + i)[h * dk..(h + 1) * dk];
                        let gkrow = &mut gk.row_mut(b * tk + j)[h * dk..(h + 1) * dk];
                        for (acc, x) in gkrow.iter_mut().zip(qrow) {
                            *acc += ds * x;
                        }
                    }
                }
            }
        }
        slot(grads, q, gq.shape()).add_assign(&gq);
        slot(grads, k, gk.shape()).add_assign(&gk);
        slot(grads, v, gv.shape()).add_assign(&gv);
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

fn slot(grads: &mut [Option<Tensor>], v: Var, shape: (usize, usize)) -> &mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}

fn accumulate(dst: &mut Option<Tensor>, g: Tensor) {
    match dst {
        Some(t) => t.add_assign(&g),
        None => *dst = Some(g),
    }
}

fn zip_acc(acc: &mut Tensor, g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) {
    for ((a, &x), &y) in acc.data_mut().iter_mut().zip(g.data()).zip(other.data()) {
        *a += f(x, y);
    }
}

/// Softmax of each row of a graph value, for inspection outside the tape.
pub fn row_distribution(t: &Tensor, r: usize) -> Vec<f64> {
    let mut row = t.row(r).to_vec();
    softmax_in_place(&mut row);
    row
}
