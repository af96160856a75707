use std::collections::BTreeMap;
use std::sync::Arc;

use crate::tensor::gemm;
use crate::{ParamId, ParamStore, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Geometry of a channels-last 1-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub fn same(kernel: usize, dilation: usize) -> Self {
        Self { kernel, stride: 1, padding: dilation * (kernel - 1) / 2, dilation }
    }

    pub fn out_len(&self, len: usize) -> usize {
        let span = self.dilation * (self.kernel - 1) + 1;
        assert!(len + 2 * self.padding >= span, "sequence of {len} too short for conv {self:?}");
        (len + 2 * self.padding - span) / self.stride + 1
    }
}

enum Op {
    Leaf,
    Param,
    Linear { x: Var, w: Var, b: Option<Var> },
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    AddBroadcast(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sqr(Var),
    Relu(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, eps: f64 },
    Conv1d { x: Var, w: Var, b: Option<Var>, spec: ConvSpec },
    Upsample { x: Var, factor: usize },
    L2Normalize { x: Var, eps: f64 },
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    Concat { xs: Vec<Var>, axis: usize },
    Narrow { x: Var, axis: usize, start: usize },
    IndexSelect { x: Var, axis: usize, indices: Vec<usize> },
    EmbeddingBag { w: Var, bags: Vec<Vec<(usize, f64)>> },
    Mse(Var, Var),
    CrossEntropy { logits: Var, targets: Vec<usize> },
    SumAll(Var),
    MeanAll(Var),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Tape recording a forward computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid topological order for the backward sweep.
pub struct Graph<'s> {
    store: Option<&'s ParamStore>,
    nodes: Vec<Node>,
    // ordered so gradient lists, and sums over them, are reproducible
    param_nodes: BTreeMap<ParamId, Var>,
    params_require_grad: bool,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }

    /// Gradients of every parameter that took part in the graph.
    pub fn into_param_grads(mut self) -> Vec<(ParamId, Tensor)> {
        let params = std::mem::take(&mut self.params);
        params.into_iter().filter_map(|(id, v)| self.grads[v.0].take().map(|g| (id, g))).collect()
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

fn permute_data(src: &Tensor, perm: &[usize]) -> Tensor {
    let in_shape = src.shape();
    assert_eq!(perm.len(), in_shape.len(), "permutation rank mismatch");
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let in_strides = row_major_strides(in_shape);
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n = src.numel();
    let mut out = Vec::with_capacity(n);
    let rank = out_shape.len();
    if rank == 0 {
        return src.clone();
    }
    let mut idx = vec![0usize; rank];
    let inner = out_shape[rank - 1];
    let inner_stride = src_strides[rank - 1];
    let data = src.data();
    let mut offset = 0usize;
    while out.len() < n {
        for i in 0..inner {
            out.push(data[offset + i * inner_stride]);
        }
        // advance the multi-index over all but the innermost axis
        let mut d = rank - 1;
        loop {
            if d == 0 {
                break;
            }
            d -= 1;
            idx[d] += 1;
            offset += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= src_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    Tensor::new(out_shape, out)
}

fn gelu_parts(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x);
    (y, dy)
}

fn im2col(x: &[f64], batch: usize, len: usize, ch: usize, spec: ConvSpec, out_len: usize) -> Vec<f64> {
    let k = spec.kernel;
    let mut cols = vec![0.0; batch * out_len * k * ch];
    for b in 0..batch {
        for to in 0..out_len {
            let row = (b * out_len + to) * k * ch;
            for tap in 0..k {
                let ti = (to * spec.stride + tap * spec.dilation) as isize - spec.padding as isize;
                if ti < 0 || ti as usize >= len {
                    continue;
                }
                let src = (b * len + ti as usize) * ch;
                cols[row + tap * ch..row + (tap + 1) * ch].copy_from_slice(&x[src..src + ch]);
            }
        }
    }
    cols
}

impl<'s> Graph<'s> {
    /// Graph whose trainable parameter leaves accumulate gradients.
    pub fn new(store: &'s ParamStore) -> Self {
        Self { store: Some(store), nodes: Vec::new(), param_nodes: BTreeMap::new(), params_require_grad: true }
    }

    /// Graph that treats parameters as constants; only explicit inputs get gradients.
    pub fn frozen(store: &'s ParamStore) -> Self {
        Self { params_require_grad: false, ..Self::new(store) }
    }

    /// Graph without a parameter store.
    pub fn detached() -> Graph<'static> {
        Graph { store: None, nodes: Vec::new(), param_nodes: BTreeMap::new(), params_require_grad: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.push_arc(Arc::new(value), op, requires_grad)
    }

    fn push_arc(&mut self, value: Arc<Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that receives a gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Stop-gradient: same value, no gradient flows back.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = Arc::clone(&self.nodes[v.0].value);
        self.push_arc(value, Op::Leaf, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let store = self.store.expect("graph has no parameter store");
        let value = store.get_arc(id);
        let rg = self.params_require_grad && store.is_trainable(id);
        let v = self.push_arc(value, Op::Param, rg);
        self.param_nodes.insert(id, v);
        v
    }

    /// `x · w + b` over the trailing axis; `w` is `[in, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        let (rows, inp) = xv.rows_cols();
        assert_eq!(wv.rank(), 2, "linear weight must be 2-D");
        assert_eq!(wv.dim(0), inp, "linear input width {inp} vs weight {:?}", wv.shape());
        let out = wv.dim(1);
        let mut y = vec![0.0; rows * out];
        if let Some(b) = b {
            let bv = self.value(b).data();
            assert_eq!(bv.len(), out);
            for r in 0..rows {
                y[r * out..(r + 1) * out].copy_from_slice(bv);
            }
        }
        gemm(rows, inp, out, 1.0, xv.data(), false, wv.data(), false, if b.is_some() { 1.0 } else { 0.0 }, &mut y);
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = out;
        let mut parents = vec![x, w];
        parents.extend(b);
        let rg = self.rg(&parents);
        self.push(Tensor::new(shape, y), Op::Linear { x, w, b }, rg)
    }

    /// Batched matrix product over identical leading dimensions.
    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        let ra = av.rank();
        assert!(ra >= 2 && ra == bv.rank(), "matmul rank mismatch");
        assert_eq!(av.shape()[..ra - 2], bv.shape()[..ra - 2], "matmul batch mismatch");
        let (m, k) = if ta { (av.dim(ra - 1), av.dim(ra - 2)) } else { (av.dim(ra - 2), av.dim(ra - 1)) };
        let (k2, n) = if tb { (bv.dim(ra - 1), bv.dim(ra - 2)) } else { (bv.dim(ra - 2), bv.dim(ra - 1)) };
        assert_eq!(k, k2, "matmul inner dims");
        let batch: usize = av.shape()[..ra - 2].iter().product();
        let mut out = vec![0.0; batch * m * n];
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                1.0,
                &av.data()[i * m * k..],
                ta,
                &bv.data()[i * k * n..],
                tb,
                0.0,
                &mut out[i * m * n..],
            );
        }
        let mut shape = av.shape()[..ra - 2].to_vec();
        shape.extend([m, n]);
        let rg = self.rg(&[a, b]);
        self.push(Tensor::new(shape, out), Op::MatMul { a, b, ta, tb }, rg)
    }

    fn zip_same(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.shape(), bv.shape(), "elementwise shape mismatch");
        Tensor::new(av.shape().to_vec(), av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let t = self.zip_same(a, b, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        self.push(t, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let t = self.zip_same(a, b, |x, y| x - y);
        let rg = self.rg(&[a, b]);
        self.push(t, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let t = self.zip_same(a, b, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.push(t, Op::Mul(a, b), rg)
    }

    /// `a + b` where `b`'s shape equals the trailing dimensions of `a`.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        let ra = av.rank();
        let rb = bv.rank();
        assert!(rb <= ra && av.shape()[ra - rb..] == *bv.shape(), "broadcast {:?} + {:?}", av.shape(), bv.shape());
        let inner = bv.numel();
        let mut out = av.data().to_vec();
        for chunk in out.chunks_mut(inner) {
            for (o, x) in chunk.iter_mut().zip(bv.data()) {
                *o += x;
            }
        }
        let t = Tensor::new(av.shape().to_vec(), out);
        let rg = self.rg(&[a, b]);
        self.push(t, Op::AddBroadcast(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.push(t, Op::Scale(a, s), rg)
    }

    pub fn sqr(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x * x);
        let rg = self.rg(&[a]);
        self.push(t, Op::Sqr(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(&[a]);
        self.push(t, Op::Relu(a), rg)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| gelu_parts(x).0);
        let rg = self.rg(&[a]);
        self.push(t, Op::Gelu(a), rg)
    }

    /// Softmax over the trailing axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (_, cols) = av.rows_cols();
        let mut out = av.data().to_vec();
        for row in out.chunks_mut(cols) {
            let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        let t = Tensor::new(av.shape().to_vec(), out);
        let rg = self.rg(&[a]);
        self.push(t, Op::Softmax(a), rg)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (_, d) = xv.rows_cols();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        assert!(g.len() == d && b.len() == d, "layer norm width");
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for (i, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * g[i] + b[i];
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), out);
        let rg = self.rg(&[x, gamma, beta]);
        self.push(t, Op::LayerNorm { x, gamma, beta, eps }, rg)
    }

    /// Channels-last convolution: `x` is `[batch, len, in]`, `w` is
    /// `[kernel * in, out]` with tap-major rows.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.rank(), 3, "conv1d expects [batch, len, channels]");
        let (batch, len, ch) = (xv.dim(0), xv.dim(1), xv.dim(2));
        let wv = self.value(w);
        assert_eq!(wv.dim(0), spec.kernel * ch, "conv weight rows vs kernel*channels");
        let out_ch = wv.dim(1);
        let out_len = spec.out_len(len);
        let cols = im2col(xv.data(), batch, len, ch, spec, out_len);
        let rows = batch * out_len;
        let mut y = vec![0.0; rows * out_ch];
        if let Some(b) = b {
            let bv = self.value(b).data();
            for r in 0..rows {
                y[r * out_ch..(r + 1) * out_ch].copy_from_slice(bv);
            }
        }
        gemm(rows, spec.kernel * ch, out_ch, 1.0, &cols, false, wv.data(), false, if b.is_some() { 1.0 } else { 0.0 }, &mut y);
        let mut parents = vec![x, w];
        parents.extend(b);
        let rg = self.rg(&parents);
        self.push(Tensor::new([batch, out_len, out_ch], y), Op::Conv1d { x, w, b, spec }, rg)
    }

    /// Nearest-neighbour upsampling along axis 1 of `[batch, len, ch]`.
    pub fn upsample(&mut self, x: Var, factor: usize) -> Var {
        let xv = self.value(x);
        let (batch, len, ch) = (xv.dim(0), xv.dim(1), xv.dim(2));
        let mut out = Vec::with_capacity(batch * len * factor * ch);
        for b in 0..batch {
            for t in 0..len {
                let row = &xv.data()[(b * len + t) * ch..(b * len + t + 1) * ch];
                for _ in 0..factor {
                    out.extend_from_slice(row);
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(Tensor::new([batch, len * factor, ch], out), Op::Upsample { x, factor }, rg)
    }

    /// Divides each trailing-axis vector by `sqrt(|v|^2 + eps)`.
    pub fn l2_normalize(&mut self, x: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (_, d) = xv.rows_cols();
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(d) {
            let n = (row.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
            for v in row.iter_mut() {
                *v /= n;
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), out);
        let rg = self.rg(&[x]);
        self.push(t, Op::L2Normalize { x, eps }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self.value(x).clone().reshape(shape.to_vec());
        let rg = self.rg(&[x]);
        self.push(t, Op::Reshape(x), rg)
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Var {
        let t = permute_data(self.value(x), perm);
        let rg = self.rg(&[x]);
        self.push(t, Op::Permute { x, perm: perm.to_vec() }, rg)
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let first = self.value(xs[0]).shape().to_vec();
        let (outer, _, inner) = split_axis(&first, axis);
        let mut total = 0;
        for &v in xs {
            let s = self.value(v).shape();
            assert!(
                s.len() == first.len() && s[..axis] == first[..axis] && s[axis + 1..] == first[axis + 1..],
                "concat shape mismatch {s:?} vs {first:?}"
            );
            total += s[axis];
        }
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let t = self.value(v);
                let chunk = t.dim(axis) * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let rg = self.rg(xs);
        self.push(Tensor::new(shape, out), Op::Concat { xs: xs.to_vec(), axis }, rg)
    }

    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        let (outer, n, inner) = split_axis(xv.shape(), axis);
        assert!(start + len <= n, "narrow out of range");
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&xv.data()[base..base + len * inner]);
        }
        let mut shape = xv.shape().to_vec();
        shape[axis] = len;
        let rg = self.rg(&[x]);
        self.push(Tensor::new(shape, out), Op::Narrow { x, axis, start }, rg)
    }

    pub fn index_select(&mut self, x: Var, axis: usize, indices: &[usize]) -> Var {
        let xv = self.value(x);
        let (outer, n, inner) = split_axis(xv.shape(), axis);
        let mut out = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                assert!(i < n, "index {i} out of range {n}");
                let base = (o * n + i) * inner;
                out.extend_from_slice(&xv.data()[base..base + inner]);
            }
        }
        let mut shape = xv.shape().to_vec();
        shape[axis] = indices.len();
        let rg = self.rg(&[x]);
        self.push(Tensor::new(shape, out), Op::IndexSelect { x, axis, indices: indices.to_vec() }, rg)
    }

    /// Weighted sums of rows of `w` (`[vocab, dim]`), one output row per bag.
    pub fn embedding_bag(&mut self, w: Var, bags: Vec<Vec<(usize, f64)>>) -> Var {
        let wv = self.value(w);
        let d = wv.dim(1);
        let mut out = vec![0.0; bags.len() * d];
        for (b, bag) in bags.iter().enumerate() {
            let row = &mut out[b * d..(b + 1) * d];
            for &(i, weight) in bag {
                for (o, x) in row.iter_mut().zip(&wv.data()[i * d..(i + 1) * d]) {
                    *o += weight * x;
                }
            }
        }
        let rg = self.rg(&[w]);
        self.push(Tensor::new([bags.len(), d], out), Op::EmbeddingBag { w, bags }, rg)
    }

    /// Mean squared difference, a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.shape(), bv.shape(), "mse shape mismatch");
        let n = av.numel().max(1) as f64;
        let s = av.data().iter().zip(bv.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
        let rg = self.rg(&[a, b]);
        self.push(Tensor::scalar(s), Op::Mse(a, b), rg)
    }

    /// Mean negative log-likelihood of `targets` under softmax(`logits`) rows.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.value(logits);
        let (rows, c) = lv.rows_cols();
        assert_eq!(rows, targets.len(), "cross entropy targets");
        let mut total = 0.0;
        for (row, &t) in lv.data().chunks(c).zip(targets) {
            assert!(t < c, "target {t} out of range {c}");
            let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        let rg = self.rg(&[logits]);
        self.push(Tensor::scalar(total / rows.max(1) as f64), Op::CrossEntropy { logits, targets: targets.to_vec() }, rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.sum() / v.numel().max(1) as f64;
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::MeanAll(a), rg)
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).numel(), 1, "backward needs a scalar root");
        self.backward_with(root, Tensor::new(self.value(root).shape().to_vec(), vec![1.0]))
    }

    /// Backpropagates an arbitrary output cotangent `seed` from `root`.
    pub fn backward_with(&self, root: Var, seed: Tensor) -> Gradients {
        assert_eq!(seed.shape(), self.value(root).shape(), "seed shape");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf | Op::Param) {
                grads[i] = Some(g);
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
        }
        let params = self.param_nodes.iter().map(|(&id, &v)| (id, v)).collect();
        Gradients { grads, params }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf | Op::Param => {}
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (rows, inp) = xv.rows_cols();
                let outw = wv.dim(1);
                if self.needs(*x) {
                    let mut dx = vec![0.0; rows * inp];
                    gemm(rows, outw, inp, 1.0, g.data(), false, wv.data(), true, 0.0, &mut dx);
                    self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx));
                }
                if self.needs(*w) {
                    let mut dw = vec![0.0; inp * outw];
                    gemm(inp, rows, outw, 1.0, xv.data(), true, g.data(), false, 0.0, &mut dw);
                    self.accumulate(grads, *w, Tensor::new(wv.shape().to_vec(), dw));
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        let mut db = vec![0.0; outw];
                        for row in g.data().chunks(outw) {
                            for (d, x) in db.iter_mut().zip(row) {
                                *d += x;
                            }
                        }
                        self.accumulate(grads, *b, Tensor::new([outw], db));
                    }
                }
            }
            Op::MatMul { a, b, ta, tb } => {
                let (ta, tb) = (*ta, *tb);
                let av = self.value(*a);
                let bv = self.value(*b);
                let r = av.rank();
                let (m, k) = if ta { (av.dim(r - 1), av.dim(r - 2)) } else { (av.dim(r - 2), av.dim(r - 1)) };
                let n = if tb { bv.dim(r - 2) } else { bv.dim(r - 1) };
                let batch: usize = av.shape()[..r - 2].iter().product();
                if self.needs(*a) {
                    let mut da = vec![0.0; batch * m * k];
                    for i in 0..batch {
                        let gc = &g.data()[i * m * n..];
                        let bb = &bv.data()[i * k * n..];
                        let dst = &mut da[i * m * k..];
                        if !ta {
                            gemm(m, n, k, 1.0, gc, false, bb, !tb, 0.0, dst);
                        } else {
                            gemm(k, n, m, 1.0, bb, tb, gc, true, 0.0, dst);
                        }
                    }
                    self.accumulate(grads, *a, Tensor::new(av.shape().to_vec(), da));
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; batch * k * n];
                    for i in 0..batch {
                        let gc = &g.data()[i * m * n..];
                        let aa = &av.data()[i * m * k..];
                        let dst = &mut db[i * k * n..];
                        if !tb {
                            gemm(k, m, n, 1.0, aa, !ta, gc, false, 0.0, dst);
                        } else {
                            gemm(n, m, k, 1.0, gc, true, aa, ta, 0.0, dst);
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), db));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let bv = self.value(*b);
                    let d = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), d));
                }
                if self.needs(*b) {
                    let av = self.value(*a);
                    let d = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, Tensor::new(g.shape().to_vec(), d));
                }
            }
            Op::AddBroadcast(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.needs(*b) {
                    let bv = self.value(*b);
                    let inner = bv.numel();
                    let mut db = vec![0.0; inner];
                    for chunk in g.data().chunks(inner) {
                        for (d, x) in db.iter_mut().zip(chunk) {
                            *d += x;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), db));
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.map(|x| x * s)),
            Op::Sqr(a) => {
                let av = self.value(*a);
                let d = g.data().iter().zip(av.data()).map(|(gg, x)| 2.0 * gg * x).collect();
                self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), d));
            }
            Op::Relu(a) => {
                let d = g.data().iter().zip(out.data()).map(|(gg, y)| if *y > 0.0 { *gg } else { 0.0 }).collect();
                self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), d));
            }
            Op::Gelu(a) => {
                let av = self.value(*a);
                let d = g.data().iter().zip(av.data()).map(|(gg, x)| gg * gelu_parts(*x).1).collect();
                self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), d));
            }
            Op::Softmax(a) => {
                let (_, c) = out.rows_cols();
                let mut d = vec![0.0; out.numel()];
                for ((dr, yr), gr) in d.chunks_mut(c).zip(out.data().chunks(c)).zip(g.data().chunks(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, gg)| y * gg).sum();
                    for ((dd, y), gg) in dr.iter_mut().zip(yr).zip(gr) {
                        *dd = y * (gg - dot);
                    }
                }
                self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), d));
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let xv = self.value(*x);
                let gm = self.value(*gamma).data();
                let (_, dim) = xv.rows_cols();
                let mut dx = vec![0.0; xv.numel()];
                let mut dg = vec![0.0; dim];
                let mut db = vec![0.0; dim];
                let mut xhat = vec![0.0; dim];
                let mut dxhat = vec![0.0; dim];
                for ((xr, gr), dr) in xv.data().chunks(dim).zip(g.data().chunks(dim)).zip(dx.chunks_mut(dim)) {
                    let mean = xr.iter().sum::<f64>() / dim as f64;
                    let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for j in 0..dim {
                        xhat[j] = (xr[j] - mean) * inv;
                        dg[j] += gr[j] * xhat[j];
                        db[j] += gr[j];
                        dxhat[j] = gr[j] * gm[j];
                        s1 += dxhat[j];
                        s2 += dxhat[j] * xhat[j];
                    }
                    for j in 0..dim {
                        dr[j] = inv / dim as f64 * (dim as f64 * dxhat[j] - s1 - xhat[j] * s2);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx));
                self.accumulate(grads, *gamma, Tensor::new([dim], dg));
                self.accumulate(grads, *beta, Tensor::new([dim], db));
            }
            Op::Conv1d { x, w, b, spec } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (batch, len, ch) = (xv.dim(0), xv.dim(1), xv.dim(2));
                let out_len = out.dim(1);
                let out_ch = out.dim(2);
                let rows = batch * out_len;
                let kc = spec.kernel * ch;
                if self.needs(*w) {
                    let cols = im2col(xv.data(), batch, len, ch, *spec, out_len);
                    let mut dw = vec![0.0; kc * out_ch];
                    gemm(kc, rows, out_ch, 1.0, &cols, true, g.data(), false, 0.0, &mut dw);
                    self.accumulate(grads, *w, Tensor::new(wv.shape().to_vec(), dw));
                }
                if self.needs(*x) {
                    let mut dcols = vec![0.0; rows * kc];
                    gemm(rows, out_ch, kc, 1.0, g.data(), false, wv.data(), true, 0.0, &mut dcols);
                    let mut dx = vec![0.0; xv.numel()];
                    for bi in 0..batch {
                        for to in 0..out_len {
                            let row = (bi * out_len + to) * kc;
                            for tap in 0..spec.kernel {
                                let ti = (to * spec.stride + tap * spec.dilation) as isize - spec.padding as isize;
                                if ti < 0 || ti as usize >= len {
                                    continue;
                                }
                                let dst = (bi * len + ti as usize) * ch;
                                for c in 0..ch {
                                    dx[dst + c] += dcols[row + tap * ch + c];
                                }
                            }
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx));
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        let mut db = vec![0.0; out_ch];
                        for row in g.data().chunks(out_ch) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        self.accumulate(grads, *b, Tensor::new([out_ch], db));
                    }
                }
            }
            Op::Upsample { x, factor } => {
                let xv = self.value(*x);
                let (batch, len, ch) = (xv.dim(0), xv.dim(1), xv.dim(2));
                let mut dx = vec![0.0; xv.numel()];
                for bi in 0..batch {
                    for t in 0..len {
                        let dst = (bi * len + t) * ch;
                        for r in 0..*factor {
                            let src = (bi * len * factor + t * factor + r) * ch;
                            for c in 0..ch {
                                dx[dst + c] += g.data()[src + c];
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx));
            }
            Op::L2Normalize { x, eps } => {
                let xv = self.value(*x);
                let (_, d) = xv.rows_cols();
                let mut dx = vec![0.0; xv.numel()];
                for ((xr, gr), (dr, yr)) in
                    xv.data().chunks(d).zip(g.data().chunks(d)).zip(dx.chunks_mut(d).zip(out.data().chunks(d)))
                {
                    let n = (xr.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
                    let dot: f64 = yr.iter().zip(gr).map(|(y, gg)| y * gg).sum();
                    for ((dd, y), gg) in dr.iter_mut().zip(yr).zip(gr) {
                        *dd = (gg - y * dot) / n;
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx));
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, g.clone().reshape(shape));
            }
            Op::Permute { x, perm } => {
                let mut inv = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                self.accumulate(grads, *x, permute_data(g, &inv));
            }
            Op::Concat { xs, axis } => {
                let (outer, total, inner) = split_axis(out.shape(), *axis);
                let mut offset = 0;
                for &v in xs {
                    let vv = self.value(v);
                    let n = vv.dim(*axis);
                    if self.needs(v) {
                        let mut d = Vec::with_capacity(vv.numel());
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            d.extend_from_slice(&g.data()[base..base + n * inner]);
                        }
                        self.accumulate(grads, v, Tensor::new(vv.shape().to_vec(), d));
                    }
                    offset += n;
                }
            }
            Op::Narrow { x, axis, start } => {
                let xv = self.value(*x);
                let (outer, n, inner) = split_axis(xv.shape(), *axis);
                let len = out.dim(*axis);
                let mut dx = vec![0.0; xv.numel()];
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    let src = o * len * inner;
                    dx[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx));
            }
            Op::IndexSelect { x, axis, indices } => {
                let xv = self.value(*x);
                let (outer, n, inner) = split_axis(xv.shape(), *axis);
                let mut dx = vec![0.0; xv.numel()];
                for o in 0..outer {
                    for (j, &idx) in indices.iter().enumerate() {
                        let src = (o * indices.len() + j) * inner;
                        let dst = (o * n + idx) * inner;
                        for c in 0..inner {
                            dx[dst + c] += g.data()[src + c];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx));
            }
            Op::EmbeddingBag { w, bags } => {
                let wv = self.value(*w);
                let d = wv.dim(1);
                let mut dw = vec![0.0; wv.numel()];
                for (b, bag) in bags.iter().enumerate() {
                    let gr = &g.data()[b * d..(b + 1) * d];
                    for &(idx, weight) in bag {
                        for (dd, gg) in dw[idx * d..(idx + 1) * d].iter_mut().zip(gr) {
                            *dd += weight * gg;
                        }
                    }
                }
                self.accumulate(grads, *w, Tensor::new(wv.shape().to_vec(), dw));
            }
            Op::Mse(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let s = 2.0 * g.item() / av.numel().max(1) as f64;
                let da: Vec<f64> = av.data().iter().zip(bv.data()).map(|(x, y)| s * (x - y)).collect();
                if self.needs(*b) {
                    self.accumulate(grads, *b, Tensor::new(av.shape().to_vec(), da.iter().map(|v| -v).collect()));
                }
                self.accumulate(grads, *a, Tensor::new(av.shape().to_vec(), da));
            }
            Op::CrossEntropy { logits, targets } => {
                let lv = self.value(*logits);
                let (rows, c) = lv.rows_cols();
                let s = g.item() / rows.max(1) as f64;
                let mut d = vec![0.0; lv.numel()];
                for ((row, dr), &t) in lv.data().chunks(c).zip(d.chunks_mut(c)).zip(targets) {
                    let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                    let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
                    for (dd, x) in dr.iter_mut().zip(row) {
                        *dd = s * (x - m).exp() / z;
                    }
                    dr[t] -= s;
                }
                self.accumulate(grads, *logits, Tensor::new(lv.shape().to_vec(), d));
            }
            Op::SumAll(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, Tensor::full(shape, g.item()));
            }
            Op::MeanAll(a) => {
                let av = self.value(*a);
                let s = g.item() / av.numel().max(1) as f64;
                self.accumulate(grads, *a, Tensor::full(av.shape().to_vec(), s));
            }
        }
    }
}
