//! Parameterised layers built from graph ops.
//!
//! Every layer owns [`ParamId`]s into a shared [`ParamStore`] and records its
//! forward pass onto a [`Graph`].

use rand::Rng;

use crate::params::{normal, uniform_fan_in};
use crate::{ConvSpec, Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let weight = store.add(format!("{name}.weight"), uniform_fan_in(&[in_dim, out_dim], in_dim, rng));
        let bias = store.add(format!("{name}.bias"), uniform_fan_in(&[out_dim], in_dim, rng));
        Self { weight, bias: Some(bias), in_dim, out_dim }
    }

    pub fn no_bias(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let weight = store.add(format!("{name}.weight"), uniform_fan_in(&[in_dim, out_dim], in_dim, rng));
        Self { weight, bias: None, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        g.linear(x, w, b)
    }
}

#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub spec: ConvSpec,
    pub in_ch: usize,
    pub out_ch: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        spec: ConvSpec,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_ch * spec.kernel;
        let weight = store.add(format!("{name}.weight"), uniform_fan_in(&[fan_in, out_ch], fan_in, rng));
        let bias = store.add(format!("{name}.bias"), uniform_fan_in(&[out_ch], fan_in, rng));
        Self { weight, bias, spec, in_ch, out_ch }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.conv1d(x, w, Some(b), self.spec)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full([dim], 1.0));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros([dim]));
        Self { gamma, beta }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gm = g.param(self.gamma);
        let bt = g.param(self.beta);
        g.layer_norm(x, gm, bt, 1e-5)
    }
}

/// Learned table of row vectors, looked up by index.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, rows: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let table = store.add(format!("{name}.table"), normal(&[rows, dim], 0.02, rng));
        Self { table, dim }
    }

    pub fn lookup(&self, g: &mut Graph, indices: &[usize]) -> Var {
        let t = g.param(self.table);
        g.index_select(t, 0, indices)
    }
}

/// Bidirectional multi-head self-attention over `[batch, len, dim]`.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub qkv: Linear,
    pub out: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut impl Rng) -> Self {
        assert_eq!(dim % heads, 0, "width {dim} not divisible by {heads} heads");
        Self {
            qkv: Linear::new(store, &format!("{name}.qkv"), dim, 3 * dim, rng),
            out: Linear::new(store, &format!("{name}.out"), dim, dim, rng),
            heads,
            dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let shape = g.shape(x).to_vec();
        let (b, l) = (shape[0], shape[1]);
        let dh = self.dim / self.heads;
        let qkv = self.qkv.forward(g, x);
        let qkv = g.reshape(qkv, &[b, l, 3, self.heads, dh]);
        let qkv = g.permute(qkv, &[2, 0, 3, 1, 4]);
        let split = |g: &mut Graph, i: usize| {
            let t = g.narrow(qkv, 0, i, 1);
            g.reshape(t, &[b, self.heads, l, dh])
        };
        let q = split(g, 0);
        let k = split(g, 1);
        let v = split(g, 2);
        let scores = g.matmul(q, k, false, true);
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
        let attn = g.softmax(scores);
        let ctx = g.matmul(attn, v, false, false);
        let ctx = g.permute(ctx, &[0, 2, 1, 3]);
        let ctx = g.reshape(ctx, &[b, l, self.dim]);
        self.out.forward(g, ctx)
    }
}

/// Pre-norm transformer encoder block.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub norm1: LayerNorm,
    pub attn: SelfAttention,
    pub norm2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl EncoderLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        ff_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim),
            attn: SelfAttention::new(store, &format!("{name}.attn"), dim, heads, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim),
            ff1: Linear::new(store, &format!("{name}.ff1"), dim, ff_dim, rng),
            ff2: Linear::new(store, &format!("{name}.ff2"), ff_dim, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.norm1.forward(g, x);
        let h = self.attn.forward(g, h);
        let x = g.add(x, h);
        let h = self.norm2.forward(g, x);
        let h = self.ff1.forward(g, h);
        let h = g.gelu(h);
        let h = self.ff2.forward(g, h);
        g.add(x, h)
    }
}
