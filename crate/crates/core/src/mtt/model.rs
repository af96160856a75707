use rand::Rng;
use tlc_autograd::nn::{Embedding, EncoderLayer, LayerNorm, Linear};
use tlc_autograd::{normal, Graph, ParamId, ParamStore, Tensor, Var};

use super::config::MttConfig;
use crate::error::{Error, Result};
use crate::motion::{JointGroup, PartialTrajectory, NUM_GROUPS};
use crate::text::{TextEncoder, EMBED_DIM};
use crate::vqvae::{Codec, CodecVariant};

/// Values per waypoint in a trajectory token: xyz and a presence bit.
pub const WAYPOINT_FEATURES: usize = 4;

/// Code-index logits, `steps x slots x size`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeLogits {
    pub steps: usize,
    pub slots: usize,
    pub size: usize,
    pub data: Vec<f64>,
}

impl CodeLogits {
    pub fn row(&self, t: usize, k: usize) -> &[f64] {
        let o = (t * self.slots + k) * self.size;
        &self.data[o..o + self.size]
    }

    pub fn row_mut(&mut self, t: usize, k: usize) -> &mut [f64] {
        let o = (t * self.slots + k) * self.size;
        &mut self.data[o..o + self.size]
    }
}

/// Trajectory tokens for a batch: `[B, 6L, 4*bundle]` waypoint values and
/// `[B, 6L, 1]` masked fractions. Tokens are ordered step-major, group-minor.
pub fn trajectory_tokens(trajs: &[&PartialTrajectory], bundle: usize) -> (Tensor, Tensor) {
    let len = trajs[0].len();
    let steps = len / bundle;
    let width = WAYPOINT_FEATURES * bundle;
    let mut values = Vec::with_capacity(trajs.len() * steps * NUM_GROUPS * width);
    let mut frac = Vec::with_capacity(trajs.len() * steps * NUM_GROUPS);
    for traj in trajs {
        for t in 0..steps {
            for g in JointGroup::ALL {
                let mut missing = 0;
                for f in t * bundle..(t + 1) * bundle {
                    match traj.get(g, f) {
                        Some(p) => values.extend_from_slice(&[p[0], p[1], p[2], 1.0]),
                        None => {
                            values.extend_from_slice(&[0.0; WAYPOINT_FEATURES]);
                            missing += 1;
                        }
                    }
                }
                frac.push(missing as f64 / bundle as f64);
            }
        }
    }
    let n = trajs.len();
    (Tensor::new([n, steps * NUM_GROUPS, width], values), Tensor::new([n, steps * NUM_GROUPS, 1], frac))
}

/// Masked trajectory transformer bundled with the frozen codec whose code
/// indices it predicts.
#[derive(Clone, Debug)]
pub struct Mtt {
    pub config: MttConfig,
    /// Frozen codec entries followed by the transformer's own parameters.
    pub store: ParamStore,
    pub codec: Codec,
    text: TextEncoder,
    lang: Linear,
    traj_in: Linear,
    mask_embed: ParamId,
    group_embed: Embedding,
    pos_embed: Embedding,
    stage1: Vec<EncoderLayer>,
    bridge: Linear,
    stage2: Vec<EncoderLayer>,
    norm: LayerNorm,
    heads: Vec<Linear>,
}

impl Mtt {
    pub fn new(config: MttConfig, codec: Codec, rng: &mut impl Rng) -> Result<Mtt> {
        config.validate(codec.downsample())?;
        let mut store = codec.store.clone();
        store.freeze_all();
        let (d1, d2) = (config.stage1_width, config.stage2_width);
        let steps = config.max_len / config.bundle;
        let text = TextEncoder::new(&mut store, "mtt.text", rng);
        let lang = Linear::new(&mut store, "mtt.lang", EMBED_DIM, d1, rng);
        let traj_in = Linear::new(&mut store, "mtt.traj_in", WAYPOINT_FEATURES * config.bundle, d1, rng);
        let mask_embed = store.add("mtt.mask_embed", normal(&[1, d1], 0.02, rng));
        let group_embed = Embedding::new(&mut store, "mtt.group_embed", NUM_GROUPS, d1, rng);
        let pos_embed = Embedding::new(&mut store, "mtt.pos_embed", steps, d1, rng);
        let stage1 = (0..config.stage1_layers)
            .map(|i| EncoderLayer::new(&mut store, &format!("mtt.s1.{i}"), d1, config.heads, config.ff_mult * d1, rng))
            .collect();
        let bridge = Linear::new(&mut store, "mtt.bridge", d1, d2, rng);
        let stage2 = (0..config.stage2_layers)
            .map(|i| EncoderLayer::new(&mut store, &format!("mtt.s2.{i}"), d2, config.heads, config.ff_mult * d2, rng))
            .collect();
        let norm = LayerNorm::new(&mut store, "mtt.norm", d2);
        let size = codec.config.codebook_size;
        let heads = match codec.config.variant {
            CodecVariant::PartBased => JointGroup::ALL
                .iter()
                .map(|g| Linear::new(&mut store, &format!("mtt.head.{}", g.name()), d2, size, rng))
                .collect(),
            CodecVariant::Unsplit => vec![Linear::new(&mut store, "mtt.head.body", NUM_GROUPS * d2, size, rng)],
        };
        Ok(Mtt {
            config,
            store,
            codec,
            text,
            lang,
            traj_in,
            mask_embed,
            group_embed,
            pos_embed,
            stage1,
            bridge,
            stage2,
            norm,
            heads,
        })
    }

    pub fn slots(&self) -> usize {
        self.codec.slots()
    }

    pub fn codebook_size(&self) -> usize {
        self.codec.config.codebook_size
    }

    /// Language feature for one prompt.
    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        self.text.embed(&self.store, text)
    }

    fn check_lengths(&self, trajs: &[&PartialTrajectory]) -> Result<usize> {
        let len = trajs.first().map(|t| t.len()).ok_or_else(|| Error::Input("empty batch".into()))?;
        if trajs.iter().any(|t| t.len() != len) {
            return Err(Error::Shape("trajectories in a batch must share one length".into()));
        }
        if len == 0 || len % self.config.bundle != 0 {
            return Err(Error::Shape(format!("trajectory length {len} is not a multiple of {}", self.config.bundle)));
        }
        if len > self.config.max_len {
            return Err(Error::Shape(format!("trajectory length {len} exceeds {}", self.config.max_len)));
        }
        Ok(len / self.config.bundle)
    }

    /// Logits `[B, L, slots, |C|]`.
    pub fn forward(&self, g: &mut Graph, trajs: &[&PartialTrajectory], texts: &[&str]) -> Result<Var> {
        let steps = self.check_lengths(trajs)?;
        if texts.len() != trajs.len() {
            return Err(Error::Shape(format!("{} texts for {} trajectories", texts.len(), trajs.len())));
        }
        let b = trajs.len();
        let tokens = steps * NUM_GROUPS;
        let (d1, d2) = (self.config.stage1_width, self.config.stage2_width);

        let (values, frac) = trajectory_tokens(trajs, self.config.bundle);
        let values = g.constant(values);
        let frac = g.constant(frac);
        let x = self.traj_in.forward(g, values);
        let mw = g.param(self.mask_embed);
        let m = g.linear(frac, mw, None);
        let x = g.add(x, m);
        let group_idx: Vec<usize> = (0..tokens).map(|i| i % NUM_GROUPS).collect();
        let pos_idx: Vec<usize> = (0..tokens).map(|i| i / NUM_GROUPS).collect();
        let ge = self.group_embed.lookup(g, &group_idx);
        let pe = self.pos_embed.lookup(g, &pos_idx);
        let e = g.add(ge, pe);
        let x = g.add_broadcast(x, e);

        let lang = self.text.forward(g, texts);
        let lang = self.lang.forward(g, lang);
        let lang = g.reshape(lang, &[b, 1, d1]);
        let mut h = g.concat(&[lang, x], 1);
        for layer in &self.stage1 {
            h = layer.forward(g, h);
        }
        h = self.bridge.forward(g, h);
        for layer in &self.stage2 {
            h = layer.forward(g, h);
        }
        h = self.norm.forward(g, h);
        let h = g.narrow(h, 1, 1, tokens);
        let size = self.codebook_size();
        let logits = match self.codec.config.variant {
            CodecVariant::PartBased => {
                let h = g.reshape(h, &[b, steps, NUM_GROUPS, d2]);
                let per: Vec<Var> = self
                    .heads
                    .iter()
                    .enumerate()
                    .map(|(k, head)| {
                        let hk = g.narrow(h, 2, k, 1);
                        head.forward(g, hk)
                    })
                    .collect();
                g.concat(&per, 2)
            }
            CodecVariant::Unsplit => {
                let h = g.reshape(h, &[b, steps, NUM_GROUPS * d2]);
                let l = self.heads[0].forward(g, h);
                g.reshape(l, &[b, steps, 1, size])
            }
        };
        Ok(logits)
    }

    pub fn predict_code_logits(&self, traj: &PartialTrajectory, text: &str) -> Result<CodeLogits> {
        Ok(self.predict_batch(&[traj], &[text])?.remove(0))
    }

    pub fn predict_batch(&self, trajs: &[&PartialTrajectory], texts: &[&str]) -> Result<Vec<CodeLogits>> {
        let mut g = Graph::frozen(&self.store);
        let out = self.forward(&mut g, trajs, texts)?;
        let v = g.value(out);
        let (steps, slots, size) = (v.dim(1), v.dim(2), v.dim(3));
        Ok(v.data()
            .chunks_exact(steps * slots * size)
            .map(|c| CodeLogits { steps, slots, size, data: c.to_vec() })
            .collect())
    }
}
