use rand::Rng;
use tlc_autograd::nn::Conv1d;
use tlc_autograd::{ConvSpec, Graph, ParamStore, Tensor, Var};

use super::codebook::Codebook;
use super::config::{CodecVariant, VqvaeConfig};
use crate::dataset::NormStats;
use crate::error::{Error, Result};
use crate::motion::{GroupPartition, JointGroup, MotionClip, SkeletonSpec};

/// Per-step latent for one clip: `steps x slots x slot_dim`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSequence {
    pub steps: usize,
    pub slots: usize,
    pub slot_dim: usize,
    pub data: Vec<f64>,
    pub quantized: bool,
}

impl LatentSequence {
    pub fn zeros(steps: usize, slots: usize, slot_dim: usize) -> LatentSequence {
        LatentSequence { steps, slots, slot_dim, data: vec![0.0; steps * slots * slot_dim], quantized: false }
    }

    pub fn width(&self) -> usize {
        self.slots * self.slot_dim
    }

    pub fn slot(&self, t: usize, k: usize) -> &[f64] {
        let o = (t * self.slots + k) * self.slot_dim;
        &self.data[o..o + self.slot_dim]
    }

    pub fn slot_mut(&mut self, t: usize, k: usize) -> &mut [f64] {
        let o = (t * self.slots + k) * self.slot_dim;
        &mut self.data[o..o + self.slot_dim]
    }

    /// `[1, steps, width]`.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, self.steps, self.width()], self.data.clone())
    }
}

#[derive(Clone, Debug)]
struct ResBlock {
    a: Conv1d,
    b: Conv1d,
}

impl ResBlock {
    fn new(store: &mut ParamStore, name: &str, width: usize, dilation: usize, rng: &mut impl Rng) -> ResBlock {
        ResBlock {
            a: Conv1d::new(store, &format!("{name}.a"), width, width, ConvSpec::same(3, dilation), rng),
            b: Conv1d::new(store, &format!("{name}.b"), width, width, ConvSpec::same(1, 1), rng),
        }
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = g.relu(x);
        let h = self.a.forward(g, h);
        let h = g.relu(h);
        let h = self.b.forward(g, h);
        g.add(x, h)
    }
}

fn res_stack(store: &mut ParamStore, name: &str, c: &VqvaeConfig, width: usize, rng: &mut impl Rng) -> Vec<ResBlock> {
    (0..c.res_depth)
        .map(|i| ResBlock::new(store, &format!("{name}.{i}"), width, c.dilation_growth.pow(i as u32), rng))
        .collect()
}

#[derive(Clone, Debug)]
struct Encoder {
    channels: Vec<usize>,
    conv_in: Conv1d,
    stages: Vec<(Conv1d, Vec<ResBlock>)>,
    conv_out: Conv1d,
}

impl Encoder {
    fn new(store: &mut ParamStore, name: &str, channels: Vec<usize>, out: usize, c: &VqvaeConfig, rng: &mut impl Rng) -> Encoder {
        let w = c.enc_width;
        let down = ConvSpec { kernel: 4, stride: 2, padding: 1, dilation: 1 };
        Encoder {
            conv_in: Conv1d::new(store, &format!("{name}.in"), channels.len(), w, ConvSpec::same(3, 1), rng),
            stages: (0..c.stages())
                .map(|s| {
                    (
                        Conv1d::new(store, &format!("{name}.down{s}"), w, w, down, rng),
                        res_stack(store, &format!("{name}.res{s}"), c, w, rng),
                    )
                })
                .collect(),
            conv_out: Conv1d::new(store, &format!("{name}.out"), w, out, ConvSpec::same(3, 1), rng),
            channels,
        }
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let x = g.index_select(x, 2, &self.channels);
        let h = self.conv_in.forward(g, x);
        let mut h = g.relu(h);
        for (down, res) in &self.stages {
            h = down.forward(g, h);
            for r in res {
                h = r.forward(g, h);
            }
        }
        let h = self.conv_out.forward(g, h);
        g.l2_normalize(h, 1e-12)
    }
}

#[derive(Clone, Debug)]
struct Decoder {
    conv_in: Conv1d,
    stages: Vec<(Vec<ResBlock>, Conv1d)>,
    conv_mid: Conv1d,
    conv_out: Conv1d,
}

impl Decoder {
    fn new(store: &mut ParamStore, c: &VqvaeConfig, out: usize, rng: &mut impl Rng) -> Decoder {
        let w = c.dec_width;
        Decoder {
            conv_in: Conv1d::new(store, "dec.in", c.latent_width(), w, ConvSpec::same(3, 1), rng),
            stages: (0..c.stages())
                .map(|s| {
                    let mut res = res_stack(store, &format!("dec.res{s}"), c, w, rng);
                    res.reverse();
                    (res, Conv1d::new(store, &format!("dec.up{s}"), w, w, ConvSpec::same(3, 1), rng))
                })
                .collect(),
            conv_mid: Conv1d::new(store, "dec.mid", w, w, ConvSpec::same(3, 1), rng),
            conv_out: Conv1d::new(store, "dec.out", w, out, ConvSpec::same(3, 1), rng),
        }
    }

    fn forward(&self, g: &mut Graph, z: Var) -> Var {
        let h = self.conv_in.forward(g, z);
        let mut h = g.relu(h);
        for (res, conv) in &self.stages {
            for r in res {
                h = r.forward(g, h);
            }
            h = g.upsample(h, 2);
            h = conv.forward(g, h);
        }
        let h = self.conv_mid.forward(g, h);
        let h = g.relu(h);
        self.conv_out.forward(g, h)
    }
}

/// Trained or freshly initialized motion codec.
///
/// Encoders, decoder, and normalization statistics; codebooks are kept apart
/// from the gradient-trained parameters because only the moving-average
/// update changes them.
#[derive(Clone, Debug)]
pub struct Codec {
    pub config: VqvaeConfig,
    pub store: ParamStore,
    pub codebooks: Vec<Codebook>,
    pub stats: NormStats,
    encoders: Vec<Encoder>,
    decoder: Decoder,
}

impl Codec {
    pub fn new(config: VqvaeConfig, stats: NormStats, rng: &mut impl Rng) -> Result<Codec> {
        config.validate()?;
        let skeleton = SkeletonSpec::smpl22();
        if config.num_joints != skeleton.num_joints() {
            return Err(Error::Config(format!("only the {}-joint skeleton is supported", skeleton.num_joints())));
        }
        let partition = GroupPartition::new(&skeleton)?;
        let m = partition.feature_dim();
        if stats.dim() != m {
            return Err(Error::Layout(format!("stats have {} channels, features {m}", stats.dim())));
        }
        let mut store = ParamStore::new();
        let encoders = match config.variant {
            CodecVariant::PartBased => JointGroup::ALL
                .iter()
                .map(|&g| {
                    let ch = partition.channels(g).to_vec();
                    Encoder::new(&mut store, &format!("enc.{}", g.name()), ch, config.code_dim, &config, rng)
                })
                .collect(),
            CodecVariant::Unsplit => {
                vec![Encoder::new(&mut store, "enc.body", (0..m).collect(), config.slot_dim(), &config, rng)]
            }
        };
        let decoder = Decoder::new(&mut store, &config, m, rng);
        let codebooks = (0..config.slots())
            .map(|_| {
                let codes = (0..config.codebook_size * config.slot_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                Codebook::new(codes, config.codebook_size, config.slot_dim())
            })
            .collect::<Result<_>>()?;
        Ok(Codec { config, store, codebooks, stats, encoders, decoder })
    }

    /// Whole-body counterpart with one encoder and one codebook.
    pub fn build_unsplit_variant(config: &VqvaeConfig, stats: NormStats, rng: &mut impl Rng) -> Result<Codec> {
        let config = VqvaeConfig { variant: CodecVariant::Unsplit, ..config.clone() };
        Codec::new(config, stats, rng)
    }

    pub fn feature_dim(&self) -> usize {
        self.stats.dim()
    }

    pub fn downsample(&self) -> usize {
        self.config.downsample
    }

    pub fn slots(&self) -> usize {
        self.config.slots()
    }

    pub fn slot_dim(&self) -> usize {
        self.config.slot_dim()
    }

    pub fn latent_width(&self) -> usize {
        self.config.latent_width()
    }

    /// Continuous per-slot latents, each `[B, T/s, slot_dim]`.
    pub fn encode_graph(&self, g: &mut Graph, x: Var) -> Vec<Var> {
        self.encoders.iter().map(|e| e.forward(g, x)).collect()
    }

    /// `[B, L, width] -> [B, L*s, M]`.
    pub fn decode_graph(&self, g: &mut Graph, z: Var) -> Var {
        self.decoder.forward(g, z)
    }

    fn check_frames(&self, frames: usize) -> Result<()> {
        if frames == 0 || frames % self.downsample() != 0 {
            return Err(Error::Shape(format!("{frames} frames is not a multiple of {}", self.downsample())));
        }
        Ok(())
    }

    pub fn encode_groups(&self, clip: &MotionClip) -> Result<LatentSequence> {
        clip.check_layout(&crate::motion::PoseFeatureLayout::new(self.config.num_joints))?;
        self.check_frames(clip.frames())?;
        let mut g = Graph::frozen(&self.store);
        let x = g.constant(Tensor::new([1, clip.frames(), clip.dim()], clip.features().to_vec()));
        let outs = self.encode_graph(&mut g, x);
        let steps = clip.frames() / self.downsample();
        let mut lat = LatentSequence::zeros(steps, self.slots(), self.slot_dim());
        for (k, o) in outs.iter().enumerate() {
            let v = g.value(*o).data();
            for t in 0..steps {
                lat.slot_mut(t, k).copy_from_slice(&v[t * self.slot_dim()..(t + 1) * self.slot_dim()]);
            }
        }
        Ok(lat)
    }

    pub fn quantize_nearest(&self, latent: &LatentSequence) -> Result<(LatentSequence, Vec<usize>)> {
        quantize_nearest(latent, &self.codebooks)
    }

    /// Latent built from code indices (`steps x slots`).
    pub fn latent_from_indices(&self, indices: &[usize], steps: usize) -> Result<LatentSequence> {
        if indices.len() != steps * self.slots() {
            return Err(Error::Shape(format!("{} indices for {steps} steps", indices.len())));
        }
        let mut lat = LatentSequence::zeros(steps, self.slots(), self.slot_dim());
        lat.quantized = true;
        for t in 0..steps {
            for k in 0..self.slots() {
                let i = indices[t * self.slots() + k];
                if i >= self.config.codebook_size {
                    return Err(Error::Shape(format!("code index {i} out of range")));
                }
                lat.slot_mut(t, k).copy_from_slice(self.codebooks[k].code(i));
            }
        }
        Ok(lat)
    }

    /// Normalized features for a latent of width `6 * code_dim`.
    pub fn decode_full(&self, latent: &LatentSequence) -> Result<MotionClip> {
        if latent.width() != self.latent_width() {
            return Err(Error::Shape(format!("latent width {} but decoder expects {}", latent.width(), self.latent_width())));
        }
        let mut g = Graph::frozen(&self.store);
        let z = g.constant(latent.to_tensor());
        let out = self.decode_graph(&mut g, z);
        let frames = latent.steps * self.downsample();
        MotionClip::new(g.value(out).data().to_vec(), frames, self.feature_dim(), 20.0)
    }

    /// Encode, quantize, and decode a normalized clip.
    pub fn reconstruct(&self, clip: &MotionClip) -> Result<MotionClip> {
        let (q, _) = self.quantize_nearest(&self.encode_groups(clip)?)?;
        let mut out = self.decode_full(&q)?;
        out.fps = clip.fps;
        Ok(out)
    }
}

/// Replaces each slot vector with its nearest code.
pub fn quantize_nearest(latent: &LatentSequence, codebooks: &[Codebook]) -> Result<(LatentSequence, Vec<usize>)> {
    if codebooks.len() != latent.slots {
        return Err(Error::Shape(format!("{} codebooks for {} slots", codebooks.len(), latent.slots)));
    }
    for cb in codebooks {
        if cb.size == 0 {
            return Err(Error::Config("empty codebook".into()));
        }
        if cb.dim != latent.slot_dim {
            return Err(Error::Shape(format!("code width {} but latent slot width {}", cb.dim, latent.slot_dim)));
        }
    }
    let mut out = latent.clone();
    out.quantized = true;
    let mut idx = Vec::with_capacity(latent.steps * latent.slots);
    for t in 0..latent.steps {
        for (k, cb) in codebooks.iter().enumerate() {
            let i = cb.nearest(latent.slot(t, k));
            out.slot_mut(t, k).copy_from_slice(cb.code(i));
            idx.push(i);
        }
    }
    Ok((out, idx))
}
