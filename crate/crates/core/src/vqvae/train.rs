use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tlc_autograd::optim::{clip_grad_norm, AdamW};
use tlc_autograd::{Graph, Tensor};

use super::config::VqvaeConfig;
use super::model::Codec;
use crate::dataset::{Corpus, NormStats};
use crate::error::{Error, Result, TrainingError};
use crate::motion::MotionClip;
use crate::schedule::{batches_per_epoch, cosine_lr, epoch_batches};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VqStepLoss {
    pub step: usize,
    pub total: f64,
    pub recon: f64,
    /// Encoder-to-code distance, weighted by beta in `total`.
    pub commit: f64,
    /// Code-to-encoder distance. Same value as `commit`; carries no gradient
    /// because codes move by moving average.
    pub quant: f64,
    pub resets: usize,
}

/// Trains on the corpus training split, normalized with the corpus stats.
pub fn train_vqvae(
    corpus: &Corpus,
    config: &VqvaeConfig,
    seed: u64,
    on_step: &mut dyn FnMut(&VqStepLoss),
) -> Result<(Codec, Vec<VqStepLoss>)> {
    let clips = corpus.train().map(|s| corpus.stats.normalize(&s.motion)).collect::<Result<Vec<_>>>()?;
    train_vqvae_on(&clips, corpus.stats.clone(), config, seed, on_step)
}

/// Trains on already-normalized clips.
pub fn train_vqvae_on(
    clips: &[MotionClip],
    stats: NormStats,
    config: &VqvaeConfig,
    seed: u64,
    on_step: &mut dyn FnMut(&VqStepLoss),
) -> Result<(Codec, Vec<VqStepLoss>)> {
    config.validate()?;
    if clips.is_empty() {
        return Err(Error::Input("no training clips".into()));
    }
    let frames = clips[0].frames();
    let m = clips[0].dim();
    if clips.iter().any(|c| c.frames() != frames || c.dim() != m) {
        return Err(Error::Shape("training clips must share length and width".into()));
    }
    let window = config.window.min(frames - frames % config.downsample);
    if window == 0 {
        return Err(Error::Shape(format!("clips of {frames} frames are shorter than one latent step")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codec = Codec::new(config.clone(), stats, &mut rng)?;
    let mut opt = AdamW::new(config.lr, config.weight_decay);
    let total = config.epochs * batches_per_epoch(clips.len(), config.batch_size);
    let mut history = Vec::with_capacity(total);
    let mut step = 0;
    for _ in 0..config.epochs {
        for batch in epoch_batches(clips.len(), config.batch_size, &mut rng) {
            let mut x = Vec::with_capacity(batch.len() * window * m);
            for &i in &batch {
                let start = rng.gen_range(0..=frames - window);
                x.extend_from_slice(&clips[i].features()[start * m..(start + window) * m]);
            }
            let x = Tensor::new([batch.len(), window, m], x);
            let last_good = codec.store.clone();
            let (loss, grads, latents) = vq_step(&mut codec, x, step == 0, &mut rng);
            if !loss.total.is_finite() {
                return Err(Error::Training(Box::new(TrainingError { step, loss: loss.total, last_good })));
            }
            let mut grads = grads;
            clip_grad_norm(&mut grads, config.grad_clip);
            opt.lr = cosine_lr(step, total, config.lr, config.lr_final);
            opt.step(&mut codec.store, &grads);

            let mut resets = 0;
            for (cb, (flat, idx)) in codec.codebooks.iter_mut().zip(&latents) {
                cb.ema_update(flat, idx, config.ema_decay);
                if step >= config.reset_warmup_steps {
                    resets += cb.reset_dead(flat, config.reset_threshold, &mut rng);
                }
            }
            let rec = VqStepLoss { step, resets, ..loss };
            on_step(&rec);
            history.push(rec);
            step += 1;
        }
    }
    Ok((codec, history))
}

type SlotBatch = (Vec<f64>, Vec<usize>);

/// One forward/backward pass. Returns losses, parameter gradients, and each
/// slot's encoder outputs with their nearest-code assignments.
fn vq_step(
    codec: &mut Codec,
    x: Tensor,
    init_codebooks: bool,
    rng: &mut impl Rng,
) -> (VqStepLoss, Vec<(tlc_autograd::ParamId, Tensor)>, Vec<SlotBatch>) {
    let beta = codec.config.beta;
    if init_codebooks {
        let mut g = Graph::frozen(&codec.store);
        let xv = g.constant(x.clone());
        let outs = codec.encode_graph(&mut g, xv);
        let vals: Vec<Vec<f64>> = outs.iter().map(|o| g.value(*o).data().to_vec()).collect();
        drop(g);
        for (cb, v) in codec.codebooks.iter_mut().zip(&vals) {
            cb.init_from(v, rng);
        }
    }
    let mut g = Graph::new(&codec.store);
    let xv = g.constant(x);
    let outs = codec.encode_graph(&mut g, xv);
    let mut latents = Vec::with_capacity(outs.len());
    let mut commit_terms = Vec::with_capacity(outs.len());
    let mut st = Vec::with_capacity(outs.len());
    let mut commit = 0.0;
    for (k, &o) in outs.iter().enumerate() {
        let cb = &codec.codebooks[k];
        let val = g.value(o).clone();
        let flat = val.data().to_vec();
        let idx: Vec<usize> = flat.chunks_exact(cb.dim).map(|q| cb.nearest(q)).collect();
        let mut qhat = Vec::with_capacity(flat.len());
        for &i in &idx {
            qhat.extend_from_slice(cb.code(i));
        }
        let qhat = Tensor::new(val.shape().to_vec(), qhat);
        let delta = Tensor::new(val.shape().to_vec(), qhat.data().iter().zip(&flat).map(|(a, b)| a - b).collect());
        let target = g.constant(qhat);
        let c = g.mse(o, target);
        commit += g.value(c).item();
        commit_terms.push(c);
        // straight-through: forward value is the code, gradient is the identity
        let dv = g.constant(delta);
        st.push(g.add(o, dv));
        latents.push((flat, idx));
    }
    let z = g.concat(&st, 2);
    let out = codec.decode_graph(&mut g, z);
    let recon = g.mse(out, xv);
    let mut loss = recon;
    for c in commit_terms {
        let w = g.scale(c, beta);
        loss = g.add(loss, w);
    }
    let recon_v = g.value(recon).item();
    let total = g.value(loss).item() + commit;
    let grads = if total.is_finite() { g.backward(loss).into_param_grads() } else { Vec::new() };
    (VqStepLoss { step: 0, total, recon: recon_v, commit, quant: commit, resets: 0 }, grads, latents)
}
