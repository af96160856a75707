use rand::distributions::Open01;
use rand::Rng;
use tlc_autograd::{Graph, Tensor, Var};

use super::model::CodeLogits;
use crate::error::{Error, Result};
use crate::vqvae::{Codebook, LatentSequence};

/// Standard Gumbel draws, `-ln(-ln u)` with `u` in the open unit interval.
pub fn gumbel_noise(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            -(-u.ln()).ln()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledCodes {
    /// `steps x slots` code indices.
    pub indices: Vec<usize>,
    /// `steps x slots x size` one-hot decisions.
    pub one_hot: Vec<f64>,
    pub latent: LatentSequence,
}

/// Gumbel-max draw of one code per step and slot.
pub fn sample_codes(logits: &CodeLogits, tau: f64, rng: &mut impl Rng, codebooks: &[Codebook]) -> Result<SampledCodes> {
    let noise = gumbel_noise(logits.data.len(), rng);
    select_codes(logits, &noise, tau, codebooks)
}

/// Code selection for given noise. The forward value is the hard argmax of
/// `(logits + noise) / tau`, which does not depend on `tau`.
pub fn select_codes(logits: &CodeLogits, noise: &[f64], tau: f64, codebooks: &[Codebook]) -> Result<SampledCodes> {
    if !(tau > 0.0) {
        return Err(Error::Input(format!("temperature must be positive, got {tau}")));
    }
    if noise.len() != logits.data.len() {
        return Err(Error::Shape(format!("{} noise values for {} logits", noise.len(), logits.data.len())));
    }
    if codebooks.len() != logits.slots || codebooks.iter().any(|c| c.size != logits.size) {
        return Err(Error::Shape("codebooks do not match the logit layout".into()));
    }
    let dim = codebooks[0].dim;
    let mut latent = LatentSequence::zeros(logits.steps, logits.slots, dim);
    latent.quantized = true;
    let mut indices = Vec::with_capacity(logits.steps * logits.slots);
    let mut one_hot = vec![0.0; logits.data.len()];
    for t in 0..logits.steps {
        for k in 0..logits.slots {
            let o = (t * logits.slots + k) * logits.size;
            let row = logits.row(t, k);
            let mut best = 0;
            for i in 1..logits.size {
                if row[i] + noise[o + i] > row[best] + noise[o + best] {
                    best = i;
                }
            }
            one_hot[o + best] = 1.0;
            indices.push(best);
            latent.slot_mut(t, k).copy_from_slice(codebooks[k].code(best));
        }
    }
    Ok(SampledCodes { indices, one_hot, latent })
}

/// Straight-through Gumbel-softmax latent `[B, L, slots * dim]` from logits
/// `[B, L, slots, |C|]`: the forward value is the hard one-hot code, the
/// gradient follows the tempered softmax.
pub fn gumbel_st_latent(g: &mut Graph, logits: Var, noise: Tensor, tau: f64, codebooks: &[Codebook]) -> Var {
    let shape = g.shape(logits).to_vec();
    let (b, l, slots, size) = (shape[0], shape[1], shape[2], shape[3]);
    let noise = g.constant(noise);
    let y = g.add(logits, noise);
    let y = g.scale(y, 1.0 / tau);
    let soft = g.softmax(y);
    let sv = g.value(soft).clone();
    let yv = g.value(y).clone();
    let mut hard_minus_soft = sv.data().iter().map(|s| -s).collect::<Vec<f64>>();
    for (r, row) in yv.data().chunks_exact(size).enumerate() {
        let mut best = 0;
        for i in 1..size {
            if row[i] > row[best] {
                best = i;
            }
        }
        hard_minus_soft[r * size + best] += 1.0;
    }
    let d = g.constant(Tensor::new(shape.clone(), hard_minus_soft));
    let v = g.add(soft, d);
    let per: Vec<Var> = (0..slots)
        .map(|k| {
            let vk = g.narrow(v, 2, k, 1);
            let vk = g.reshape(vk, &[b * l, size]);
            let cb = g.constant(Tensor::new([size, codebooks[k].dim], codebooks[k].codes.clone()));
            let q = g.matmul(vk, cb, false, false);
            g.reshape(q, &[b, l, codebooks[k].dim])
        })
        .collect();
    g.concat(&per, 2)
}
