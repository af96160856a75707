use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tlc_autograd::optim::{clip_grad_norm, AdamW};
use tlc_autograd::{Graph, Tensor};

use super::config::MttConfig;
use super::masking::{continuous_trajectory_mask, joint_level_mask, mask_rng};
use super::model::Mtt;
use super::sample::{gumbel_noise, gumbel_st_latent};
use crate::dataset::Corpus;
use crate::error::{Error, Result, TrainingError};
use crate::motion::PartialTrajectory;
use crate::schedule::{batches_per_epoch, cosine_lr, epoch_batches};
use crate::vqvae::Codec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    Continuous,
    JointLevel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MttStepLoss {
    pub step: usize,
    pub total: f64,
    pub cross_entropy: f64,
    pub recon: f64,
    pub mask_proportion: f64,
    pub tau: f64,
    pub strategy: MaskStrategy,
}

/// One training example: normalized features, teacher code indices, the full
/// key-joint trajectories, and the prompt.
#[derive(Clone, Debug)]
pub struct MttExample {
    pub features: Vec<f64>,
    pub indices: Vec<usize>,
    pub trajectory: PartialTrajectory,
    pub text: String,
}

pub fn prepare_examples<'a>(
    codec: &Codec,
    samples: impl IntoIterator<Item = &'a crate::dataset::CorpusSample>,
) -> Result<Vec<MttExample>> {
    samples
        .into_iter()
        .map(|s| {
            let x = codec.stats.normalize(&s.motion)?;
            let (_, indices) = codec.quantize_nearest(&codec.encode_groups(&x)?)?;
            Ok(MttExample {
                features: x.into_features(),
                indices,
                trajectory: s.full_trajectories.clone(),
                text: s.text.clone(),
            })
        })
        .collect()
}

/// Trains on the corpus training split against the frozen `codec`.
pub fn train_mtt(
    corpus: &Corpus,
    codec: Codec,
    config: &MttConfig,
    seed: u64,
    on_step: &mut dyn FnMut(&MttStepLoss),
) -> Result<(Mtt, Vec<MttStepLoss>)> {
    let examples = prepare_examples(&codec, corpus.train())?;
    train_mtt_on(&examples, codec, config, seed, on_step)
}

pub fn train_mtt_on(
    examples: &[MttExample],
    codec: Codec,
    config: &MttConfig,
    seed: u64,
    on_step: &mut dyn FnMut(&MttStepLoss),
) -> Result<(Mtt, Vec<MttStepLoss>)> {
    if examples.is_empty() {
        return Err(Error::Input("no training examples".into()));
    }
    let len = examples[0].trajectory.len();
    if examples.iter().any(|e| e.trajectory.len() != len) {
        return Err(Error::Shape("training examples must share one length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mtt = Mtt::new(config.clone(), codec, &mut rng)?;
    let mut opt = AdamW::new(config.lr, config.weight_decay);
    let total = config.epochs * batches_per_epoch(examples.len(), config.batch_size);
    let m = mtt.codec.feature_dim();
    let mut history = Vec::with_capacity(total);
    let mut step = 0;
    for epoch in 0..config.epochs {
        for (bi, batch) in epoch_batches(examples.len(), config.batch_size, &mut rng).into_iter().enumerate() {
            let u = if total > 1 { step as f64 / (total - 1) as f64 } else { 1.0 };
            let p = config.mask_proportion(u);
            let tau = config.temperature(u);
            let strategy = if rng.gen_bool(0.5) { MaskStrategy::Continuous } else { MaskStrategy::JointLevel };
            let masked: Vec<PartialTrajectory> = batch
                .iter()
                .enumerate()
                .map(|(j, &i)| {
                    let mut r = mask_rng(seed, epoch, bi, j);
                    match strategy {
                        MaskStrategy::Continuous => continuous_trajectory_mask(&examples[i].trajectory, p, &mut r),
                        MaskStrategy::JointLevel => joint_level_mask(&examples[i].trajectory, &mut r).0,
                    }
                })
                .collect();
            let trajs: Vec<&PartialTrajectory> = masked.iter().collect();
            let texts: Vec<&str> = batch.iter().map(|&i| examples[i].text.as_str()).collect();
            let teacher: Vec<usize> = batch.iter().flat_map(|&i| examples[i].indices.iter().copied()).collect();
            let target: Vec<f64> = batch.iter().flat_map(|&i| examples[i].features.iter().copied()).collect();

            let last_good = mtt.store.clone();
            let (loss, grads) = {
                let mut g = Graph::new(&mtt.store);
                let logits = mtt.forward(&mut g, &trajs, &texts)?;
                let shape = g.shape(logits).to_vec();
                let rows = shape[0] * shape[1] * shape[2];
                let flat = g.reshape(logits, &[rows, shape[3]]);
                let ce = g.cross_entropy(flat, &teacher);
                let noise = Tensor::new(shape.clone(), gumbel_noise(rows * shape[3], &mut rng));
                let z = gumbel_st_latent(&mut g, logits, noise, tau, &mtt.codec.codebooks);
                let out = mtt.codec.decode_graph(&mut g, z);
                let tgt = g.constant(Tensor::new([batch.len(), len, m], target));
                let recon = g.mse(out, tgt);
                let w = g.scale(recon, config.recon_weight);
                let total_v = g.add(ce, w);
                let rec = MttStepLoss {
                    step,
                    total: g.value(total_v).item(),
                    cross_entropy: g.value(ce).item(),
                    recon: g.value(recon).item(),
                    mask_proportion: p,
                    tau,
                    strategy,
                };
                let grads = if rec.total.is_finite() { g.backward(total_v).into_param_grads() } else { Vec::new() };
                (rec, grads)
            };
            if !loss.total.is_finite() {
                return Err(Error::Training(Box::new(TrainingError { step, loss: loss.total, last_good })));
            }
            let mut grads = grads;
            clip_grad_norm(&mut grads, config.grad_clip);
            opt.lr = cosine_lr(step, total, config.lr, config.lr_final);
            opt.step(&mut mtt.store, &grads);
            on_step(&loss);
            history.push(loss);
            step += 1;
        }
    }
    Ok((mtt, history))
}
