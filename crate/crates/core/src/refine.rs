//! Test-time refinement of the codec latent toward waypoints, the per-frame
//! joint IK baseline, and the text + trajectory generation pipeline.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tlc_autograd::{Graph, Tensor};

use crate::error::{Error, Result};
use crate::metrics::avg_keyframe_error;
use crate::motion::{
    recover_global_positions, recover_vjp, root_track, rotate_y, JointGroup, JointPositions, MotionClip,
    PartialTrajectory, PoseFeatureLayout, SkeletonSpec,
};
use crate::mtt::{sample_codes, Mtt};
use crate::optim::{lbfgs, Objective, OptimizeConfig, OptimizerTrace, StopReason};
use crate::vqvae::{Codec, LatentSequence};

/// Mean squared distance (m²) between the recovered key joints of the decoded
/// latent and the specified waypoints, with its exact latent gradient.
pub struct ControlObjective<'a> {
    codec: &'a Codec,
    traj: &'a PartialTrajectory,
    skeleton: SkeletonSpec,
    layout: PoseFeatureLayout,
    steps: usize,
}

impl<'a> ControlObjective<'a> {
    pub fn new(codec: &'a Codec, traj: &'a PartialTrajectory, steps: usize) -> Result<ControlObjective<'a>> {
        let frames = steps * codec.downsample();
        if traj.len() != frames {
            return Err(Error::Shape(format!("{}-frame trajectory for a {frames}-frame latent", traj.len())));
        }
        Ok(ControlObjective {
            codec,
            traj,
            skeleton: SkeletonSpec::smpl22(),
            layout: PoseFeatureLayout::new(codec.config.num_joints),
            steps,
        })
    }

    pub fn value_and_gradient(&self, latent: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.traj.num_specified();
        let width = self.codec.latent_width();
        if latent.len() != self.steps * width {
            return Err(Error::Shape(format!("latent has {} values, expected {}", latent.len(), self.steps * width)));
        }
        if n == 0 {
            return Ok((0.0, vec![0.0; latent.len()]));
        }
        let mut g = Graph::frozen(&self.codec.store);
        let z = g.input(Tensor::new([1, self.steps, width], latent.to_vec()));
        let out = self.codec.decode_graph(&mut g, z);
        let stats = &self.codec.stats;
        let m = stats.dim();
        let frames = self.traj.len();
        let normalized = g.value(out).data();
        let feats: Vec<f64> =
            normalized.iter().enumerate().map(|(i, v)| v * stats.std[i % m] + stats.mean[i % m]).collect();
        let clip = MotionClip::new(feats, frames, m, 20.0)?;
        let pos = recover_global_positions(&clip, &self.layout)?;

        let denom = 3.0 * n as f64;
        let mut f = 0.0;
        let mut gpos = JointPositions::zeros(frames, self.layout.num_joints);
        for (grp, t, w) in self.traj.specified() {
            let k = self.skeleton.key_joint(grp);
            let p = pos.get(t, k);
            let mut gp = gpos.get(t, k);
            for a in 0..3 {
                let d = p[a] - w[a];
                f += d * d / denom;
                gp[a] += 2.0 * d / denom;
            }
            gpos.set(t, k, gp);
        }
        let mut dfeat = recover_vjp(&clip, &self.layout, &gpos)?;
        for (i, v) in dfeat.iter_mut().enumerate() {
            *v *= stats.std[i % m];
        }
        let grads = g.backward_with(out, Tensor::new([1, frames, m], dfeat));
        let dz = grads.get(z).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; latent.len()]);
        Ok((f, dz))
    }
}

impl Objective for ControlObjective<'_> {
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.value_and_gradient(x)
    }
}

/// Least-squares harness: `decode(z) = W z`, targets on a subset of rows.
/// The objective mirrors [`ControlObjective`]: mean squared residual over
/// the selected rows.
#[derive(Clone, Debug)]
pub struct LinearDecoderObjective {
    pub w: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub rows: Vec<usize>,
}

impl LinearDecoderObjective {
    fn selected(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.w.ncols(), |i, j| self.w[(self.rows[i], j)])
    }

    /// Objective at the normal-equations solution.
    pub fn optimum(&self) -> f64 {
        let a = self.selected();
        let b = DVector::from_iterator(self.rows.len(), self.rows.iter().map(|&r| self.targets[r]));
        let svd = a.clone().svd(true, true);
        let z = svd.solve(&b, 1e-12).expect("svd with both factors");
        (a * z - b).norm_squared() / self.rows.len() as f64
    }
}

impl Objective for LinearDecoderObjective {
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let out = &self.w * DVector::from_column_slice(x);
        let n = self.rows.len() as f64;
        let mut resid = DVector::zeros(self.w.nrows());
        let mut f = 0.0;
        for &r in &self.rows {
            let d = out[r] - self.targets[r];
            f += d * d / n;
            resid[r] = 2.0 * d / n;
        }
        Ok((f, (self.w.transpose() * resid).as_slice().to_vec()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineResult {
    pub latent: LatentSequence,
    /// Decoded motion in meters.
    pub motion: MotionClip,
    pub trace: OptimizerTrace,
    pub stop: Option<StopReason>,
    pub evaluations: usize,
}

/// L-BFGS from `start` on any objective over the flat latent.
pub fn refine_with(
    start: &LatentSequence,
    objective: &mut dyn Objective,
    config: &OptimizeConfig,
    on_iteration: &mut dyn FnMut(&OptimizerTrace) -> bool,
) -> Result<(LatentSequence, OptimizerTrace, StopReason, usize)> {
    let min = lbfgs(objective, &start.data, config, on_iteration)?;
    let mut latent = start.clone();
    latent.data = min.x;
    latent.quantized = false;
    Ok((latent, min.trace, min.stop, min.evaluations))
}

pub fn decode_meters(codec: &Codec, latent: &LatentSequence) -> Result<MotionClip> {
    codec.stats.denormalize(&codec.decode_full(latent)?)
}

/// Continuous refinement of `start` toward the waypoints of `traj`. A
/// trajectory without waypoints returns `start` unchanged.
pub fn refine_latent(
    start: &LatentSequence,
    traj: &PartialTrajectory,
    codec: &Codec,
    config: &OptimizeConfig,
    on_iteration: &mut dyn FnMut(&OptimizerTrace) -> bool,
) -> Result<RefineResult> {
    config.validate()?;
    let mut objective = ControlObjective::new(codec, traj, start.steps)?;
    if traj.num_specified() == 0 {
        return Ok(RefineResult {
            latent: start.clone(),
            motion: decode_meters(codec, start)?,
            trace: OptimizerTrace { converged: true, ..Default::default() },
            stop: None,
            evaluations: 0,
        });
    }
    let (latent, trace, stop, evaluations) = refine_with(start, &mut objective, config, on_iteration)?;
    Ok(RefineResult { motion: decode_meters(codec, &latent)?, latent, trace, stop: Some(stop), evaluations })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkConfig {
    pub steps: usize,
    pub step_size: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        IkConfig { steps: 50, step_size: 0.05 }
    }
}

/// Per-frame gradient descent on each constrained frame's local joint
/// positions and root height, in meters. Frames without waypoints, and every
/// other channel, pass through unchanged.
pub fn joint_ik_baseline(clip: &MotionClip, traj: &PartialTrajectory, config: &IkConfig) -> Result<MotionClip> {
    let skeleton = SkeletonSpec::smpl22();
    let layout = PoseFeatureLayout::new(skeleton.num_joints());
    clip.check_layout(&layout)?;
    if traj.len() != clip.frames() {
        return Err(Error::Shape(format!("{}-frame trajectory for a {}-frame clip", traj.len(), clip.frames())));
    }
    let track = root_track(clip);
    let mut out = clip.clone();
    for t in 0..clip.frames() {
        let targets: Vec<(usize, [f64; 3])> =
            JointGroup::ALL.iter().filter_map(|&g| traj.get(g, t).map(|w| (skeleton.key_joint(g), w))).collect();
        if targets.is_empty() {
            continue;
        }
        let (yaw, root) = (track.yaw[t], track.xz[t]);
        let frame = out.frame_mut(t);
        for _ in 0..config.steps {
            for &(j, w) in &targets {
                if j == 0 {
                    let h = &mut frame[PoseFeatureLayout::ROOT_HEIGHT];
                    *h -= config.step_size * 2.0 * (*h - w[1]);
                    continue;
                }
                let k = layout.local_pos(j);
                let r = rotate_y(yaw, frame[k], frame[k + 2]);
                let g = [2.0 * (r[0] + root[0] - w[0]), 2.0 * (frame[k + 1] - w[1]), 2.0 * (r[1] + root[1] - w[2])];
                // pull the world-space gradient back into the body frame
                let gl = rotate_y(-yaw, g[0], g[2]);
                frame[k] -= config.step_size * gl[0];
                frame[k + 1] -= config.step_size * g[1];
                frame[k + 2] -= config.step_size * gl[1];
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSample {
    /// Motion in meters.
    pub motion: MotionClip,
    pub positions: JointPositions,
    /// Sampled code indices, `steps x slots`.
    pub indices: Vec<usize>,
    /// Mean keyframe error (m) of the refined motion; `None` without waypoints.
    pub avg_err_m: Option<f64>,
    /// Mean keyframe error (m) of the decoded coarse prediction.
    pub unrefined_avg_err_m: Option<f64>,
    pub trace: OptimizerTrace,
    pub stop: Option<StopReason>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateOptions {
    pub num_samples: usize,
    pub optimize: OptimizeConfig,
    /// Skip refinement even when waypoints are given.
    pub skip_refinement: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions { num_samples: 1, optimize: OptimizeConfig::default(), skip_refinement: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Progress {
    pub sample: usize,
    pub iteration: usize,
    pub objective: f64,
}

/// Per-sample generator: sample `i` draws its code noise from stream `i` of
/// the seeded generator, so samples are independent of `num_samples`.
pub fn sample_rng(seed: u64, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample as u64);
    rng
}

/// Text + trajectory to motion: coarse code prediction, Gumbel sampling,
/// then latent refinement when waypoints are present. `on_progress`
/// returning `false` cancels.
pub fn generate_motion(
    model: &Mtt,
    text: &str,
    traj: &PartialTrajectory,
    seed: u64,
    options: &GenerateOptions,
    on_progress: &mut dyn FnMut(Progress) -> bool,
) -> Result<Vec<GeneratedSample>> {
    if text.trim().is_empty() && traj.num_specified() == 0 {
        return Err(Error::Input("both the text and the trajectory are empty".into()));
    }
    if options.num_samples == 0 {
        return Err(Error::Input("num_samples must be at least 1".into()));
    }
    options.optimize.validate()?;
    let codec = &model.codec;
    let skeleton = SkeletonSpec::smpl22();
    let layout = PoseFeatureLayout::new(codec.config.num_joints);
    let logits = model.predict_code_logits(traj, text)?;
    let has_targets = traj.num_specified() > 0;
    let mut out = Vec::with_capacity(options.num_samples);
    for i in 0..options.num_samples {
        let mut rng = sample_rng(seed, i);
        let sampled = sample_codes(&logits, 1.0, &mut rng, &codec.codebooks)?;
        let coarse = decode_meters(codec, &sampled.latent)?;
        let coarse_pos = recover_global_positions(&coarse, &layout)?;
        let unrefined = if has_targets { Some(avg_keyframe_error(&coarse_pos, traj, &skeleton)?) } else { None };
        if !has_targets || options.skip_refinement {
            out.push(GeneratedSample {
                motion: coarse,
                positions: coarse_pos,
                indices: sampled.indices,
                avg_err_m: unrefined,
                unrefined_avg_err_m: unrefined,
                trace: OptimizerTrace::default(),
                stop: None,
            });
            continue;
        }
        let mut cancelled = false;
        let r = refine_latent(&sampled.latent, traj, codec, &options.optimize, &mut |tr| {
            let keep = on_progress(Progress {
                sample: i,
                iteration: tr.iterations,
                objective: tr.objective.last().copied().unwrap_or(f64::NAN),
            });
            cancelled |= !keep;
            keep
        })?;
        if cancelled {
            return Err(Error::Cancelled);
        }
        let pos = recover_global_positions(&r.motion, &layout)?;
        out.push(GeneratedSample {
            avg_err_m: Some(avg_keyframe_error(&pos, traj, &skeleton)?),
            motion: r.motion,
            positions: pos,
            indices: sampled.indices,
            unrefined_avg_err_m: unrefined,
            trace: r.trace,
            stop: r.stop,
        });
    }
    Ok(out)
}
