//! Batch evaluation over held-out samples: control errors, spread, Fréchet
//! distance and runtime per (variant, control set, mask rate, tolerance),
//! plus the per-frame IK comparison.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::CorpusSample;
use crate::error::{Error, Result};
use crate::metrics::{codec_features, control_accuracy, diversity, fid_proxy, flat_features, multimodality, DEFAULT_THRESHOLD_M};
use crate::motion::{recover_global_positions, JointGroup, JointPositions, PartialTrajectory, PoseFeatureLayout, SkeletonSpec};
use crate::mtt::{continuous_trajectory_mask, mask_rng, Mtt};
use crate::optim::OptimizeConfig;
use crate::refine::{decode_meters, generate_motion, joint_ik_baseline, refine_latent, sample_rng, GenerateOptions, IkConfig};
use crate::vqvae::CodecVariant;

/// Named set of groups whose trajectories are given to the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    pub name: String,
    pub groups: Vec<JointGroup>,
}

impl ControlSet {
    pub fn single(g: JointGroup) -> ControlSet {
        ControlSet { name: g.wire_name().into(), groups: vec![g] }
    }

    pub fn all() -> ControlSet {
        ControlSet { name: "all".into(), groups: JointGroup::ALL.to_vec() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSuiteConfig {
    pub control_sets: Vec<ControlSet>,
    /// Fraction of each given track's frames hidden by continuous masking.
    pub mask_rates: Vec<f64>,
    pub tolerances: Vec<f64>,
    pub variants: Vec<CodecVariant>,
    /// Held-out samples scored per row.
    pub num_inputs: usize,
    /// Generations per input, for multimodality.
    pub samples_per_input: usize,
    pub threshold_m: f64,
    pub diversity_pairs: usize,
    /// Optimizer settings other than the tolerance, which each row sets.
    pub optimize: OptimizeConfig,
}

impl Default for EvalSuiteConfig {
    fn default() -> Self {
        EvalSuiteConfig {
            control_sets: vec![ControlSet::single(JointGroup::Root), ControlSet::single(JointGroup::LeftArm), ControlSet::all()],
            mask_rates: vec![0.0, 0.25, 0.5, 0.75],
            tolerances: vec![1e-6],
            variants: vec![CodecVariant::PartBased],
            num_inputs: 20,
            samples_per_input: 4,
            threshold_m: DEFAULT_THRESHOLD_M,
            diversity_pairs: 50,
            optimize: OptimizeConfig::default(),
        }
    }
}

impl EvalSuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.control_sets.is_empty() || self.mask_rates.is_empty() || self.tolerances.is_empty() || self.variants.is_empty() {
            return Err(Error::Config("evaluation grids must be non-empty".into()));
        }
        if self.control_sets.iter().any(|c| c.groups.is_empty()) {
            return Err(Error::Config("a control set names no groups".into()));
        }
        if self.mask_rates.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::Config("mask rates must lie in [0, 1)".into()));
        }
        if self.num_inputs == 0 || self.samples_per_input < 2 {
            return Err(Error::Config("need at least one input and two samples per input".into()));
        }
        Ok(())
    }
}

/// One condition of the suite. Errors are in centimeters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub variant: String,
    pub control: String,
    pub mask_rate: f64,
    pub tolerance: f64,
    pub inputs: usize,
    pub samples: usize,
    /// Against the waypoints given to the model.
    pub traj_err: f64,
    pub loc_err: f64,
    pub avg_err_cm: f64,
    /// Same, before refinement.
    pub unrefined_avg_err_cm: f64,
    /// Against the complete ground-truth tracks of the control set, so hidden
    /// frames count too.
    pub full_avg_err_cm: f64,
    /// Fraction of samples whose refined error is at most the unrefined one.
    pub improved_fraction: f64,
    pub diversity: f64,
    pub multimodality: f64,
    pub fid: f64,
    pub mean_iterations: f64,
    pub mean_evaluations: f64,
    pub seconds_per_batch: f64,
    pub seconds_per_frame: f64,
}

/// Drops every group not in `groups`.
pub fn restrict(full: &PartialTrajectory, groups: &[JointGroup]) -> PartialTrajectory {
    let mut out = full.clone();
    for g in JointGroup::ALL {
        if !groups.contains(&g) {
            out.clear_group(g);
        }
    }
    out
}

/// Hides `floor(rate * n)` of the `n` specified frames of each group in
/// contiguous runs. Frames already unspecified (padding) do not count toward
/// the rate.
pub fn mask_specified(traj: &PartialTrajectory, rate: f64, rng: &mut impl rand::Rng) -> PartialTrajectory {
    let len = traj.len();
    let mut out = traj.clone();
    for g in JointGroup::ALL {
        let n = traj.num_specified_in(g);
        if n == 0 {
            continue;
        }
        let hidden = crate::mtt::masked_count(rate, n);
        let target = (len - n + hidden) as f64 / len as f64;
        let only = restrict(traj, &[g]);
        let masked = continuous_trajectory_mask(&only, target, rng);
        for t in 0..len {
            if !masked.is_specified(g, t) {
                out.clear(g, t);
            }
        }
    }
    out
}

struct Condition<'a> {
    model: &'a Mtt,
    control: &'a ControlSet,
    mask_rate: f64,
    tolerance: f64,
}

fn row_seed(seed: u64, row: usize) -> u64 {
    seed ^ (row as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn run_condition(c: &Condition, inputs: &[&CorpusSample], config: &EvalSuiteConfig, seed: u64) -> Result<EvalRow> {
    let codec = &c.model.codec;
    let skeleton = SkeletonSpec::smpl22();
    let options = GenerateOptions {
        num_samples: config.samples_per_input,
        optimize: OptimizeConfig { tolerance: c.tolerance, ..config.optimize.clone() },
        skip_refinement: false,
    };
    let mut given_all: Vec<PartialTrajectory> = Vec::new();
    let mut full_all: Vec<PartialTrajectory> = Vec::new();
    let mut positions: Vec<JointPositions> = Vec::new();
    let mut unrefined = Vec::new();
    let mut refined = Vec::new();
    let mut features = Vec::new();
    let mut groups = Vec::new();
    let mut gen_codec = Vec::new();
    let mut real_codec = Vec::new();
    let (mut iterations, mut evaluations, mut seconds, mut frames) = (0usize, 0usize, 0.0, 0usize);
    for (i, s) in inputs.iter().enumerate() {
        let full = restrict(&s.full_trajectories, &c.control.groups);
        let given = mask_specified(&full, c.mask_rate, &mut mask_rng(seed, 0, 0, i));
        if given.num_specified() == 0 {
            continue;
        }
        let t0 = Instant::now();
        let out = generate_motion(c.model, &s.text, &given, seed.wrapping_add(i as u64), &options, &mut |_| true)?;
        seconds += t0.elapsed().as_secs_f64();
        frames += out.len() * s.motion.frames();
        real_codec.push(codec_features(codec, &codec.stats.normalize(&s.motion)?)?);
        let mut grp = Vec::with_capacity(out.len());
        for g in out {
            iterations += g.trace.iterations;
            evaluations += g.trace.objective.len();
            unrefined.push(g.unrefined_avg_err_m.unwrap_or(0.0));
            refined.push(g.avg_err_m.unwrap_or(0.0));
            let norm = codec.stats.normalize(&g.motion)?;
            let f = flat_features(&norm, norm.frames());
            features.push(f.clone());
            grp.push(f);
            gen_codec.push(codec_features(codec, &norm)?);
            positions.push(g.positions);
            given_all.push(given.clone());
            full_all.push(full.clone());
        }
        groups.push(grp);
    }
    if positions.is_empty() {
        return Err(Error::UndefinedMetrics(format!("control set {} left no keyframes", c.control.name)));
    }
    let pairs: Vec<(&JointPositions, &PartialTrajectory)> = positions.iter().zip(&given_all).collect();
    let report = control_accuracy(&pairs, &skeleton, config.threshold_m)?;
    let pairs: Vec<(&JointPositions, &PartialTrajectory)> = positions.iter().zip(&full_all).collect();
    let full_report = control_accuracy(&pairs, &skeleton, config.threshold_m)?;
    let n = positions.len();
    let mut rng = sample_rng(seed, usize::MAX);
    Ok(EvalRow {
        variant: codec.config.variant.name().into(),
        control: c.control.name.clone(),
        mask_rate: c.mask_rate,
        tolerance: c.tolerance,
        inputs: groups.len(),
        samples: n,
        traj_err: report.traj_err_fraction,
        loc_err: report.loc_err_fraction,
        avg_err_cm: report.avg_err_cm,
        unrefined_avg_err_cm: 100.0 * unrefined.iter().sum::<f64>() / n as f64,
        full_avg_err_cm: full_report.avg_err_cm,
        improved_fraction: refined.iter().zip(&unrefined).filter(|(r, u)| r <= u).count() as f64 / n as f64,
        diversity: diversity(&features, config.diversity_pairs, &mut rng)?,
        multimodality: multimodality(&groups)?,
        fid: fid_proxy(&real_codec, &gen_codec).unwrap_or(f64::NAN),
        mean_iterations: iterations as f64 / n as f64,
        mean_evaluations: evaluations as f64 / n as f64,
        seconds_per_batch: seconds / groups.len() as f64,
        seconds_per_frame: seconds / frames as f64,
    })
}

/// Every (variant, control set, mask rate, tolerance) row over the first
/// `num_inputs` of `samples`. `models` holds one trained model per variant.
pub fn run_eval_suite(
    config: &EvalSuiteConfig,
    models: &[&Mtt],
    samples: &[CorpusSample],
    seed: u64,
    on_row: &mut dyn FnMut(&EvalRow),
) -> Result<Vec<EvalRow>> {
    config.validate()?;
    let inputs: Vec<&CorpusSample> = samples.iter().take(config.num_inputs).collect();
    if inputs.is_empty() {
        return Err(Error::Input("no evaluation samples".into()));
    }
    let mut rows = Vec::new();
    for &variant in &config.variants {
        let model = models
            .iter()
            .find(|m| m.codec.config.variant == variant)
            .ok_or_else(|| Error::Load(format!("no trained {} model", variant.name())))?;
        for (ci, control) in config.control_sets.iter().enumerate() {
            for &mask_rate in &config.mask_rates {
                for &tolerance in &config.tolerances {
                    let c = Condition { model, control, mask_rate, tolerance };
                    // the same inputs, masks and noise across variants and tolerances
                    let row = run_condition(&c, &inputs, config, row_seed(seed, ci))?;
                    on_row(&row);
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

/// Writes `{stem}.json` and `{stem}.csv` into `dir`; the CSV header is the
/// row's field names.
pub fn write_report<R: Serialize>(dir: &Path, stem: &str, rows: &[R]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(rows)?)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv"))).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    NoOpt,
    JointIk,
    LatentOpt,
}

/// One strategy's scores for the IK comparison. Errors are in centimeters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkAblationRow {
    pub control: String,
    pub mask_rate: f64,
    pub strategy: Strategy,
    pub samples: usize,
    /// Against the waypoints given to the strategy.
    pub avg_err_cm: f64,
    /// Against the complete ground-truth track, hidden frames included.
    pub full_avg_err_cm: f64,
    /// Mean joint displacement from the unrefined motion over frames that
    /// carry no waypoint.
    pub complement_drift_cm: f64,
    /// Whether every frame without waypoints kept its unrefined features bit
    /// for bit, on every sample.
    pub complement_identical: bool,
    pub fid: f64,
}

/// No refinement, per-frame IK and latent refinement from the same coarse
/// prediction, one row per strategy.
pub fn ik_ablation(
    model: &Mtt,
    samples: &[CorpusSample],
    control: &ControlSet,
    mask_rate: f64,
    optimize: &OptimizeConfig,
    ik: &IkConfig,
    seed: u64,
) -> Result<Vec<IkAblationRow>> {
    let codec = &model.codec;
    let skeleton = SkeletonSpec::smpl22();
    let layout = PoseFeatureLayout::new(codec.config.num_joints);
    let strategies = [Strategy::NoOpt, Strategy::JointIk, Strategy::LatentOpt];
    let mut acc: Vec<(Vec<JointPositions>, f64, bool, Vec<Vec<f64>>)> =
        strategies.iter().map(|_| (Vec::new(), 0.0, true, Vec::new())).collect();
    let mut givens = Vec::new();
    let mut fulls = Vec::new();
    let mut real = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let full = restrict(&s.full_trajectories, &control.groups);
        let given = mask_specified(&full, mask_rate, &mut mask_rng(seed, 0, 0, i));
        if given.num_specified() == 0 {
            continue;
        }
        let logits = model.predict_code_logits(&given, &s.text)?;
        let sampled = crate::mtt::sample_codes(&logits, 1.0, &mut sample_rng(seed.wrapping_add(i as u64), 0), &codec.codebooks)?;
        let coarse = decode_meters(codec, &sampled.latent)?;
        let coarse_pos = recover_global_positions(&coarse, &layout)?;
        let free: Vec<usize> =
            (0..given.len()).filter(|&t| JointGroup::ALL.iter().all(|&g| !given.is_specified(g, t))).collect();
        let ik_clip = joint_ik_baseline(&coarse, &given, ik)?;
        let latent_clip = refine_latent(&sampled.latent, &given, codec, optimize, &mut |_| true)?.motion;
        for (k, clip) in [&coarse, &ik_clip, &latent_clip].into_iter().enumerate() {
            let pos = recover_global_positions(clip, &layout)?;
            let mut drift = 0.0;
            for &t in &free {
                for j in 0..layout.num_joints {
                    let (a, b) = (pos.get(t, j), coarse_pos.get(t, j));
                    drift += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
                }
                acc[k].2 &= clip.frame(t) == coarse.frame(t);
            }
            if !free.is_empty() {
                acc[k].1 += 100.0 * drift / (free.len() * layout.num_joints) as f64;
            }
            acc[k].3.push(codec_features(codec, &codec.stats.normalize(clip)?)?);
            acc[k].0.push(pos);
        }
        real.push(codec_features(codec, &codec.stats.normalize(&s.motion)?)?);
        givens.push(given);
        fulls.push(full);
    }
    if givens.is_empty() {
        return Err(Error::UndefinedMetrics("no sample kept a waypoint".into()));
    }
    let n = givens.len();
    strategies
        .iter()
        .zip(acc)
        .map(|(&strategy, (pos, drift, identical, feats))| {
            let given: Vec<_> = pos.iter().zip(&givens).collect();
            let full: Vec<_> = pos.iter().zip(&fulls).collect();
            Ok(IkAblationRow {
                control: control.name.clone(),
                mask_rate,
                strategy,
                samples: n,
                avg_err_cm: control_accuracy(&given, &skeleton, DEFAULT_THRESHOLD_M)?.avg_err_cm,
                full_avg_err_cm: control_accuracy(&full, &skeleton, DEFAULT_THRESHOLD_M)?.avg_err_cm,
                complement_drift_cm: drift / n as f64,
                complement_identical: identical,
                fid: fid_proxy(&real, &feats).unwrap_or(f64::NAN),
            })
        })
        .collect()
}

/// Largest change in each sixth of the per-step latent after shifting one
/// group's input channels of the normalized `clip`.
pub fn group_leakage(codec: &crate::vqvae::Codec, clip: &crate::motion::MotionClip, group: JointGroup) -> Result<[f64; 6]> {
    let part = crate::motion::GroupPartition::new(&SkeletonSpec::smpl22())?;
    let mut moved = clip.clone();
    let dim = moved.dim();
    for t in 0..moved.frames() {
        for &c in part.channels(group) {
            moved.features_mut()[t * dim + c] += 0.5;
        }
    }
    let a = codec.encode_groups(clip)?;
    let b = codec.encode_groups(&moved)?;
    let w = a.width();
    let d = w / 6;
    let mut out = [0.0f64; 6];
    for (i, (x, y)) in a.data.iter().zip(&b.data).enumerate() {
        let k = (i % w) / d;
        out[k] = out[k].max((x - y).abs());
    }
    Ok(out)
}

/// Whether moving any one group's channels changes only that group's sixth
/// of the latent.
pub fn is_group_independent(codec: &crate::vqvae::Codec, clip: &crate::motion::MotionClip) -> Result<bool> {
    for g in JointGroup::ALL {
        let leak = group_leakage(codec, clip, g)?;
        if leak.iter().enumerate().any(|(k, &v)| k != g.index() && v != 0.0) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One codec variant's row in the part-based versus unsplit comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub latent_width: usize,
    pub group_independent: bool,
    pub train_mpjpe_cm: f64,
    pub test_mpjpe_cm: f64,
    pub control: String,
    pub mask_rate: f64,
    pub avg_err_cm: f64,
    pub unrefined_avg_err_cm: f64,
    pub full_avg_err_cm: f64,
    pub diversity: f64,
    pub multimodality: f64,
    pub fid: f64,
    pub seconds_per_batch: f64,
}

impl AblationRow {
    pub fn new(model: &Mtt, corpus: &crate::dataset::Corpus, eval: &EvalRow) -> Result<AblationRow> {
        let codec = &model.codec;
        let probe = corpus.test().next().ok_or_else(|| Error::Input("corpus has no test split".into()))?;
        Ok(AblationRow {
            variant: codec.config.variant.name().into(),
            latent_width: codec.latent_width(),
            group_independent: is_group_independent(codec, &corpus.stats.normalize(&probe.motion)?)?,
            train_mpjpe_cm: 100.0 * crate::metrics::reconstruction_mpjpe(codec, corpus.train().map(|s| &s.motion))?,
            test_mpjpe_cm: 100.0 * crate::metrics::reconstruction_mpjpe(codec, corpus.test().map(|s| &s.motion))?,
            control: eval.control.clone(),
            mask_rate: eval.mask_rate,
            avg_err_cm: eval.avg_err_cm,
            unrefined_avg_err_cm: eval.unrefined_avg_err_cm,
            full_avg_err_cm: eval.full_avg_err_cm,
            diversity: eval.diversity,
            multimodality: eval.multimodality,
            fid: eval.fid,
            seconds_per_batch: eval.seconds_per_batch,
        })
    }
}

/// Trains one codec and transformer per variant from the same settings and
/// scores each on the same condition.
pub fn run_ablation(
    corpus: &crate::dataset::Corpus,
    config: &crate::config::Config,
    variants: &[crate::vqvae::CodecVariant],
    on_log: &mut dyn FnMut(&str),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    let control = config.eval.control_sets.first().cloned().unwrap_or_else(ControlSet::all);
    let mask_rate = config.eval.mask_rates.first().copied().unwrap_or(0.0);
    let suite = EvalSuiteConfig {
        control_sets: vec![control],
        mask_rates: vec![mask_rate],
        tolerances: vec![config.optimize.tolerance],
        ..config.eval.clone()
    };
    let test: Vec<CorpusSample> = corpus.test().cloned().collect();
    for &variant in variants {
        let vq = crate::vqvae::VqvaeConfig { variant, ..config.vqvae.clone() };
        on_log(&format!("training {} codec", variant.name()));
        let (codec, _) = crate::vqvae::train_vqvae(corpus, &vq, config.seed, &mut |_| {})?;
        on_log(&format!("training {} transformer", variant.name()));
        let (model, _) = crate::mtt::train_mtt(corpus, codec, &config.mtt, config.seed, &mut |_| {})?;
        let suite = EvalSuiteConfig { variants: vec![variant], ..suite.clone() };
        let eval = run_eval_suite(&suite, &[&model], &test, config.seed, &mut |_| {})?;
        let row = AblationRow::new(&model, corpus, &eval[0])?;
        on_log(&format!("{} done", variant.name()));
        rows.push(row);
    }
    Ok(rows)
}
