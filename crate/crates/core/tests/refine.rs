use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlcontrol::dataset::{generate_sample, Family, GeneratorConfig, NormStats, Side};
use tlcontrol::motion::{recover_global_positions, JointGroup, MotionClip, PartialTrajectory, PoseFeatureLayout, SkeletonSpec};
use tlcontrol::optim::{lbfgs, ConvergenceTest, OptimizeConfig, StopReason};
use tlcontrol::refine::{
    decode_meters, joint_ik_baseline, refine_latent, refine_with, ControlObjective, IkConfig, LinearDecoderObjective,
};
use tlcontrol::vqvae::{Codec, CodecVariant, LatentSequence, VqvaeConfig};

const M: usize = 137;

fn small_codec(rng: &mut impl Rng) -> Codec {
    let config = VqvaeConfig {
        variant: CodecVariant::PartBased,
        codebook_size: 16,
        code_dim: 8,
        enc_width: 16,
        dec_width: 24,
        window: 8,
        ..Default::default()
    };
    let stats = NormStats {
        mean: (0..M).map(|_| rng.gen_range(-0.1..0.1)).collect(),
        std: (0..M).map(|_| rng.gen_range(0.05..0.5)).collect(),
    };
    Codec::new(config, stats, rng).unwrap()
}

fn random_latent(codec: &Codec, steps: usize, rng: &mut impl Rng) -> LatentSequence {
    let mut lat = LatentSequence::zeros(steps, codec.slots(), codec.slot_dim());
    lat.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    lat
}

fn random_traj(frames: usize, density: f64, rng: &mut impl Rng) -> PartialTrajectory {
    let mut traj = PartialTrajectory::empty(frames);
    for g in JointGroup::ALL {
        for t in 0..frames {
            if rng.gen_bool(density) {
                traj.set(g, t, [rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.8), rng.gen_range(-1.0..1.0)]);
            }
        }
    }
    if traj.num_specified() == 0 {
        traj.set(JointGroup::Root, 0, [0.0, 0.9, 0.0]);
    }
    traj
}

/// Key-joint waypoints that the decoded `latent` already hits.
fn fitted_traj(codec: &Codec, latent: &LatentSequence) -> PartialTrajectory {
    let motion = decode_meters(codec, latent).unwrap();
    let pos = recover_global_positions(&motion, &PoseFeatureLayout::new(22)).unwrap();
    PartialTrajectory::from_positions(&pos, &SkeletonSpec::smpl22(), pos.frames())
}

fn linear_problem(seed: u64, reachable: bool) -> LinearDecoderObjective {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, cols) = (40, 16);
    let w = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
    let targets = if reachable {
        &w * DVector::from_fn(cols, |_, _| rng.gen_range(-1.0..1.0))
    } else {
        DVector::from_fn(rows, |_, _| rng.gen_range(-1.0..1.0))
    };
    let rows: Vec<usize> = (0..rows).filter(|_| rng.gen_bool(0.7)).collect();
    LinearDecoderObjective { w, targets, rows }
}

fn tight() -> OptimizeConfig {
    OptimizeConfig { tolerance: 1e-12, convergence: ConvergenceTest::GradientMaxNorm, ..Default::default() }
}

#[test]
fn linear_decoder_reaches_normal_equations_optimum() {
    for seed in 0..10 {
        let mut obj = linear_problem(seed, true);
        let start = LatentSequence::zeros(1, 1, 16);
        let (_, trace, stop, _) = refine_with(&start, &mut obj, &tight(), &mut |_| true).unwrap();
        let f = *trace.objective.last().unwrap();
        assert!(f < 1e-10, "seed {seed}: objective {f} ({stop:?})");
        assert!(obj.optimum() < 1e-20);
    }
}

#[test]
fn linear_decoder_matches_least_squares_residual_when_unreachable() {
    for seed in 0..10 {
        let mut obj = linear_problem(100 + seed, false);
        let min = lbfgs(&mut obj, &[0.0; 16], &tight(), &mut |_| true).unwrap();
        let opt = obj.optimum();
        assert!(opt > 1e-3);
        assert!(min.f - opt < 1e-8, "seed {seed}: {} vs optimum {opt}", min.f);
    }
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let codec = small_codec(&mut rng);
    let steps = 2;
    let frames = steps * codec.downsample();
    for case in 0..20 {
        let lat = random_latent(&codec, steps, &mut rng);
        let traj = random_traj(frames, 0.5, &mut rng);
        let obj = ControlObjective::new(&codec, &traj, steps).unwrap();
        let (_, grad) = obj.value_and_gradient(&lat.data).unwrap();
        // unit direction, so the central difference moves the latent by exactly h
        let dir: Vec<f64> = (0..lat.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        let dir: Vec<f64> = dir.iter().map(|d| d / norm).collect();
        let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let h = 1e-4;
        let shifted = |s: f64| -> f64 {
            let x: Vec<f64> = lat.data.iter().zip(&dir).map(|(x, d)| x + s * d).collect();
            obj.value_and_gradient(&x).unwrap().0
        };
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        assert!(rel < 1e-4, "case {case}: analytic {analytic} numeric {numeric}");
    }
}

#[test]
fn perfect_fit_has_zero_objective_and_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let codec = small_codec(&mut rng);
    let lat = random_latent(&codec, 2, &mut rng);
    let traj = fitted_traj(&codec, &lat);
    let (f, g) = ControlObjective::new(&codec, &traj, 2).unwrap().value_and_gradient(&lat.data).unwrap();
    assert_eq!(f, 0.0);
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn single_displaced_waypoint_gives_mean_of_squared_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let codec = small_codec(&mut rng);
    let lat = random_latent(&codec, 2, &mut rng);
    let mut traj = fitted_traj(&codec, &lat);
    let mut p = traj.get(JointGroup::LeftArm, 3).unwrap();
    p[0] += 0.1;
    traj.set(JointGroup::LeftArm, 3, p);
    let terms = 3 * traj.num_specified();
    let (f, _) = ControlObjective::new(&codec, &traj, 2).unwrap().value_and_gradient(&lat.data).unwrap();
    assert!((f - 0.01 / terms as f64).abs() < 1e-15, "{f}");
}

#[test]
fn empty_trajectory_leaves_latent_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let codec = small_codec(&mut rng);
    let lat = random_latent(&codec, 2, &mut rng);
    let traj = PartialTrajectory::empty(8);
    let (f, g) = ControlObjective::new(&codec, &traj, 2).unwrap().value_and_gradient(&lat.data).unwrap();
    assert_eq!((f, g.iter().all(|&v| v == 0.0)), (0.0, true));
    let r = refine_latent(&lat, &traj, &codec, &OptimizeConfig::default(), &mut |_| true).unwrap();
    assert_eq!(r.latent, lat);
    assert_eq!(r.trace.iterations, 0);
    assert_eq!(r.evaluations, 0);
}

#[test]
fn refinement_reduces_error_and_trace_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let codec = small_codec(&mut rng);
    let lat = random_latent(&codec, 2, &mut rng);
    let target = random_latent(&codec, 2, &mut rng);
    let traj = fitted_traj(&codec, &target);
    let config = OptimizeConfig { max_iterations: 50, ..Default::default() };
    let r = refine_latent(&lat, &traj, &codec, &config, &mut |_| true).unwrap();
    let obj = &r.trace.objective;
    assert!(obj.windows(2).all(|w| w[1] <= w[0]), "{obj:?}");
    assert!(obj.last().unwrap() < &(0.5 * obj[0]));
    assert!(!r.latent.quantized);
    assert_eq!(r.trace.iterations + 1, obj.len());
}

#[test]
fn cancellation_stops_between_iterations() {
    let mut obj = linear_problem(1, true);
    let mut calls = 0;
    let min = lbfgs(&mut obj, &[0.0; 16], &tight(), &mut |_| {
        calls += 1;
        calls < 3
    })
    .unwrap();
    assert_eq!(min.stop, StopReason::Cancelled);
    assert!(!min.trace.converged);
    assert_eq!(calls, 3);
}

#[test]
fn optimizer_trace_serializes_with_the_wire_keys() {
    let mut obj = linear_problem(2, true);
    let min = lbfgs(&mut obj, &[0.0; 16], &OptimizeConfig::default(), &mut |_| true).unwrap();
    let v = serde_json::to_value(&min.trace).unwrap();
    for key in ["objective", "grad_norm", "iterations", "converged"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(min.trace.converged);
}

#[test]
fn invalid_optimizer_config_is_rejected() {
    let mut obj = linear_problem(3, true);
    for bad in [
        OptimizeConfig { tolerance: 0.0, ..Default::default() },
        OptimizeConfig { max_iterations: 0, ..Default::default() },
        OptimizeConfig { c1: 0.95, ..Default::default() },
    ] {
        assert!(lbfgs(&mut obj, &[0.0; 16], &bad, &mut |_| true).is_err());
    }
}

fn walking_clip() -> MotionClip {
    let gen = GeneratorConfig { max_len: 16, ..Default::default() };
    let s = generate_sample(Family::WalkArc { speed: 1.2, radius: 3.0, side: Side::Left }, 16, &gen).unwrap();
    s.motion
}

fn key_positions(clip: &MotionClip) -> tlcontrol::motion::JointPositions {
    recover_global_positions(clip, &PoseFeatureLayout::new(22)).unwrap()
}

#[test]
fn ik_with_targets_at_current_positions_is_identity() {
    let clip = walking_clip();
    let pos = key_positions(&clip);
    let traj = PartialTrajectory::from_positions(&pos, &SkeletonSpec::smpl22(), pos.frames());
    let out = joint_ik_baseline(&clip, &traj, &IkConfig::default()).unwrap();
    let diff = out.features().iter().zip(clip.features()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn ik_leaves_unconstrained_frames_bit_identical() {
    let clip = walking_clip();
    let mut traj = PartialTrajectory::empty(clip.frames());
    traj.set(JointGroup::RightArm, 5, [0.3, 1.2, -0.4]);
    traj.set(JointGroup::Root, 9, [0.0, 0.8, 0.0]);
    let out = joint_ik_baseline(&clip, &traj, &IkConfig::default()).unwrap();
    for t in 0..clip.frames() {
        if t == 5 || t == 9 {
            assert_ne!(out.frame(t), clip.frame(t));
        } else {
            assert_eq!(out.frame(t), clip.frame(t), "frame {t}");
        }
    }
}

#[test]
fn ik_reaches_a_single_reachable_target_within_1cm() {
    let clip = walking_clip();
    let pos = key_positions(&clip);
    let sk = SkeletonSpec::smpl22();
    let t = 7;
    let wrist = pos.get(t, sk.key_joint(JointGroup::LeftArm));
    let target = [wrist[0] + 0.1, wrist[1] + 0.05, wrist[2] - 0.08];
    let mut traj = PartialTrajectory::empty(clip.frames());
    traj.set(JointGroup::LeftArm, t, target);
    let out = joint_ik_baseline(&clip, &traj, &IkConfig::default()).unwrap();
    let p = key_positions(&out).get(t, sk.key_joint(JointGroup::LeftArm));
    let d = ((p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2) + (p[2] - target[2]).powi(2)).sqrt();
    assert!(d < 0.01, "{d}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_refinement_hits_optimum_for_any_seed(seed in 0u64..10_000) {
        let mut obj = linear_problem(seed, true);
        let min = lbfgs(&mut obj, &[0.0; 16], &tight(), &mut |_| true).unwrap();
        prop_assert!(min.f - obj.optimum() < 1e-8);
        prop_assert!(min.trace.objective.windows(2).all(|w| w[1] <= w[0]));
    }
}

