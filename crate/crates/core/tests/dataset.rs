use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlcontrol::dataset::*;
use tlcontrol::motion::*;

fn toy() -> GeneratorConfig {
    GeneratorConfig { max_len: 64, ..Default::default() }
}

fn corpus_bytes(config: &GeneratorConfig, count: usize, seed: u64) -> Vec<u8> {
    let dir = std::env::temp_dir().join(format!("tlc-corpus-{}-{seed}-{count}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("c.jsonl");
    let c = generate_corpus(config, count, seed).unwrap();
    write_corpus(&path, &c.samples).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::remove_dir_all(&dir).ok();
    bytes
}

#[test]
fn same_seed_gives_identical_bytes() {
    let a = corpus_bytes(&toy(), 12, 7);
    let b = corpus_bytes(&toy(), 12, 7);
    assert_eq!(a, b);
    assert_ne!(a, corpus_bytes(&toy(), 12, 8));
}

#[test]
fn sample_depends_only_on_seed_and_index() {
    let c = generate_corpus(&toy(), 6, 3).unwrap();
    let alone = generate_indexed(&toy(), 3, 4).unwrap();
    assert_eq!(c.samples[4].motion, alone.motion);
    assert_eq!(c.samples[4].text, alone.text);
}

#[test]
fn cardinality_and_lengths() {
    let c = generate_corpus(&GeneratorConfig::default(), 50, 1).unwrap();
    assert_eq!(c.samples.len(), 50);
    for s in &c.samples {
        assert!(!s.text.is_empty());
        assert!(s.true_length <= 196);
        assert_eq!(s.motion.frames(), 196);
    }
}

#[test]
fn bad_configs_are_rejected() {
    assert!(matches!(generate_corpus(&toy(), 0, 1), Err(tlcontrol::Error::Config(_))));
    let short = GeneratorConfig { max_len: 7, ..Default::default() };
    assert!(matches!(generate_corpus(&short, 3, 1), Err(tlcontrol::Error::Config(_))));
}

/// Algebraic least-squares circle fit; returns (cx, cz, r).
fn fit_circle(points: &[[f64; 2]]) -> (f64, f64, f64) {
    // x^2 + z^2 + D x + E z + F = 0
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for p in points {
        let row = nalgebra::Vector3::new(p[0], p[1], 1.0);
        ata += row * row.transpose();
        atb += row * -(p[0] * p[0] + p[1] * p[1]);
    }
    let s = ata.lu().solve(&atb).unwrap();
    let (cx, cz) = (-s[0] / 2.0, -s[1] / 2.0);
    (cx, cz, (cx * cx + cz * cz - s[2]).sqrt())
}

#[test]
fn circle_family_root_path_has_requested_radius() {
    for side in [Side::Left, Side::Right] {
        let fam = Family::WalkCircle { speed: 0.05, radius: 1.0, side };
        let s = generate_sample(fam, 120, &GeneratorConfig { max_len: 120, ..Default::default() }).unwrap();
        let pos = recover_global_positions(&s.motion, &PoseFeatureLayout::new(22)).unwrap();
        let pts: Vec<[f64; 2]> = (0..s.true_length).map(|t| [pos.get(t, 0)[0], pos.get(t, 0)[2]]).collect();
        let (_, _, r) = fit_circle(&pts);
        assert!((r - 1.0).abs() < 0.02, "radius {r}");
    }
}

#[test]
fn walking_forward_advances_root_x() {
    let s = generate_sample(Family::WalkStraight { speed: 0.04 }, 60, &toy()).unwrap();
    let root = s.full_trajectories.mask(JointGroup::Root);
    assert!(root[..60].iter().all(|&m| m) && root[60..].iter().all(|&m| !m));
    for t in 1..60 {
        let a = s.full_trajectories.get(JointGroup::Root, t - 1).unwrap();
        let b = s.full_trajectories.get(JointGroup::Root, t).unwrap();
        assert!(b[0] > a[0]);
    }
}

#[test]
fn stationary_clip_gives_constant_tracks() {
    let sk = SkeletonSpec::smpl22();
    let s = generate_sample(Family::WalkStraight { speed: 0.04 }, 10, &toy()).unwrap();
    let pos = recover_global_positions(&s.motion, &PoseFeatureLayout::new(22)).unwrap();
    let still = pad_positions(&JointPositions::new(pos.frame(0).to_vec(), 1, 22).unwrap(), 8);
    let clip = features_from_positions(&still, 20.0, &sk).unwrap();
    let traj = extract_key_trajectories(&clip, &sk).unwrap();
    for g in JointGroup::ALL {
        let p0 = traj.get(g, 0).unwrap();
        for t in 0..8 {
            assert_eq!(traj.get(g, t).unwrap(), p0);
        }
    }
}

#[test]
fn full_trajectories_equal_recovered_key_joints() {
    let sk = SkeletonSpec::smpl22();
    let c = generate_corpus(&toy(), 10, 2).unwrap();
    for s in &c.samples {
        let pos = recover_global_positions(&s.motion, &PoseFeatureLayout::new(22)).unwrap();
        for g in JointGroup::ALL {
            for t in 0..s.true_length {
                assert_eq!(s.full_trajectories.get(g, t), Some(pos.get(t, sk.key_joint(g))));
            }
        }
    }
}

#[test]
fn joint_displacement_is_bounded_and_padding_is_still() {
    let c = generate_corpus(&toy(), 40, 9).unwrap();
    let l = PoseFeatureLayout::new(22);
    for s in &c.samples {
        let bound = s.family.unwrap().max_joint_speed();
        let pos = recover_global_positions(&s.motion, &l).unwrap();
        for t in 1..s.motion.frames() {
            for j in 0..22 {
                let (a, b) = (pos.get(t - 1, j), pos.get(t, j));
                let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
                assert!(d <= bound, "{}: joint {j} moved {d} > {bound}", s.text);
                if t >= s.true_length {
                    assert!(d < 1e-12);
                }
            }
        }
        for t in s.true_length..s.motion.frames() {
            let f = s.motion.frame(t);
            assert!(f[l.joint_vel(0)..l.contacts()].iter().all(|v| v.abs() < 1e-12));
        }
    }
}

#[test]
fn body_stays_above_ground() {
    let c = generate_corpus(&toy(), 40, 4).unwrap();
    let l = PoseFeatureLayout::new(22);
    for s in &c.samples {
        let pos = recover_global_positions(&s.motion, &l).unwrap();
        let min_y = pos.data().iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        assert!(min_y > -0.1, "{}: min y {min_y}", s.text);
    }
}

#[test]
fn normalized_training_split_is_standardized() {
    let c = generate_corpus(&toy(), 30, 5).unwrap();
    let normed: Vec<MotionClip> = c.train().map(|s| c.stats.normalize(&s.motion).unwrap()).collect();
    let again = NormStats::compute(&normed).unwrap();
    for i in 0..c.stats.dim() {
        assert!(again.mean[i].abs() < 1e-6);
        if c.stats.std[i] > MIN_STD {
            assert!((again.std[i] - 1.0).abs() < 1e-6, "channel {i}: {}", again.std[i]);
        }
    }
}

#[test]
fn hand_computed_z_scores() {
    let clip = MotionClip::new(vec![1.0, 10.0, 3.0, 10.0], 2, 2, 20.0).unwrap();
    let stats = NormStats::compute([&clip]).unwrap();
    assert_eq!(stats.mean, [2.0, 10.0]);
    assert_eq!(stats.std, [1.0, MIN_STD]);
    let z = stats.normalize(&clip).unwrap();
    assert_eq!(z.features(), &[-1.0, 0.0, 1.0, 0.0]);
}

#[test]
fn stats_dimension_mismatch_is_a_layout_error() {
    let stats = NormStats { mean: vec![0.0; 3], std: vec![1.0; 3] };
    let clip = MotionClip::zeros(2, 4, 20.0);
    assert!(matches!(stats.normalize(&clip), Err(tlcontrol::Error::Layout(_))));
}

#[test]
fn corpus_file_round_trip() {
    let dir = std::env::temp_dir().join(format!("tlc-rt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let c = generate_corpus(&toy(), 5, 11).unwrap();
    write_corpus(&dir.join("c.jsonl"), &c.samples).unwrap();
    let back = read_corpus(&dir.join("c.jsonl")).unwrap();
    for (a, b) in c.samples.iter().zip(&back) {
        assert_eq!(a.text, b.text);
        assert_eq!(a.true_length, b.true_length);
        assert_eq!(a.motion.features(), b.motion.features());
        assert_eq!(a.full_trajectories, b.full_trajectories);
    }
    c.stats.save(&dir.join("s.json")).unwrap();
    assert_eq!(NormStats::load(&dir.join("s.json")).unwrap(), c.stats);
    std::fs::remove_dir_all(&dir).ok();
}

proptest! {
    #[test]
    fn normalize_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = 5;
        let stats = NormStats {
            mean: (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            std: (0..m).map(|_| rng.gen_range(1e-6..4.0)).collect(),
        };
        let clip = MotionClip::new((0..4 * m).map(|_| rng.gen_range(-5.0..5.0)).collect(), 4, m, 20.0).unwrap();
        let back = stats.denormalize(&stats.normalize(&clip).unwrap()).unwrap();
        for (a, b) in back.features().iter().zip(clip.features()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn every_generated_clip_round_trips_through_features(seed in 0u64..1000, index in 0usize..50) {
        let s = generate_indexed(&toy(), seed, index).unwrap();
        prop_assert!(s.true_length >= 48 && s.true_length <= 64);
        prop_assert!(s.motion.features().iter().all(|v| v.is_finite()));
        let l = PoseFeatureLayout::new(22);
        let c = l.contacts();
        for t in 0..s.motion.frames() {
            prop_assert!(s.motion.frame(t)[c..c + 4].iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }
}
