use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlcontrol::dataset::{generate_corpus, GeneratorConfig, NormStats};
use tlcontrol::eval::{ik_ablation, mask_specified, restrict, run_eval_suite, write_report, ControlSet, EvalSuiteConfig, Strategy};
use tlcontrol::motion::{JointGroup, PartialTrajectory};
use tlcontrol::mtt::{masked_count, Mtt, MttConfig};
use tlcontrol::optim::OptimizeConfig;
use tlcontrol::refine::IkConfig;
use tlcontrol::vqvae::{Codec, VqvaeConfig};

const M: usize = 137;
const FRAMES: usize = 16;

fn small_model() -> Mtt {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let stats = NormStats {
        mean: (0..M).map(|_| rng.gen_range(-0.05..0.05)).collect(),
        std: (0..M).map(|_| rng.gen_range(0.05..0.3)).collect(),
    };
    let vq = VqvaeConfig { codebook_size: 16, code_dim: 8, enc_width: 16, dec_width: 24, window: 8, ..Default::default() };
    let mut codec = Codec::new(vq, stats, &mut rng).unwrap();
    for cb in &mut codec.codebooks {
        cb.codes.iter_mut().for_each(|c| *c = rng.gen_range(-1.0..1.0));
    }
    let config = MttConfig {
        stage1_width: 16,
        stage1_layers: 1,
        stage2_width: 8,
        stage2_layers: 1,
        heads: 2,
        ff_mult: 2,
        max_len: FRAMES,
        ..Default::default()
    };
    Mtt::new(config, codec, &mut rng).unwrap()
}

fn corpus() -> tlcontrol::dataset::Corpus {
    generate_corpus(&GeneratorConfig { max_len: FRAMES, ..Default::default() }, 12, 2).unwrap()
}

fn partial(len: usize, valid: usize) -> PartialTrajectory {
    let mut t = PartialTrajectory::empty(len);
    for g in JointGroup::ALL {
        for f in 0..valid {
            t.set(g, f, [f as f64, 1.0, 0.0]);
        }
    }
    t
}

proptest! {
    #[test]
    fn masking_hides_exactly_the_requested_share_of_given_frames(
        len in 8usize..80, frac in 0.5f64..=1.0, rate in 0.0f64..0.95, seed in any::<u64>()
    ) {
        let valid = ((len as f64 * frac) as usize).max(1);
        let full = partial(len, valid);
        let masked = mask_specified(&full, rate, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(masked.is_subset_of(&full));
        for g in JointGroup::ALL {
            prop_assert_eq!(valid - masked.num_specified_in(g), masked_count(rate, valid));
        }
    }
}

#[test]
fn restrict_keeps_only_named_groups() {
    let full = partial(10, 6);
    let r = restrict(&full, &[JointGroup::Root, JointGroup::Head]);
    assert_eq!(r.num_specified(), 12);
    assert!(r.is_subset_of(&full));
    assert_eq!(r.num_specified_in(JointGroup::LeftLeg), 0);
}

#[test]
fn suite_config_rejects_empty_grids_and_bad_rates() {
    EvalSuiteConfig::default().validate().unwrap();
    for bad in [
        EvalSuiteConfig { mask_rates: vec![], ..Default::default() },
        EvalSuiteConfig { mask_rates: vec![1.0], ..Default::default() },
        EvalSuiteConfig { samples_per_input: 1, ..Default::default() },
        EvalSuiteConfig { control_sets: vec![ControlSet { name: "none".into(), groups: vec![] }], ..Default::default() },
    ] {
        assert!(bad.validate().is_err());
    }
}

#[test]
fn suite_emits_one_row_per_condition_and_writes_reports() {
    let model = small_model();
    let corpus = corpus();
    let samples: Vec<_> = corpus.samples.iter().take(3).cloned().collect();
    let config = EvalSuiteConfig {
        control_sets: vec![ControlSet::single(JointGroup::Root), ControlSet::all()],
        mask_rates: vec![0.0, 0.5],
        tolerances: vec![1e-2, 1e-6],
        num_inputs: 2,
        samples_per_input: 2,
        diversity_pairs: 2,
        optimize: OptimizeConfig { max_iterations: 10, ..Default::default() },
        ..Default::default()
    };
    let mut seen = 0;
    let rows = run_eval_suite(&config, &[&model], &samples, 4, &mut |_| seen += 1).unwrap();
    assert_eq!((rows.len(), seen), (8, 8));
    assert_eq!(rows[0].control, "root");
    assert_eq!(rows[7].control, "all");
    for r in &rows {
        assert_eq!((r.inputs, r.samples), (2, 4));
        assert!(r.avg_err_cm <= r.unrefined_avg_err_cm + 1e-9, "{r:?}");
        assert!(r.avg_err_cm.is_finite() && r.diversity.is_finite() && r.multimodality.is_finite());
    }
    // tolerance rows share their inputs, masks and noise
    assert_eq!(rows[0].unrefined_avg_err_cm, rows[1].unrefined_avg_err_cm);

    let dir = tempfile::tempdir().unwrap();
    write_report(dir.path(), "results", &rows).unwrap();
    let parsed: Vec<tlcontrol::eval::EvalRow> =
        serde_json::from_slice(&std::fs::read(dir.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(parsed.len(), 8);
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("variant,control,mask_rate,tolerance"));
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn per_frame_ik_leaves_free_frames_untouched() {
    let model = small_model();
    let corpus = corpus();
    let samples: Vec<_> = corpus.samples.iter().take(3).cloned().collect();
    let optimize = OptimizeConfig { max_iterations: 20, ..Default::default() };
    let rows =
        ik_ablation(&model, &samples, &ControlSet::single(JointGroup::LeftArm), 0.5, &optimize, &IkConfig::default(), 1).unwrap();
    let get = |s: Strategy| rows.iter().find(|r| r.strategy == s).unwrap();
    let (none, ik, latent) = (get(Strategy::NoOpt), get(Strategy::JointIk), get(Strategy::LatentOpt));
    assert!(none.complement_identical && none.complement_drift_cm == 0.0);
    assert!(ik.complement_identical && ik.complement_drift_cm == 0.0);
    assert!(ik.avg_err_cm < none.avg_err_cm);
    assert!(latent.avg_err_cm <= none.avg_err_cm + 1e-9);
    assert!(!latent.complement_identical && latent.complement_drift_cm > 0.0);
}
