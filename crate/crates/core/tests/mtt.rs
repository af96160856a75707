use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlc_autograd::{Graph, Tensor};
use tlcontrol::dataset::NormStats;
use tlcontrol::motion::{JointGroup, MotionClip, PartialTrajectory};
use tlcontrol::mtt::{
    continuous_trajectory_mask, gumbel_noise, gumbel_st_latent, joint_level_mask, sample_codes, select_codes,
    train_mtt_on, trajectory_tokens, CodeLogits, MttConfig, MttExample, Mtt,
};
use tlcontrol::vqvae::{Codebook, Codec, VqvaeConfig};
use tlcontrol::Error;

const M: usize = 137;

fn full_trajectory(len: usize, rng: &mut impl Rng) -> PartialTrajectory {
    let mut t = PartialTrajectory::empty(len);
    for g in JointGroup::ALL {
        for f in 0..len {
            t.set(g, f, [rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0), rng.gen_range(-1.0..1.0)]);
        }
    }
    t
}

fn runs(mask: &[bool]) -> usize {
    let mut n = 0;
    for (i, &m) in mask.iter().enumerate() {
        if !m && (i == 0 || mask[i - 1]) {
            n += 1;
        }
    }
    n
}

#[test]
fn continuous_mask_hits_exact_counts_on_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for len in [8usize, 64, 196] {
        let full = full_trajectory(len, &mut rng);
        for i in 0..=10 {
            let p = i as f64 / 10.0;
            let out = continuous_trajectory_mask(&full, p, &mut rng);
            let want = i * len / 10;
            for g in JointGroup::ALL {
                assert_eq!(len - out.num_specified_in(g), want, "len {len} p {p} {g:?}");
            }
        }
    }
}

#[test]
fn continuous_mask_endpoints_and_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let full = full_trajectory(196, &mut rng);
    assert_eq!(continuous_trajectory_mask(&full, 0.0, &mut rng), full);
    let all = continuous_trajectory_mask(&full, 1.0, &mut rng);
    assert_eq!(all.num_specified(), 0);
    let half = continuous_trajectory_mask(&full, 0.5, &mut rng);
    for g in JointGroup::ALL {
        assert_eq!(half.num_specified_in(g), 98);
        let r = runs(half.mask(g));
        assert!(r >= 1 && r <= 98);
    }
}

#[test]
fn continuous_mask_leaves_already_masked_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut t = full_trajectory(64, &mut rng);
    for f in 0..40 {
        t.clear(JointGroup::Head, f);
    }
    let out = continuous_trajectory_mask(&t, 0.5, &mut rng);
    assert_eq!(out.num_specified_in(JointGroup::Head), 24);
    assert_eq!(out.num_specified_in(JointGroup::Root), 32);
}

/// Seeds whose joint-level draw matches `pred`, found by replaying the draw.
fn seed_where(pred: impl Fn(usize, &[usize]) -> bool) -> u64 {
    (0..10_000u64)
        .find(|&s| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let k = r.gen_range(0..=6usize);
            let mut idx = sample(&mut r, 6, k).into_vec();
            idx.sort_unstable();
            pred(k, &idx)
        })
        .unwrap()
}

#[test]
fn joint_level_mask_masks_exactly_the_drawn_groups() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let full = full_trajectory(16, &mut rng);

    let s = seed_where(|k, _| k == 0);
    let (out, groups) = joint_level_mask(&full, &mut ChaCha8Rng::seed_from_u64(s));
    assert!(groups.is_empty());
    assert_eq!(out, full);

    let s = seed_where(|k, _| k == 6);
    let (out, groups) = joint_level_mask(&full, &mut ChaCha8Rng::seed_from_u64(s));
    assert_eq!(groups.len(), 6);
    assert_eq!(out.num_specified(), 0);

    let want = [JointGroup::LeftArm.index(), JointGroup::Root.index()];
    let s = seed_where(|_, idx| idx == want);
    let (out, groups) = joint_level_mask(&full, &mut ChaCha8Rng::seed_from_u64(s));
    assert_eq!(groups, vec![JointGroup::LeftArm, JointGroup::Root]);
    for g in JointGroup::ALL {
        if groups.contains(&g) {
            assert_eq!(out.num_specified_in(g), 0);
        } else {
            assert_eq!(out.mask(g), full.mask(g));
            for f in 0..16 {
                assert_eq!(out.get(g, f), full.get(g, f));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn masking_never_creates_information(seed in any::<u64>(), p in 0.0f64..=1.0, pre in 0usize..32) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = full_trajectory(32, &mut rng);
        for f in 0..pre {
            t.clear(JointGroup::ALL[f % 6], f);
        }
        let a = continuous_trajectory_mask(&t, p, &mut rng);
        let (b, _) = joint_level_mask(&t, &mut rng);
        for out in [a, b] {
            prop_assert!(out.is_subset_of(&t));
            for g in JointGroup::ALL {
                for f in 0..32 {
                    if let Some(v) = out.get(g, f) {
                        prop_assert_eq!(Some(v), t.get(g, f));
                    }
                }
            }
        }
    }

    #[test]
    fn token_count_is_one_plus_six_per_step(steps in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(steps as u64);
        let t = full_trajectory(steps * 4, &mut rng);
        let (values, frac) = trajectory_tokens(&[&t], 4);
        prop_assert_eq!(values.shape(), &[1, 6 * steps, 16]);
        prop_assert_eq!(frac.shape(), &[1, 6 * steps, 1]);
        // the language token makes the sequence 1 + 6L long
        prop_assert_eq!(1 + values.dim(1), 1 + 6 * steps);
    }
}

fn small_codec(seed: u64) -> Codec {
    let config = VqvaeConfig { codebook_size: 16, code_dim: 8, enc_width: 16, dec_width: 24, window: 8, ..Default::default() };
    Codec::new(config, NormStats { mean: vec![0.0; M], std: vec![1.0; M] }, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn small_mtt_config() -> MttConfig {
    MttConfig {
        stage1_width: 16,
        stage1_layers: 2,
        stage2_width: 8,
        stage2_layers: 1,
        heads: 2,
        ff_mult: 2,
        max_len: 16,
        batch_size: 4,
        epochs: 2,
        lr: 1e-3,
        ..Default::default()
    }
}

#[test]
fn logits_have_step_slot_code_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mtt = Mtt::new(small_mtt_config(), small_codec(1), &mut rng).unwrap();
    let t = full_trajectory(8, &mut rng);
    let l = mtt.predict_code_logits(&t, "a person walks").unwrap();
    assert_eq!((l.steps, l.slots, l.size), (2, 6, 16));
    assert!(l.data.iter().all(|v| v.is_finite()));
    assert_eq!(l, mtt.predict_code_logits(&t, "a person walks").unwrap());
}

#[test]
fn paper_length_gives_49_tokens_per_group() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let t = full_trajectory(196, &mut rng);
    let (values, _) = trajectory_tokens(&[&t], 4);
    assert_eq!(values.dim(1) / 6, 49);
}

#[test]
fn fully_masked_logits_depend_on_text_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mtt = Mtt::new(small_mtt_config(), small_codec(2), &mut rng).unwrap();
    let a = continuous_trajectory_mask(&full_trajectory(8, &mut rng), 1.0, &mut rng);
    let b = PartialTrajectory::empty(8);
    assert_eq!(
        mtt.predict_code_logits(&a, "a person squats").unwrap(),
        mtt.predict_code_logits(&b, "a person squats").unwrap()
    );
    assert_ne!(
        mtt.predict_code_logits(&b, "a person squats").unwrap(),
        mtt.predict_code_logits(&b, "a person waves").unwrap()
    );
}

#[test]
fn bad_lengths_and_configs_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mtt = Mtt::new(small_mtt_config(), small_codec(3), &mut rng).unwrap();
    let t = full_trajectory(10, &mut rng);
    assert!(matches!(mtt.predict_code_logits(&t, "x"), Err(Error::Shape(_))));
    let t = full_trajectory(20, &mut rng);
    assert!(matches!(mtt.predict_code_logits(&t, "x"), Err(Error::Shape(_))));
    let bad = MttConfig { bundle: 2, ..small_mtt_config() };
    assert!(matches!(Mtt::new(bad, small_codec(3), &mut rng), Err(Error::Config(_))));
}

fn random_books(slots: usize, size: usize, dim: usize, rng: &mut impl Rng) -> Vec<Codebook> {
    (0..slots)
        .map(|_| Codebook::new((0..size * dim).map(|_| rng.gen_range(-1.0..1.0)).collect(), size, dim).unwrap())
        .collect()
}

#[test]
fn sampled_decisions_are_one_hot() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let books = random_books(6, 5, 3, &mut rng);
    let logits = CodeLogits { steps: 3, slots: 6, size: 5, data: (0..90).map(|_| rng.gen_range(-2.0..2.0)).collect() };
    let s = sample_codes(&logits, 1.0, &mut rng, &books).unwrap();
    for (r, row) in s.one_hot.chunks(5).enumerate() {
        assert_eq!(row.iter().sum::<f64>(), 1.0);
        assert_eq!(row.iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(row[s.indices[r]], 1.0);
        assert_eq!(s.latent.slot(r / 6, r % 6), books[r % 6].code(s.indices[r]));
    }
    assert!(matches!(sample_codes(&logits, 0.0, &mut rng, &books), Err(Error::Input(_))));
}

#[test]
fn dominant_logit_is_almost_always_drawn() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let books = random_books(1, 8, 2, &mut rng);
    let mut logits = CodeLogits { steps: 1, slots: 1, size: 8, data: vec![0.0; 8] };
    logits.data[3] = 50.0;
    let hits = (0..1000).filter(|_| sample_codes(&logits, 1.0, &mut rng, &books).unwrap().indices[0] == 3).count();
    assert!(hits >= 999);
}

#[test]
fn zero_noise_selects_the_argmax() {
    let logits = CodeLogits { steps: 1, slots: 1, size: 4, data: vec![0.1, 2.0, -1.0, 1.9] };
    let books = random_books(1, 4, 2, &mut ChaCha8Rng::seed_from_u64(0));
    let s = select_codes(&logits, &[0.0; 4], 1e-9, &books).unwrap();
    assert_eq!(s.indices, vec![1]);
}

#[test]
fn gumbel_frequencies_match_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let books = random_books(1, 8, 2, &mut rng);
    for _ in 0..3 {
        let data: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let z: f64 = data.iter().map(|v| v.exp()).sum();
        let probs: Vec<f64> = data.iter().map(|v| v.exp() / z).collect();
        let logits = CodeLogits { steps: 1, slots: 1, size: 8, data };
        let mut counts = [0usize; 8];
        for _ in 0..10_000 {
            counts[sample_codes(&logits, 1.0, &mut rng, &books).unwrap().indices[0]] += 1;
        }
        let tv: f64 = 0.5 * counts.iter().zip(&probs).map(|(&c, p)| (c as f64 / 1e4 - p).abs()).sum::<f64>();
        assert!(tv < 0.02, "total variation {tv}");
    }
}

#[test]
fn straight_through_latent_matches_hard_selection() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let books = random_books(6, 5, 3, &mut rng);
    let data: Vec<f64> = (0..2 * 6 * 5).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let noise = gumbel_noise(data.len(), &mut rng);
    let logits = CodeLogits { steps: 2, slots: 6, size: 5, data: data.clone() };
    let hard = select_codes(&logits, &noise, 0.7, &books).unwrap();

    let mut g = Graph::detached();
    let lv = g.input(Tensor::new([1, 2, 6, 5], data));
    let z = gumbel_st_latent(&mut g, lv, Tensor::new([1, 2, 6, 5], noise), 0.7, &books);
    for (a, b) in g.value(z).data().iter().zip(&hard.latent.data) {
        assert!((a - b).abs() < 1e-12);
    }
    let loss = g.sum_all(z);
    let grads = g.backward(loss);
    assert!(grads.get(lv).unwrap().data().iter().any(|v| v.abs() > 0.0));
}

#[test]
fn uniform_logits_give_log_codebook_size_cross_entropy() {
    let mut g = Graph::detached();
    let l = g.constant(Tensor::zeros([10, 126]));
    let ce = g.cross_entropy(l, &[0, 5, 17, 125, 3, 3, 3, 99, 100, 1]);
    assert!((g.value(ce).item() - 126f64.ln()).abs() < 1e-12);
    assert!((126f64.ln() - 4.836).abs() < 1e-3);
}

#[test]
fn curriculum_and_temperature_ramp_linearly() {
    let c = MttConfig::default();
    assert_eq!(c.mask_proportion(0.0), 0.0);
    assert!((c.mask_proportion(0.5) - 0.375).abs() < 1e-15);
    assert_eq!(c.mask_proportion(1.0), 0.75);
    assert_eq!(c.temperature(0.0), 1.0);
    assert_eq!(c.temperature(1.0), 0.5);
}

fn examples(codec: &Codec, n: usize, rng: &mut impl Rng) -> Vec<MttExample> {
    (0..n)
        .map(|i| {
            let clip = MotionClip::new((0..16 * M).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16, M, 20.0).unwrap();
            let (_, indices) = codec.quantize_nearest(&codec.encode_groups(&clip).unwrap()).unwrap();
            MttExample {
                features: clip.into_features(),
                indices,
                trajectory: full_trajectory(16, rng),
                text: format!("a person does thing {}", i % 3),
            }
        })
        .collect()
}

#[test]
fn training_is_deterministic_and_finite() {
    let codec = small_codec(4);
    let ex = examples(&codec, 8, &mut ChaCha8Rng::seed_from_u64(13));
    let run = || train_mtt_on(&ex, codec.clone(), &small_mtt_config(), 5, &mut |_| {}).unwrap();
    let (m1, h1) = run();
    let (_, h2) = run();
    assert_eq!(h1, h2);
    assert_eq!(h1.len(), 4);
    assert!(h1.iter().all(|l| l.total.is_finite() && l.cross_entropy > 0.0));
    // codec entries stay frozen
    for id in codec.store.ids() {
        assert_eq!(m1.store.get(id), codec.store.get(id));
    }
}

#[test]
fn training_lowers_cross_entropy_on_a_tiny_set() {
    let codec = small_codec(5);
    let ex = examples(&codec, 4, &mut ChaCha8Rng::seed_from_u64(14));
    let config = MttConfig { epochs: 200, lr: 3e-3, mask_max: 0.0, ..small_mtt_config() };
    let (_, h) = train_mtt_on(&ex, codec, &config, 6, &mut |_| {}).unwrap();
    let first = h[..5].iter().map(|l| l.cross_entropy).sum::<f64>();
    let last = h[h.len() - 5..].iter().map(|l| l.cross_entropy).sum::<f64>();
    assert!(last < 0.5 * first, "first {first} last {last}");
}
