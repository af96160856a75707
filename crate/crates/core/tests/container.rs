use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlcontrol::container::{load_codec, load_model, save_codec, save_model, Manifest, MANIFEST_FILE, WEIGHTS_FILE};
use tlcontrol::dataset::NormStats;
use tlcontrol::motion::{JointGroup, PartialTrajectory};
use tlcontrol::mtt::{Mtt, MttConfig};
use tlcontrol::vqvae::{Codec, VqvaeConfig};
use tlcontrol::Error;

const M: usize = 137;

fn small_model(seed: u64) -> Mtt {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stats = NormStats {
        mean: (0..M).map(|_| rng.gen_range(-0.1..0.1)).collect(),
        std: (0..M).map(|_| rng.gen_range(0.1..1.0)).collect(),
    };
    let vq = VqvaeConfig { codebook_size: 16, code_dim: 8, enc_width: 16, dec_width: 24, window: 8, ..Default::default() };
    let mut codec = Codec::new(vq, stats, &mut rng).unwrap();
    for cb in &mut codec.codebooks {
        cb.codes.iter_mut().for_each(|c| *c = rng.gen_range(-1.0..1.0));
        cb.usage.iter_mut().for_each(|u| *u = rng.gen_range(0.0..3.0));
    }
    let config = MttConfig {
        stage1_width: 16,
        stage1_layers: 2,
        stage2_width: 8,
        stage2_layers: 1,
        heads: 2,
        ff_mult: 2,
        max_len: 16,
        ..Default::default()
    };
    Mtt::new(config, codec, &mut rng).unwrap()
}

fn probe_traj() -> PartialTrajectory {
    let mut t = PartialTrajectory::empty(16);
    for f in 0..16 {
        t.set(JointGroup::Root, f, [0.1 * f as f64, 0.9, 0.0]);
    }
    t
}

#[test]
fn round_trip_stores_f32_rounded_values_and_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_model(1);
    save_model(dir.path(), &model).unwrap();
    let loaded = load_model(dir.path()).unwrap();

    for id in model.store.ids() {
        let want: Vec<f64> = model.store.get(id).data().iter().map(|&v| v as f32 as f64).collect();
        assert_eq!(loaded.store.get(id).data(), &want[..], "{}", model.store.name(id));
    }
    for (a, b) in model.codec.codebooks.iter().zip(&loaded.codec.codebooks) {
        assert_eq!(b.codes, a.codes.iter().map(|&v| v as f32 as f64).collect::<Vec<_>>());
        assert_eq!(b.usage, a.usage.iter().map(|&v| v as f32 as f64).collect::<Vec<_>>());
    }
    assert_eq!(loaded.config, model.config);
    assert_eq!(loaded.codec.config, model.codec.config);

    // a second save of the loaded model is byte-identical
    let again = tempfile::tempdir().unwrap();
    save_model(again.path(), &loaded).unwrap();
    for f in [MANIFEST_FILE, WEIGHTS_FILE] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap(), "{f}");
    }

    let a = model.predict_code_logits(&probe_traj(), "walk forward").unwrap();
    let b = loaded.predict_code_logits(&probe_traj(), "walk forward").unwrap();
    let gap = a.data.iter().zip(&b.data).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(gap < 1e-4, "{gap}");
}

#[test]
fn codec_only_directory_loads_as_codec_but_not_as_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_model(2);
    save_codec(dir.path(), &model.codec).unwrap();
    let codec = load_codec(dir.path()).unwrap();
    assert_eq!(codec.config, model.codec.config);
    assert!(matches!(load_model(dir.path()), Err(Error::Load(_))));
}

#[test]
fn version_mismatch_is_a_load_error() {
    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), &small_model(3)).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let mut doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    doc["version"] = serde_json::json!(2);
    std::fs::write(&path, serde_json::to_vec(&doc).unwrap()).unwrap();
    assert!(matches!(Manifest::read(dir.path()), Err(Error::Load(_))));
    assert!(matches!(load_model(dir.path()), Err(Error::Load(_))));
}

#[test]
fn corrupted_weights_fail_the_digest() {
    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), &small_model(4)).unwrap();
    let path = dir.path().join(WEIGHTS_FILE);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[10] ^= 0x40;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(load_model(dir.path()), Err(Error::Load(_))));
}

#[test]
fn missing_directory_is_a_load_error() {
    assert!(matches!(load_model(std::path::Path::new("/nonexistent/tlc-model")), Err(Error::Load(_))));
}
