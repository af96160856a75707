use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tlc_autograd::{Graph, ParamStore};
use tlcontrol::text::{bucket_vector, fnv1a64, tokenize, TextEncoder, BUCKETS, EMBED_DIM};

fn encoder() -> (ParamStore, TextEncoder) {
    let mut store = ParamStore::new();
    let enc = TextEncoder::new(&mut store, "text", &mut ChaCha8Rng::seed_from_u64(3));
    (store, enc)
}

#[test]
fn embedding_is_deterministic_and_512_wide() {
    let (store, enc) = encoder();
    let a = enc.embed(&store, "a person walks forward");
    let b = enc.embed(&store, "a person walks forward");
    assert_eq!(a.len(), EMBED_DIM);
    assert_eq!(a, b);
    assert!(a.iter().all(|v| v.is_finite()));
}

#[test]
fn empty_text_maps_to_bias() {
    let (store, enc) = encoder();
    assert!(bucket_vector("").is_empty());
    assert_eq!(enc.embed(&store, ""), store.get(enc.bias).data().to_vec());
    assert_eq!(enc.embed(&store, "?!"), store.get(enc.bias).data().to_vec());
}

#[test]
fn distinct_prompts_hit_distinct_buckets() {
    // bucket sets recomputed directly from the hash
    let buckets = |words: &[&str]| {
        let mut keys: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        keys.extend(words.windows(2).map(|w| format!("{} {}", w[0], w[1])));
        let mut b: Vec<usize> = keys.iter().map(|k| (fnv1a64(k.as_bytes()) % BUCKETS as u64) as usize).collect();
        b.sort_unstable();
        b.dedup();
        b
    };
    let a = buckets(&["walks", "forward"]);
    let b = buckets(&["raises", "the", "left", "hand"]);
    assert_ne!(a, b);
    let got_a: Vec<usize> = {
        let mut v: Vec<usize> = bucket_vector("walks forward").into_iter().map(|(i, _)| i).collect();
        v.sort_unstable();
        v
    };
    assert_eq!(got_a, a);
}

#[test]
fn bucket_vector_is_unit_length_with_counts() {
    let v = bucket_vector("Walk, walk walk.");
    // "walk" x3 and "walk walk" x2 -> (3, 2) / sqrt(13)
    let mut vals: Vec<f64> = v.iter().map(|&(_, c)| c).collect();
    vals.sort_by(f64::total_cmp);
    let n = 13f64.sqrt();
    assert!((vals[0] - 2.0 / n).abs() < 1e-15 && (vals[1] - 3.0 / n).abs() < 1e-15);
    assert_eq!(tokenize("Walk, walk walk."), vec!["walk", "walk", "walk"]);
}

#[test]
fn graph_forward_matches_direct_embedding() {
    let (store, enc) = encoder();
    let texts = ["a person squats", "", "a person waves the right hand"];
    let mut g = Graph::frozen(&store);
    let out = enc.forward(&mut g, &texts);
    let v = g.value(out);
    assert_eq!(v.shape(), &[3, EMBED_DIM]);
    for (i, t) in texts.iter().enumerate() {
        let direct = enc.embed(&store, t);
        for k in 0..EMBED_DIM {
            assert!((v.data()[i * EMBED_DIM + k] - direct[k]).abs() < 1e-12);
        }
    }
}
