//! Hashes prompts into bag-of-words buckets and compares their embeddings
//! from a freshly initialized encoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tlc_autograd::ParamStore;
use tlcontrol::text::{bucket_vector, tokenize, TextEncoder};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (norm(a) * norm(b))
}

fn main() {
    let prompts = ["A person walks forward.", "a person walks forward slowly", "someone waves with the left hand"];
    for p in prompts {
        println!("{p:?} -> tokens {:?}, {} buckets", tokenize(p), bucket_vector(p).len());
    }
    let mut store = ParamStore::default();
    let encoder = TextEncoder::new(&mut store, "text", &mut ChaCha8Rng::seed_from_u64(0));
    let e: Vec<Vec<f64>> = prompts.iter().map(|p| encoder.embed(&store, p)).collect();
    println!("cos(walk, walk slowly) = {:.3}", cosine(&e[0], &e[1]));
    println!("cos(walk, wave)        = {:.3}", cosine(&e[0], &e[2]));
}
