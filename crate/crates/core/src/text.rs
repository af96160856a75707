//! Hashed n-gram text embedder.
//!
//! `lowercase -> drop punctuation -> split on whitespace`, then every unigram
//! and every adjacent pair `"w1 w2"` is hashed with 64-bit FNV-1a into one
//! of 4096 buckets. Bucket counts are L2-normalized and multiplied by a
//! learned `4096 x 512` matrix plus a bias, so the empty string maps to the
//! bias.

use rand::Rng;
use tlc_autograd::{normal, Graph, ParamId, ParamStore, Var};

pub const BUCKETS: usize = 4096;
pub const EMBED_DIM: usize = 512;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String =
        text.to_lowercase().chars().filter(|c| c.is_alphanumeric() || c.is_whitespace()).collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Sparse L2-normalized bucket counts, sorted by bucket.
pub fn bucket_vector(text: &str) -> Vec<(usize, f64)> {
    let tokens = tokenize(text);
    let mut counts = std::collections::BTreeMap::<usize, f64>::new();
    let mut bump = |s: &str| *counts.entry((fnv1a64(s.as_bytes()) % BUCKETS as u64) as usize).or_default() += 1.0;
    for t in &tokens {
        bump(t);
    }
    for w in tokens.windows(2) {
        bump(&format!("{} {}", w[0], w[1]));
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    counts.into_iter().map(|(b, c)| (b, c / norm)).collect()
}

/// Learned projection from bucket space to the language feature.
#[derive(Clone, Copy, Debug)]
pub struct TextEncoder {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl TextEncoder {
    pub fn new(store: &mut ParamStore, name: &str, rng: &mut impl Rng) -> TextEncoder {
        let weight = store.add(format!("{name}.weight"), normal(&[BUCKETS, EMBED_DIM], 0.05, rng));
        let bias = store.add(format!("{name}.bias"), normal(&[EMBED_DIM], 0.05, rng));
        TextEncoder { weight, bias }
    }

    pub fn from_store(store: &ParamStore, name: &str) -> Option<TextEncoder> {
        Some(TextEncoder { weight: store.find(&format!("{name}.weight"))?, bias: store.find(&format!("{name}.bias"))? })
    }

    /// `[texts.len(), 512]` embeddings.
    pub fn forward(&self, g: &mut Graph, texts: &[&str]) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let bags = texts.iter().map(|t| bucket_vector(t)).collect();
        let e = g.embedding_bag(w, bags);
        g.add_broadcast(e, b)
    }

    pub fn embed(&self, store: &ParamStore, text: &str) -> Vec<f64> {
        let w = store.get(self.weight).data();
        let mut out = store.get(self.bias).data().to_vec();
        for (b, c) in bucket_vector(text) {
            for (o, wv) in out.iter_mut().zip(&w[b * EMBED_DIM..(b + 1) * EMBED_DIM]) {
                *o += c * wv;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tokenizer_strips_punctuation_and_case() {
        assert_eq!(tokenize("  A person, WALKS forward!  "), ["a", "person", "walks", "forward"]);
        assert!(tokenize("?!").is_empty());
    }
}
