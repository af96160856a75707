//! Training-loop helpers shared by the codec and the transformer.

use rand::seq::SliceRandom;
use rand::Rng;

/// Cosine decay from `start` to `end` over `total` steps.
pub fn cosine_lr(step: usize, total: usize, start: f64, end: f64) -> f64 {
    if total <= 1 {
        return start;
    }
    let u = (step as f64 / (total - 1) as f64).min(1.0);
    end + 0.5 * (start - end) * (1.0 + (std::f64::consts::PI * u).cos())
}

/// Linear ramp from `start` to `end` at training progress `u` in [0, 1].
pub fn linear(u: f64, start: f64, end: f64) -> f64 {
    start + (end - start) * u.clamp(0.0, 1.0)
}

/// Shuffled mini-batches of `0..n`; the last batch may be short.
pub fn epoch_batches(n: usize, batch: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

pub fn batches_per_epoch(n: usize, batch: usize) -> usize {
    n.div_ceil(batch.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 10, 1.0, 0.1), 1.0);
        assert!((cosine_lr(9, 10, 1.0, 0.1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn linear_midpoint() {
        assert_eq!(linear(0.5, 0.0, 0.75), 0.375);
    }
}
