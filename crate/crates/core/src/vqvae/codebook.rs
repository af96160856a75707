use rand::Rng;

use crate::error::{Error, Result};

/// `size` codes of width `dim` plus the exponential moving averages that
/// update them.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub size: usize,
    pub dim: usize,
    /// Row-major `size x dim`.
    pub codes: Vec<f64>,
    /// EMA of per-code assignment counts.
    pub usage: Vec<f64>,
    /// EMA of per-code sums of assigned vectors.
    pub sums: Vec<f64>,
}

impl Codebook {
    pub fn new(codes: Vec<f64>, size: usize, dim: usize) -> Result<Codebook> {
        if size == 0 || dim == 0 {
            return Err(Error::Config("codebook must have at least one code of positive width".into()));
        }
        if codes.len() != size * dim {
            return Err(Error::Shape(format!("{} values for a {size}x{dim} codebook", codes.len())));
        }
        Ok(Codebook { size, dim, sums: codes.clone(), codes, usage: vec![1.0; size] })
    }

    pub fn code(&self, i: usize) -> &[f64] {
        &self.codes[i * self.dim..(i + 1) * self.dim]
    }

    /// Index of the closest code; the lowest index wins ties.
    pub fn nearest(&self, q: &[f64]) -> usize {
        debug_assert_eq!(q.len(), self.dim);
        let mut best = (0, f64::INFINITY);
        for i in 0..self.size {
            let d: f64 = self.code(i).iter().zip(q).map(|(c, x)| (c - x) * (c - x)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Moving-average update from one batch of `n x dim` vectors and their
    /// assigned codes.
    pub fn ema_update(&mut self, vectors: &[f64], assignments: &[usize], decay: f64) {
        let mut count = vec![0.0; self.size];
        let mut sum = vec![0.0; self.size * self.dim];
        for (v, &a) in vectors.chunks_exact(self.dim).zip(assignments) {
            count[a] += 1.0;
            for (s, x) in sum[a * self.dim..(a + 1) * self.dim].iter_mut().zip(v) {
                *s += x;
            }
        }
        for i in 0..self.size {
            self.usage[i] = decay * self.usage[i] + (1.0 - decay) * count[i];
            for k in 0..self.dim {
                let j = i * self.dim + k;
                self.sums[j] = decay * self.sums[j] + (1.0 - decay) * sum[j];
                self.codes[j] = self.sums[j] / self.usage[i].max(1e-12);
            }
        }
    }

    /// Re-seeds codes whose usage fell below `threshold` with random rows of
    /// `vectors`. Returns how many codes were reset.
    pub fn reset_dead(&mut self, vectors: &[f64], threshold: f64, rng: &mut impl Rng) -> usize {
        let n = vectors.len() / self.dim;
        if n == 0 {
            return 0;
        }
        let mut resets = 0;
        for i in 0..self.size {
            if self.usage[i] < threshold {
                let r = rng.gen_range(0..n);
                let src = &vectors[r * self.dim..(r + 1) * self.dim];
                self.codes[i * self.dim..(i + 1) * self.dim].copy_from_slice(src);
                self.sums[i * self.dim..(i + 1) * self.dim].copy_from_slice(src);
                self.usage[i] = 1.0;
                resets += 1;
            }
        }
        resets
    }

    /// Fills every code from random rows of `vectors`.
    pub fn init_from(&mut self, vectors: &[f64], rng: &mut impl Rng) {
        self.usage.fill(0.0);
        self.reset_dead(vectors, f64::INFINITY, rng);
    }

    pub fn all_finite(&self) -> bool {
        self.codes.iter().all(|v| v.is_finite()) && self.usage.iter().all(|&u| u >= 0.0 && u.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_picks_lowest_index_on_ties() {
        let cb = Codebook::new(vec![0.0, 0.0, 1.0, 1.0], 2, 2).unwrap();
        assert_eq!(cb.nearest(&[0.9, 1.2]), 1);
        assert_eq!(cb.nearest(&[0.5, 0.5]), 0);
    }

    #[test]
    fn empty_codebook_is_a_config_error() {
        assert!(matches!(Codebook::new(vec![], 0, 3), Err(Error::Config(_))));
    }
}
