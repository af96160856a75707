use std::collections::HashMap;

use crate::{ParamId, ParamStore, Tensor};

/// Decoupled-weight-decay Adam.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    moments: HashMap<ParamId, (Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.99, eps: 1e-8, weight_decay, step: 0, moments: HashMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Gradients for non-trainable ids are ignored.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Tensor)]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let trainable: std::collections::HashSet<ParamId> = store.trainable_ids().into_iter().collect();
        for (id, g) in grads {
            if !trainable.contains(id) {
                continue;
            }
            let n = g.numel();
            let (m, v) = self.moments.entry(*id).or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            let p = store.get_mut(*id);
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * *w);
            }
        }
    }
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [(ParamId, Tensor)], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|(_, g)| g.sum_sq()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for (_, g) in grads.iter_mut() {
            g.scale_in_place(s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;

    #[test]
    fn adamw_minimises_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::new([2], vec![3.0, -2.0]));
        let mut opt = AdamW::new(0.1, 0.0);
        for _ in 0..500 {
            let grads = {
                let mut g = Graph::new(&store);
                let x = g.param(id);
                let s = g.sqr(x);
                let l = g.sum_all(s);
                g.backward(l).into_param_grads()
            };
            opt.step(&mut store, &grads);
        }
        assert!(store.get(id).max_abs() < 1e-2, "{:?}", store.get(id));
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut grads = vec![(ParamId(0), Tensor::new([2], vec![3.0, 4.0]))];
        let n = clip_grad_norm(&mut grads, 1.0);
        assert_eq!(n, 5.0);
        assert!((grads[0].1.sum_sq().sqrt() - 1.0).abs() < 1e-12);
    }
}
