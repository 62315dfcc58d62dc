//! Adam with per-parameter step counts and a freeze mask.

use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    steps: Vec<u64>,
    frozen: Vec<bool>,
}

impl Adam {
    /// Moment buffers sized for `store`; β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
            steps: vec![0; store.len()],
            frozen: vec![false; store.len()],
        }
    }

    /// Frozen parameters are skipped entirely, including their step count,
    /// so bias correction starts fresh when they are released.
    pub fn set_frozen(&mut self, ids: &[ParamId], frozen: bool) {
        for id in ids {
            self.frozen[id.0] = frozen;
        }
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen[id.0]
    }

    pub fn steps(&self, id: ParamId) -> u64 {
        self.steps[id.0]
    }

    /// Applies one update from the gradients held in `store`, then clears them.
    pub fn step(&mut self, store: &mut ParamStore) {
        let (b1, b2) = (self.beta1, self.beta2);
        for (id, p) in store.iter_mut() {
            let i = id.0;
            if self.frozen[i] {
                continue;
            }
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            let g = p.grad.data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let x = p.value.data_mut();
            for k in 0..x.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                x[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        store.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut s = ParamStore::new();
        let a = s.add("a", Tensor::new([2, 1, 1, 1], vec![1.0, -1.0]).unwrap());
        s.get_mut(a).grad = Tensor::new([2, 1, 1, 1], vec![0.3, -5.0]).unwrap();
        let mut opt = Adam::new(&s, 0.01);
        opt.step(&mut s);
        let x = s.value(a).data();
        assert!((x[0] - 0.99).abs() < 1e-9);
        assert!((x[1] + 0.99).abs() < 1e-9);
        assert_eq!(s.get(a).grad.data(), &[0.0, 0.0]);
    }

    #[test]
    fn frozen_parameters_do_not_move_or_count() {
        let mut s = ParamStore::new();
        let a = s.add("a", Tensor::scalar(1.0));
        let b = s.add("b", Tensor::scalar(1.0));
        let mut opt = Adam::new(&s, 0.1);
        opt.set_frozen(&[b], true);
        for _ in 0..3 {
            s.get_mut(a).grad = Tensor::scalar(1.0);
            s.get_mut(b).grad = Tensor::scalar(1.0);
            opt.step(&mut s);
        }
        assert_eq!(s.value(b).data()[0], 1.0);
        assert_eq!((opt.steps(a), opt.steps(b)), (3, 0));
        opt.set_frozen(&[b], false);
        s.get_mut(b).grad = Tensor::scalar(1.0);
        opt.step(&mut s);
        assert!((s.value(b).data()[0] - 0.9).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut s = ParamStore::new();
        let a = s.add("a", Tensor::scalar(5.0));
        let mut opt = Adam::new(&s, 0.1);
        for _ in 0..500 {
            let x = s.value(a).data()[0];
            s.get_mut(a).grad = Tensor::scalar(2.0 * (x - 2.0));
            opt.step(&mut s);
        }
        assert!((s.value(a).data()[0] - 2.0).abs() < 1e-3);
    }
}
