//! Adam with bias correction and a warmup / inverse-square-root schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::params::{Grads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub peak_lr: f64,
    pub warmup: u64,
}

impl Schedule {
    /// Learning rate at 1-based `step`: linear warmup to `peak_lr`, then
    /// `peak_lr * sqrt(warmup / step)`.
    pub fn lr(&self, step: u64) -> f64 {
        let step = step.max(1);
        if self.warmup == 0 {
            return self.peak_lr;
        }
        if step <= self.warmup {
            self.peak_lr * step as f64 / self.warmup as f64
        } else {
            self.peak_lr * (self.warmup as f64 / step as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.ids().map(|id| vec![0.0; params.get(id).len()]).collect();
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: zeros.clone(), v: zeros, step: 0 }
    }

    /// Grows the moment buffers when parameters were appended to the store
    /// (a task head attached after pretraining).
    pub fn sync_shapes(&mut self, params: &ParamStore) {
        for id in self.m.len()..params.len() {
            self.m.push(vec![0.0; params.get(id).len()]);
            self.v.push(vec![0.0; params.get(id).len()]);
        }
    }

    /// One bias-corrected update at learning rate `lr`. Parameters flagged
    /// in `frozen` are left untouched.
    pub fn update(&mut self, params: &mut ParamStore, grads: &Grads, lr: f64, frozen: Option<&[bool]>) -> Result<()> {
        if grads.data.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} parameters, {} gradients, {} moment buffers",
                params.len(),
                grads.data.len(),
                self.m.len()
            )));
        }
        for id in params.ids() {
            if grads.data[id].len() != params.get(id).len() || self.m[id].len() != params.get(id).len() {
                return Err(Error::Shape(format!("gradient for '{}' has the wrong length", params.name(id))));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for id in params.ids() {
            if frozen.is_some_and(|f| f[id]) {
                continue;
            }
            let (m, v) = (&mut self.m[id], &mut self.v[id]);
            let p = params.get_mut(id);
            for (((x, g), mi), vi) in p.iter_mut().zip(&grads.data[id]).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *x -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Applies one scheduled Adam step; returns the learning rate used.
pub fn adam_step(params: &mut ParamStore, grads: &Grads, state: &mut Adam, schedule: &Schedule) -> Result<f64> {
    let lr = schedule.lr(state.step + 1);
    state.update(params, grads, lr, None)?;
    Ok(lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = ParamStore::new();
        p.add("w", [1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut adam = Adam::new(&p);
        let g = p.zeros_like();
        adam_step(&mut p, &g, &mut adam, &Schedule { peak_lr: 1e-3, warmup: 10 }).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_closed_form() {
        for &grad in &[0.3, -2.5, 1e-3] {
            let mut p = ParamStore::new();
            p.add("w", [1, 1], vec![0.7]).unwrap();
            let mut adam = Adam::new(&p);
            let mut g = p.zeros_like();
            g.data[0][0] = grad;
            let sched = Schedule { peak_lr: 1e-3, warmup: 0 };
            adam_step(&mut p, &g, &mut adam, &sched).unwrap();
            // m_hat = g, v_hat = g^2 after one step.
            let expected = 0.7 - 1e-3 * grad / (grad.abs() + 1e-8);
            assert!((p.get(0)[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn warmup_is_linear_then_decays() {
        let s = Schedule { peak_lr: 1e-3, warmup: 100 };
        for t in 1..=100 {
            assert_eq!(s.lr(t), 1e-3 * t as f64 / 100.0);
        }
        assert!(s.lr(400) < s.lr(101));
        assert!((s.lr(400) - 5e-4).abs() < 1e-18);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = ParamStore::new();
        p.add("w", [1, 2], vec![0.0; 2]).unwrap();
        let mut adam = Adam::new(&p);
        let g = Grads { data: vec![vec![0.0; 3]] };
        assert!(adam.update(&mut p, &g, 1e-3, None).is_err());
    }

    #[test]
    fn frozen_entries_do_not_move() {
        let mut p = ParamStore::new();
        p.add("a", [1, 1], vec![1.0]).unwrap();
        p.add("b", [1, 1], vec![1.0]).unwrap();
        let mut adam = Adam::new(&p);
        let g = Grads { data: vec![vec![1.0], vec![1.0]] };
        adam.update(&mut p, &g, 0.1, Some(&[true, false])).unwrap();
        assert_eq!(p.get(0)[0], 1.0);
        assert!(p.get(1)[0] < 1.0);
    }
}
