//! ADAM with finite-difference gradients and a cosine learning-rate schedule.

use rayon::prelude::*;

/// First/second-moment ADAM state.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// One update of `x` in place; `lr[i]` scales coordinate `i`.
    pub fn step(&mut self, x: &mut [f64], grad: &[f64], lr: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            x[i] -= lr[i] * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Cosine annealing from `lr_max` at `t = 0` to `lr_min` at `t = total`.
pub fn cosine_lr(lr_max: f64, lr_min: f64, t: usize, total: usize) -> f64 {
    if total == 0 {
        return lr_max;
    }
    let frac = (t.min(total) as f64) / total as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Central-difference gradient of `f` on the box [0, 1]ⁿ. Coordinates within
/// `h` of a bound use a one-sided quotient so that no probe leaves the box.
pub fn fd_gradient<F>(f: &F, x: &[f64], h: f64, f0: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut probe = x.to_vec();
            let lo = x[i] - h;
            let hi = x[i] + h;
            if lo < 0.0 {
                probe[i] = hi;
                (f(&probe) - f0) / h
            } else if hi > 1.0 {
                probe[i] = lo;
                (f0 - f(&probe)) / h
            } else {
                probe[i] = hi;
                let fp = f(&probe);
                probe[i] = lo;
                let fm = f(&probe);
                (fp - fm) / (2.0 * h)
            }
        })
        .collect()
}

/// True when the relative drop of `history` over the last `window` entries
/// is below `threshold`.
pub fn stalled(history: &[f64], window: usize, threshold: f64) -> bool {
    if history.len() <= window {
        return false;
    }
    let now = history[history.len() - 1];
    let then = history[history.len() - 1 - window];
    if !then.is_finite() || then <= 0.0 {
        return now >= then;
    }
    (then - now) / then.abs() < threshold
}
