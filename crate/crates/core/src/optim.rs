//! First-order optimizers: Adam for the classifier, AdaBound for the detector.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::network::{Gradients, Network};
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moment buffers, aligned with
/// [`Network::params`].
#[derive(Clone, Debug)]
struct Moments<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Moments<T> {
    fn for_network(net: &Network<T>) -> Self {
        let zeros: Vec<Vec<T>> = net.params().map(|p| alloc::vec![T::zero(); p.len()]).collect();
        Moments {
            m: zeros.clone(),
            v: zeros,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    cfg: AdamConfig,
    moments: Moments<T>,
    t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig, net: &Network<T>) -> Self {
        Adam {
            cfg,
            moments: Moments::for_network(net),
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        // lr * sqrt(bc2) / bc1 folded into one scalar
        let step = T::of(c.learning_rate * bc2.sqrt() / bc1);
        let (b1, b2, eps) = (T::of(c.beta1), T::of(c.beta2), T::of(c.epsilon * bc2.sqrt()));
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grads.iter())
            .zip(self.moments.m.iter_mut())
            .zip(self.moments.v.iter_mut())
        {
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                *w -= step * *mi / (vi.sqrt() + eps);
            }
        }
    }
}

/// AdaBound hyperparameters. Defaults follow the reference implementation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaBoundConfig {
    pub learning_rate: f64,
    pub final_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for AdaBoundConfig {
    fn default() -> Self {
        AdaBoundConfig {
            learning_rate: 1e-3,
            final_lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            gamma: 1e-3,
            epsilon: 1e-8,
        }
    }
}

impl AdaBoundConfig {
    /// Lower and upper step-size bounds at step `t >= 1`. Both converge to
    /// `final_lr` as `t` grows.
    pub fn bounds(&self, t: u64) -> (f64, f64) {
        let gt = self.gamma * t as f64;
        (
            self.final_lr * (1.0 - 1.0 / (gt + 1.0)),
            self.final_lr * (1.0 + 1.0 / gt),
        )
    }
}

/// Range of effective per-coordinate step sizes applied in one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub min_rate: f64,
    pub max_rate: f64,
}

/// One AdaBound update of a single parameter buffer at step `t`:
/// `η = clip(lr / (sqrt(v̂) + ε), lb_t, ub_t)`, `θ -= η · m̂`.
pub fn adabound_step<T: Real>(
    cfg: &AdaBoundConfig,
    m: &mut [T],
    v: &mut [T],
    params: &mut [T],
    grads: &[T],
    t: u64,
) -> StepStats {
    assert!(t >= 1, "AdaBound steps are numbered from 1");
    let (lb, ub) = cfg.bounds(t);
    let bc1 = 1.0 - cfg.beta1.powi(t.min(i32::MAX as u64) as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t.min(i32::MAX as u64) as i32);
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let mut stats = StepStats {
        min_rate: f64::INFINITY,
        max_rate: 0.0,
    };
    for (((w, &g), mi), vi) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *mi = b1 * *mi + (T::one() - b1) * g;
        *vi = b2 * *vi + (T::one() - b2) * g * g;
        let m_hat = mi.as_f64() / bc1;
        let v_hat = vi.as_f64() / bc2;
        let rate = (cfg.learning_rate / (v_hat.sqrt() + cfg.epsilon)).clamp(lb, ub);
        debug_assert!((lb..=ub).contains(&rate));
        stats.min_rate = stats.min_rate.min(rate);
        stats.max_rate = stats.max_rate.max(rate);
        *w -= T::of(rate * m_hat);
    }
    stats
}

#[derive(Clone, Debug)]
pub struct AdaBound<T> {
    cfg: AdaBoundConfig,
    moments: Moments<T>,
    t: u64,
}

impl<T: Real> AdaBound<T> {
    pub fn new(cfg: AdaBoundConfig, net: &Network<T>) -> Self {
        AdaBound {
            cfg,
            moments: Moments::for_network(net),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) -> StepStats {
        self.t += 1;
        let mut stats = StepStats {
            min_rate: f64::INFINITY,
            max_rate: 0.0,
        };
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grads.iter())
            .zip(self.moments.m.iter_mut())
            .zip(self.moments.v.iter_mut())
        {
            let s = adabound_step(&self.cfg, m, v, p.data_mut(), g.data(), self.t);
            stats.min_rate = stats.min_rate.min(s.min_rate);
            stats.max_rate = stats.max_rate.max(s.max_rate);
        }
        stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_at_first_step() {
        let (lb, ub) = AdaBoundConfig::default().bounds(1);
        assert!((ub - 100.1).abs() < 1e-9);
        assert!((lb - 0.1 * (1.0 - 1.0 / 1.001)).abs() < 1e-15);
        assert!((lb - 9.99e-5).abs() < 1e-7);
    }

    #[test]
    fn bounds_converge_to_final_lr() {
        let cfg = AdaBoundConfig::default();
        let (lb, ub) = cfg.bounds(1_000_000);
        assert!((lb - 0.1).abs() < 1e-3 && (ub - 0.1).abs() < 1e-3);
        let mut prev = cfg.bounds(1);
        for t in [2u64, 10, 100, 1000, 10_000] {
            let b = cfg.bounds(t);
            assert!(b.0 >= prev.0 && b.1 <= prev.1);
            prev = b;
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let cfg = AdaBoundConfig::default();
        let mut p = [0.5f32, -1.0, 2.0];
        let (mut m, mut v) = ([0.0f32; 3], [0.0f32; 3]);
        adabound_step(&cfg, &mut m, &mut v, &mut p, &[0.0; 3], 1);
        assert_eq!(p, [0.5, -1.0, 2.0]);
    }

    #[test]
    fn effective_rate_within_bounds() {
        let cfg = AdaBoundConfig::default();
        let mut p = [0.0f64; 4];
        let (mut m, mut v) = ([0.0; 4], [0.0; 4]);
        for t in 1..=50u64 {
            let g = [1e-6, 1.0, -3.0, 1e3];
            let s = adabound_step(&cfg, &mut m, &mut v, &mut p, &g, t);
            let (lb, ub) = cfg.bounds(t);
            assert!(s.min_rate >= lb && s.max_rate <= ub);
        }
    }
}
