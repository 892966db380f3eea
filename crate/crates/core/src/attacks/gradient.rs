//! FGSM, BIM and PGD. All three run through [`descend`], so FGSM is exactly
//! one BIM step of size ε.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::{compose, AttackConfig, AttackMethod, AttackOutcome, Metric, Norms};
use crate::classifier::argmax;
use crate::error::{Error, Result};
use crate::network::{ActivationTrace, LossSpec, Network};
use crate::tensor::{norms, Tensor};

/// Single-step targeted attack: `x_adv = clip(x - ε·dir(∇ CE(f(x), target)))`
/// with `dir = sign` for L∞ and `g / ||g||_2` for L2.
pub fn fgsm(net: &Network<f32>, x: &Tensor<f32>, target: usize, cfg: &AttackConfig) -> Result<AttackOutcome> {
    if cfg.method != AttackMethod::Fgsm {
        return Err(Error::InvalidAttack(alloc::format!("fgsm called with a {} config", cfg.method)));
    }
    cfg.validate()?;
    check_input(net, x, target)?;
    let start = vec![0.0; x.len()];
    descend(net, x, target, cfg.metric, cfg.epsilon, 1, cfg.epsilon, start, None)
}

/// BIM (`random_start == false`) or PGD (`random_start == true`): `steps`
/// targeted steps of `step_size`, each followed by projection onto the ε-ball
/// and the `[0, 1]` box. `rng` is only drawn from for the random start.
pub fn iterative_attack<R: Rng + ?Sized>(
    net: &Network<f32>,
    x: &Tensor<f32>,
    target: usize,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<AttackOutcome> {
    if !matches!(cfg.method, AttackMethod::Bim | AttackMethod::Pgd | AttackMethod::Fgsm) {
        return Err(Error::InvalidAttack(alloc::format!(
            "iterative_attack called with a {} config",
            cfg.method
        )));
    }
    cfg.validate()?;
    check_input(net, x, target)?;
    let start = if cfg.random_start {
        let mut d = random_start(rng, cfg.metric, cfg.epsilon, x.len());
        box_clamp(&mut d, x.data());
        d
    } else {
        vec![0.0; x.len()]
    };
    descend(
        net,
        x,
        target,
        cfg.metric,
        cfg.epsilon,
        cfg.steps,
        cfg.step_size,
        start,
        cfg.early_stop_margin,
    )
}

pub(super) fn check_input(net: &Network<f32>, x: &Tensor<f32>, target: usize) -> Result<()> {
    if x.shape() != net.input_shape() {
        return Err(Error::shape(
            Some(0),
            alloc::format!("expected one input of shape {:?}, got {:?}", net.input_shape(), x.shape()),
        ));
    }
    if target >= net.num_classes() {
        return Err(Error::ClassIndex {
            index: target,
            classes: net.num_classes(),
        });
    }
    Ok(())
}

/// Uniform sample from the ε-ball of `metric`.
fn random_start<R: Rng + ?Sized>(rng: &mut R, metric: Metric, eps: f64, n: usize) -> Vec<f32> {
    match metric {
        Metric::Linf => (0..n).map(|_| rng.gen_range(-eps..=eps) as f32).collect(),
        _ => {
            let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let radius = eps * rng.gen::<f64>().powf(1.0 / n as f64);
            if len == 0.0 {
                return vec![0.0; n];
            }
            let mut d: Vec<f32> = dir.iter().map(|v| (v / len * radius) as f32).collect();
            project(&mut d, metric, eps);
            d
        }
    }
}

/// Keeps `x + delta` inside `[0, 1]`. Only shrinks coordinates, so the
/// ε-ball constraint is preserved.
fn box_clamp(delta: &mut [f32], x: &[f32]) {
    for (d, &xi) in delta.iter_mut().zip(x) {
        *d = d.clamp(-xi, 1.0 - xi);
    }
}

/// Projects `delta` onto the ε-ball of `metric`.
fn project(delta: &mut [f32], metric: Metric, eps: f64) {
    match metric {
        Metric::Linf => {
            let e = eps as f32;
            for d in delta.iter_mut() {
                *d = d.clamp(-e, e);
            }
        }
        _ => {
            let norm = norms::l2(delta);
            if norm > eps {
                let scale = eps / norm;
                for d in delta.iter_mut() {
                    *d = (*d as f64 * scale) as f32;
                }
                // f32 rounding can leave the norm a hair above ε.
                while norms::l2(delta) > eps {
                    for d in delta.iter_mut() {
                        *d *= 1.0 - f32::EPSILON;
                    }
                }
            }
        }
    }
}

/// Sign with `sign(0) == 0`.
fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn margin(trace: &ActivationTrace<f32>, target: usize) -> f64 {
    let z = trace.logits().row(0);
    let other = z
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target)
        .map(|(_, v)| *v)
        .fold(f32::NEG_INFINITY, f32::max);
    (z[target] - other) as f64
}

#[allow(clippy::too_many_arguments)]
fn descend(
    net: &Network<f32>,
    x: &Tensor<f32>,
    target: usize,
    metric: Metric,
    eps: f64,
    steps: usize,
    step_size: f64,
    mut delta: Vec<f32>,
    early_stop_margin: Option<f64>,
) -> Result<AttackOutcome> {
    let shape = x.shape().to_vec();
    let loss = LossSpec::CrossEntropy { class: target };
    let mut x_adv = compose(x.data(), &delta);
    let mut trace = net.forward_all(&Tensor::from_parts(shape.clone(), x_adv.clone()))?;
    let mut used = 0;
    for _ in 0..steps {
        if let Some(m) = early_stop_margin {
            if argmax(trace.output().row(0)) == target && margin(&trace, target) >= m {
                break;
            }
        }
        let g = net.input_gradient_from_trace(&trace, loss)?;
        used += 1;
        let g = g.data();
        match metric {
            Metric::Linf => {
                let a = step_size as f32;
                for (d, &gi) in delta.iter_mut().zip(g) {
                    *d -= a * sign(gi);
                }
            }
            _ => {
                let norm = norms::l2(g);
                if norm > 0.0 {
                    let a = step_size / norm;
                    for (d, &gi) in delta.iter_mut().zip(g) {
                        *d -= (a * gi as f64) as f32;
                    }
                }
            }
        }
        project(&mut delta, metric, eps);
        box_clamp(&mut delta, x.data());
        x_adv = compose(x.data(), &delta);
        trace = net.forward_all(&Tensor::from_parts(shape.clone(), x_adv.clone()))?;
    }
    let predicted = argmax(trace.output().row(0));
    Ok(AttackOutcome {
        norms: Norms::of(&delta),
        x_adv: Tensor::from_parts(shape.clone(), x_adv),
        delta: Tensor::from_parts(shape, delta),
        success: predicted == target,
        target,
        predicted,
        iterations: used,
    })
}
