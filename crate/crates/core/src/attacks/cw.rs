//! Carlini-Wagner L2: optimize `w` with `x_adv = (tanh(w) + 1) / 2`, minimizing
//! `||x_adv - x||² + c · max(max_{j≠t} z_j - z_t, -κ)`, with a binary search
//! over `c`.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::gradient::check_input;
use super::{compose, AttackConfig, AttackMethod, AttackOutcome, Norms};
use crate::classifier::argmax;
use crate::error::{Error, Result};
use crate::network::{LossSpec, Network};
use crate::tensor::{norms, Tensor};

const UPPER_CONST: f64 = 1e10;
const TANH_SCALE: f64 = 0.999_999;

struct Best {
    l2: f64,
    delta: Vec<f32>,
}

/// Targeted C&W L2. Fails with [`Error::AlreadyTarget`] when `x` is already
/// classified as `target`. A failed search returns the unperturbed input
/// with `success == false`.
pub fn cw_l2(net: &Network<f32>, x: &Tensor<f32>, target: usize, cfg: &AttackConfig) -> Result<AttackOutcome> {
    if cfg.method != AttackMethod::CwL2 {
        return Err(Error::InvalidAttack(alloc::format!("cw_l2 called with a {} config", cfg.method)));
    }
    cfg.validate()?;
    let p = cfg.cw.expect("validated");
    check_input(net, x, target)?;
    let shape = x.shape().to_vec();
    let x0 = x.data();
    let n = x0.len();
    if argmax(net.forward(x)?.row(0)) == target {
        return Err(Error::AlreadyTarget { target });
    }

    let w0: Vec<f64> = x0
        .iter()
        .map(|&v| ((2.0 * v as f64 - 1.0) * TANH_SCALE).atanh())
        .collect();
    let (mut lower, mut upper, mut c) = (0.0f64, UPPER_CONST, p.initial_const);
    let mut best: Option<Best> = None;
    let mut used = 0usize;
    let check_every = (p.iterations / 10).max(1);
    let (b1, b2, adam_eps) = (0.9f64, 0.999f64, 1e-8f64);

    for _ in 0..p.binary_search_steps {
        let mut w = w0.clone();
        let (mut m, mut v) = (vec![0.0f64; n], vec![0.0f64; n]);
        let mut found = false;
        let mut prev = f64::INFINITY;
        for it in 0..p.iterations {
            let tanh: Vec<f64> = w.iter().map(|wi| wi.tanh()).collect();
            let delta: Vec<f32> = tanh
                .iter()
                .zip(x0)
                .map(|(t, &xi)| ((t + 1.0) / 2.0) as f32 - xi)
                .collect();
            let x_adv = compose(x0, &delta);
            let trace = net.forward_all(&Tensor::from_parts(shape.clone(), x_adv))?;
            let z = trace.logits().row(0);
            let (other, z_other) = z
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != target)
                .fold((usize::MAX, f32::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
            let gap = (z_other - z[target]) as f64;
            let l2sq: f64 = delta.iter().map(|d| (*d as f64) * (*d as f64)).sum();
            let loss = l2sq + c * gap.max(-p.confidence);

            if argmax(trace.output().row(0)) == target && -gap >= p.confidence {
                found = true;
                let l2 = l2sq.sqrt();
                if best.as_ref().map_or(true, |b| l2 < b.l2) {
                    best = Some(Best {
                        l2,
                        delta: delta.clone(),
                    });
                }
            }
            if p.abort_early && it % check_every == 0 {
                if loss > prev * 0.9999 {
                    break;
                }
                prev = loss;
            }

            let g_logit = if gap > -p.confidence {
                Some(net.input_gradient_from_trace(&trace, LossSpec::LogitMargin { target, other })?)
            } else {
                None
            };
            used += 1;
            let t = (it + 1) as i32;
            let (bc1, bc2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
            for i in 0..n {
                let mut g = 2.0 * delta[i] as f64;
                if let Some(gl) = &g_logit {
                    g += c * gl.data()[i] as f64;
                }
                g *= (1.0 - tanh[i] * tanh[i]) / 2.0;
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                w[i] -= p.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + adam_eps);
            }
        }
        if found {
            upper = upper.min(c);
            c = (lower + upper) / 2.0;
        } else {
            lower = lower.max(c);
            c = if upper < UPPER_CONST { (lower + upper) / 2.0 } else { c * 10.0 };
        }
    }

    let delta = best.map_or_else(|| vec![0.0; n], |b| b.delta);
    let x_adv = compose(x0, &delta);
    let predicted = argmax(net.forward(&Tensor::from_parts(shape.clone(), x_adv.clone()))?.row(0));
    debug_assert!(norms::l2(&delta).is_finite());
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::CwParams;
    use crate::layer::Layer;

    fn linear_net() -> Network<f32> {
        // z = (x0 - x1, x1 - x0, 0)
        let w = Tensor::new(vec![3, 2], vec![1.0, -1.0, -1.0, 1.0, 0.0, 0.0]).unwrap();
        let b = Tensor::new(vec![3], vec![0.0, 0.0, 0.01]).unwrap();
        Network::new(vec![2], vec![Layer::dense(w, b).unwrap(), Layer::Softmax]).unwrap()
    }

    #[test]
    fn rejects_input_already_at_target() {
        let net = linear_net();
        let x = Tensor::new(vec![2], vec![0.9, 0.1]).unwrap();
        let err = cw_l2(&net, &x, 0, &AttackConfig::cw_l2(CwParams::default())).unwrap_err();
        assert!(matches!(err, Error::AlreadyTarget { target: 0 }));
    }

    #[test]
    fn success_implies_target_logit_wins() {
        let net = linear_net();
        let x = Tensor::new(vec![2], vec![0.7, 0.3]).unwrap();
        let out = cw_l2(&net, &x, 1, &AttackConfig::cw_l2(CwParams::default())).unwrap();
        assert!(out.success);
        let z = net.logits(&out.x_adv).unwrap();
        let z = z.row(0);
        assert!(z[1] >= z[0] && z[1] >= z[2]);
        // Minimal crossing is at x0 == x1, distance 0.4 / sqrt(2).
        assert!(out.norms.l2 < 0.4, "l2 = {}", out.norms.l2);
        assert_eq!(out.x_adv.data(), compose(x.data(), out.delta.data()).as_slice());
    }
}
