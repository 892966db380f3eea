//! Central finite differences, used as an independent oracle for the
//! reverse-mode gradients.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::Result;
use crate::layer::{Layer, Padding};
use crate::network::{Gradients, LossSpec, Network};
use crate::rng::stream_rng;
use crate::tensor::Tensor;

/// `(f(θ + h e_i) - f(θ - h e_i)) / 2h` for every coordinate `i`.
pub fn central_difference<F>(mut f: F, theta: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Finite-difference estimate of `net.input_gradient(x, loss)`.
pub fn finite_difference_input_gradient(
    net: &Network<f64>,
    x: &Tensor<f64>,
    loss: LossSpec,
    h: f64,
) -> Result<Tensor<f64>> {
    // surface shape / class errors before probing
    net.loss(x, loss)?;
    let shape = x.shape().to_vec();
    let g = central_difference(
        |theta| {
            let probe = Tensor::from_parts(shape.clone(), theta.to_vec());
            net.loss(&probe, loss).expect("validated above")
        },
        x.data(),
        h,
    );
    Ok(Tensor::from_parts(shape, g))
}

/// Finite-difference estimate of `net.param_gradients(batch, labels)`.
pub fn finite_difference_param_gradients(
    net: &Network<f64>,
    batch: &Tensor<f64>,
    labels: &[usize],
    h: f64,
) -> Result<Gradients<f64>> {
    net.mean_loss(batch, labels)?;
    let mut grads = Gradients::zeros_like(net);
    let mut probe = net.clone();
    let mut flat_index = 0;
    for (li, layer_grads) in grads.per_layer.iter_mut().enumerate() {
        for (pi, g) in layer_grads.iter_mut().enumerate() {
            let base: Vec<f64> = net.layers()[li].params()[pi].data().to_vec();
            let est = central_difference(
                |theta| {
                    let p = probe.params_mut().nth(flat_index).expect("parameter index");
                    p.data_mut().copy_from_slice(theta);
                    probe.mean_loss(batch, labels).expect("validated above")
                },
                &base,
                h,
            );
            probe
                .params_mut()
                .nth(flat_index)
                .expect("parameter index")
                .data_mut()
                .copy_from_slice(&base);
            g.data_mut().copy_from_slice(&est);
            flat_index += 1;
        }
    }
    Ok(grads)
}

/// `|a - b| / max(|a|, |b|, floor)`, maximised over paired entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient lengths differ");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn uniform(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect())
}

/// A small random softmax network together with a batch of inputs: either a
/// two-hidden-layer MLP or a conv / maxpool / dense stack. Drawn entirely from
/// `seed`.
pub fn random_network(seed: u64) -> (Network<f64>, Tensor<f64>) {
    let mut rng = stream_rng(seed, "gradcheck", 0);
    let classes = rng.gen_range(2..=5);
    let batch = rng.gen_range(1..=3);
    if rng.gen_bool(0.5) {
        let widths = [rng.gen_range(2..=8), rng.gen_range(2..=8), rng.gen_range(2..=8)];
        let mut layers = Vec::new();
        for w in widths.windows(2) {
            layers.push(Layer::Dense {
                weight: uniform(&mut rng, &[w[1], w[0]], 1.0),
                bias: uniform(&mut rng, &[w[1]], 0.5),
            });
            layers.push(Layer::Relu);
        }
        layers.push(Layer::Dense {
            weight: uniform(&mut rng, &[classes, widths[2]], 1.0),
            bias: uniform(&mut rng, &[classes], 0.5),
        });
        layers.push(Layer::Softmax);
        let net = Network::new(vec![widths[0]], layers).expect("valid mlp");
        let x = uniform(&mut rng, &[batch, widths[0]], 1.0);
        (net, x)
    } else {
        let (cin, cout) = (rng.gen_range(1..=2), rng.gen_range(1..=3));
        let side = rng.gen_range(5..=7);
        let stride = rng.gen_range(1..=2);
        let padding = if rng.gen_bool(0.5) { Padding::Same } else { Padding::Valid };
        let mut layers = vec![
            Layer::Conv2d {
                weight: uniform(&mut rng, &[cout, cin, 3, 3], 0.8),
                bias: uniform(&mut rng, &[cout], 0.3),
                stride,
                padding,
            },
            Layer::Relu,
            Layer::MaxPool2d { size: 2, stride: 2 },
            Layer::Flatten,
        ];
        let flat = layers
            .iter()
            .try_fold(vec![cin, side, side], |shape, l| l.output_shape(&shape))
            .expect("valid conv stack")[0];
        layers.push(Layer::Dense {
            weight: uniform(&mut rng, &[classes, flat], 1.0),
            bias: uniform(&mut rng, &[classes], 0.5),
        });
        layers.push(Layer::Softmax);
        let net = Network::new(vec![cin, side, side], layers).expect("valid cnn");
        let x = uniform(&mut rng, &[batch, cin, side, side], 1.0);
        (net, x)
    }
}

/// Smallest distance of any ReLU input to the kink at zero. Finite
/// differences are only meaningful when this exceeds the probe step.
pub fn kink_margin(net: &Network<f64>, x: &Tensor<f64>) -> Result<f64> {
    let trace = net.forward_all(x)?;
    let mut margin = f64::INFINITY;
    for (i, layer) in net.layers().iter().enumerate() {
        if matches!(layer, Layer::Relu) {
            let input = if i == 0 { &trace.input } else { &trace.outputs[i - 1] };
            margin = input.data().iter().fold(margin, |m, v| m.min(v.abs()));
        }
    }
    Ok(margin)
}

/// Largest relative error between reverse-mode and central-difference
/// gradients of the mean cross-entropy, over the input and every parameter.
pub fn oracle_error(net: &Network<f64>, x: &Tensor<f64>, labels: &[usize], h: f64, floor: f64) -> Result<f64> {
    let (grads, _) = net.param_gradients(x, labels)?;
    let fd = finite_difference_param_gradients(net, x, labels, h)?;
    let mut worst = 0.0f64;
    for (a, b) in grads.iter().zip(fd.iter()) {
        worst = worst.max(max_relative_error(a.data(), b.data(), floor));
    }
    for (s, &c) in labels.iter().enumerate() {
        let row = Tensor::from_parts(x.shape()[1..].to_vec(), x.row(s).to_vec());
        let loss = LossSpec::CrossEntropy { class: c };
        let g = net.input_gradient(&row, loss)?;
        let f = finite_difference_input_gradient(net, &row, loss, h)?;
        worst = worst.max(max_relative_error(g.data(), f.data(), floor));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_derivative() {
        let g = central_difference(|v| v[0] * v[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_map_is_flat() {
        let g = central_difference(|_| 4.2, &[1.0, -2.0, 0.5], 1e-5);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_networks_are_reproducible() {
        let (a, xa) = random_network(5);
        let (b, xb) = random_network(5);
        assert_eq!(a, b);
        assert_eq!(xa, xb);
    }
}
