//! Penultimate-layer attributions by the DeepLIFT rescale rule and the flat
//! signatures built from them.
//!
//! For a baseline `b` the head maps the penultimate activation `a` to logits
//! through dense and ReLU layers. Multipliers `m[j][i]` are chained layer by
//! layer (dense: the weight matrix; ReLU: `Δout / Δin`), and the attribution of
//! neuron `i` to output `j` is `m[j][i] · (a_i − b_i)`. The result is averaged
//! over the background set.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::{softmax_in_place, Layer};
use crate::network::Network;
use crate::rng::stream_rng;
use crate::tensor::Tensor;

/// Reference penultimate activations, `K × d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSet {
    pub activations: Vec<Vec<f32>>,
    pub seed: u64,
    /// Dataset indices the activations were computed from.
    pub source_indices: Vec<usize>,
}

impl BackgroundSet {
    pub fn new(activations: Vec<Vec<f32>>, seed: u64, source_indices: Vec<usize>) -> Result<Self> {
        let Some(first) = activations.first() else {
            return Err(Error::InvalidArgument("background set must not be empty".into()));
        };
        let d = first.len();
        if let Some(bad) = activations.iter().find(|v| v.len() != d) {
            return Err(Error::WidthMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        Ok(BackgroundSet {
            activations,
            seed,
            source_indices,
        })
    }

    /// Penultimate activations of `k` samples drawn without replacement from
    /// `images` (`[N, ...]`).
    pub fn sample(net: &Network<f32>, images: &Tensor<f32>, k: usize, seed: u64) -> Result<Self> {
        let batch = net.batched(images)?;
        let n = batch.batch_size();
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(alloc::format!(
                "cannot draw {k} background samples from {n}"
            )));
        }
        let mut idx = sample(&mut stream_rng(seed, "background", 0), n, k).into_vec();
        idx.sort_unstable();
        let w = batch.row_len();
        let mut data = Vec::with_capacity(k * w);
        for &i in &idx {
            data.extend_from_slice(batch.row(i));
        }
        let mut shape = batch.shape().to_vec();
        shape[0] = k;
        let acts = net.penultimate(&Tensor::from_parts(shape, data))?;
        let rows = (0..k).map(|r| acts.row(r).to_vec()).collect();
        BackgroundSet::new(rows, seed, idx)
    }

    pub fn len(&self) -> usize {
        self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }

    pub fn width(&self) -> usize {
        self.activations[0].len()
    }
}

/// Output the attributions explain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainTarget {
    #[default]
    Logits,
    Probabilities,
}

/// A `d × n` attribution matrix, row-major over (neuron, class).
#[derive(Clone, Debug, PartialEq)]
pub struct Attribution {
    pub neurons: usize,
    pub classes: usize,
    pub values: Vec<f64>,
}

impl Attribution {
    pub fn get(&self, neuron: usize, class: usize) -> f64 {
        self.values[neuron * self.classes + class]
    }

    /// `Σ_i φ[i][class]`.
    pub fn class_total(&self, class: usize) -> f64 {
        (0..self.neurons).map(|i| self.get(i, class)).sum()
    }
}

/// Flat signature of `neurons · classes` values, neuron-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XaiSignature {
    pub neurons: usize,
    pub classes: usize,
    pub values: Vec<f32>,
}

/// Row-major flattening of a `d × n` matrix given as rows.
pub fn flatten(matrix: &[Vec<f64>]) -> Vec<f64> {
    matrix.iter().flatten().copied().collect()
}

/// Inverse of [`flatten`] for `d` rows of `n` values.
pub fn unflatten(values: &[f64], neurons: usize, classes: usize) -> Result<Vec<Vec<f64>>> {
    if values.len() != neurons * classes {
        return Err(Error::WidthMismatch {
            expected: neurons * classes,
            got: values.len(),
        });
    }
    Ok(values.chunks(classes.max(1)).map(<[f64]>::to_vec).collect())
}

/// The explained head converted to 64-bit arithmetic.
#[derive(Clone, Debug)]
pub struct Explainer {
    head: Vec<Layer<f64>>,
    width: usize,
    classes: usize,
    target: ExplainTarget,
}

impl Explainer {
    pub fn new(net: &Network<f32>, target: ExplainTarget) -> Result<Self> {
        Self::from_head(net.head().iter().map(Layer::cast).collect(), net.penultimate_shape().iter().product(), target)
    }

    /// An explainer over an explicit dense/ReLU chain of input width `width`.
    pub fn from_head(head: Vec<Layer<f64>>, width: usize, target: ExplainTarget) -> Result<Self> {
        let mut cur = width;
        for (k, layer) in head.iter().enumerate() {
            match layer {
                Layer::Dense { weight, .. } => {
                    if weight.shape()[1] != cur {
                        return Err(Error::shape(
                            Some(k),
                            alloc::format!("dense layer expects width {}, got {cur}", weight.shape()[1]),
                        ));
                    }
                    cur = weight.shape()[0];
                }
                Layer::Relu | Layer::Flatten => {}
                other => {
                    return Err(Error::InvalidNetwork {
                        layer: k,
                        detail: alloc::format!("{:?} layers are not supported in an explained head", other.kind()),
                    })
                }
            }
        }
        Ok(Explainer {
            head,
            width,
            classes: cur,
            target,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Head outputs (logits, or probabilities for that target) for one
    /// penultimate activation.
    pub fn outputs(&self, a: &[f64]) -> Vec<f64> {
        let mut out = self.trace(a).pop().expect("trace holds the input");
        if self.target == ExplainTarget::Probabilities {
            softmax_in_place(&mut out);
        }
        out
    }

    /// Activations entering each layer, followed by the final output.
    fn trace(&self, a: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.head.len() + 1);
        acts.push(a.to_vec());
        for layer in &self.head {
            let cur = acts.last().expect("nonempty");
            let next = match layer {
                Layer::Dense { weight, bias } => {
                    let (o, i) = (weight.shape()[0], weight.shape()[1]);
                    let w = weight.data();
                    (0..o)
                        .map(|r| bias.data()[r] + (0..i).map(|c| w[r * i + c] * cur[c]).sum::<f64>())
                        .collect()
                }
                Layer::Relu => cur.iter().map(|v| v.max(0.0)).collect(),
                _ => cur.clone(),
            };
            acts.push(next);
        }
        acts
    }

    /// Multipliers `m[j][i]` (row-major `classes × width`) for one baseline.
    fn multipliers(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let ta = self.trace(a);
        let tb = self.trace(b);
        let n = self.classes;
        // m starts as the identity on the head output and is pulled back
        // through the layers.
        let mut cols = n;
        let mut m = vec![0.0; n * n];
        for j in 0..n {
            m[j * n + j] = 1.0;
        }
        if self.target == ExplainTarget::Probabilities {
            let (za, zb) = (ta.last().expect("output"), tb.last().expect("output"));
            let dz: Vec<f64> = za.iter().zip(zb).map(|(x, y)| x - y).collect();
            let norm2: f64 = dz.iter().map(|v| v * v).sum();
            let (mut pa, mut pb) = (za.clone(), zb.clone());
            softmax_in_place(&mut pa);
            softmax_in_place(&mut pb);
            if norm2 > 0.0 {
                for k in 0..n {
                    for j in 0..n {
                        m[k * n + j] = (pa[k] - pb[k]) * dz[j] / norm2;
                    }
                }
            } else {
                m.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        for (k, layer) in self.head.iter().enumerate().rev() {
            match layer {
                Layer::Dense { weight, .. } => {
                    let (o, i) = (weight.shape()[0], weight.shape()[1]);
                    debug_assert_eq!(o, cols);
                    let w = weight.data();
                    let mut next = vec![0.0; n * i];
                    for j in 0..n {
                        for r in 0..o {
                            let f = m[j * cols + r];
                            if f != 0.0 {
                                for c in 0..i {
                                    next[j * i + c] += f * w[r * i + c];
                                }
                            }
                        }
                    }
                    m = next;
                    cols = i;
                }
                Layer::Relu => {
                    let (xa, xb) = (&ta[k], &tb[k]);
                    for c in 0..cols {
                        let d = xa[c] - xb[c];
                        let r = if d != 0.0 {
                            (xa[c].max(0.0) - xb[c].max(0.0)) / d
                        } else if xa[c] > 0.0 {
                            1.0
                        } else {
                            0.0
                        };
                        for j in 0..n {
                            m[j * cols + c] *= r;
                        }
                    }
                }
                _ => {}
            }
        }
        m
    }

    /// Attributions of penultimate activation `a` against every baseline,
    /// averaged. Per-entry contributions are summed in sorted order so the
    /// result does not depend on background order.
    pub fn attribute(&self, a: &[f64], background: &BackgroundSet) -> Result<Attribution> {
        if a.len() != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                got: a.len(),
            });
        }
        if background.width() != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                got: background.width(),
            });
        }
        let (d, n, k) = (self.width, self.classes, background.len());
        let mut parts = vec![0.0f64; d * n * k];
        for (bi, b32) in background.activations.iter().enumerate() {
            let b: Vec<f64> = b32.iter().map(|&v| v as f64).collect();
            let m = self.multipliers(a, &b);
            for i in 0..d {
                let delta = a[i] - b[i];
                for j in 0..n {
                    parts[(i * n + j) * k + bi] = m[j * d + i] * delta;
                }
            }
        }
        let values = parts
            .chunks_mut(k)
            .map(|c| {
                c.sort_unstable_by(f64::total_cmp);
                c.iter().sum::<f64>() / k as f64
            })
            .collect();
        Ok(Attribution {
            neurons: d,
            classes: n,
            values,
        })
    }

    /// `mean_b output_j(b)` for every class.
    pub fn mean_background_output(&self, background: &BackgroundSet) -> Vec<f64> {
        let mut mean = vec![0.0; self.classes];
        for b in &background.activations {
            let b: Vec<f64> = b.iter().map(|&v| v as f64).collect();
            for (m, o) in mean.iter_mut().zip(self.outputs(&b)) {
                *m += o;
            }
        }
        mean.iter_mut().for_each(|m| *m /= background.len() as f64);
        mean
    }
}

/// Attributions for every sample of `x` (`[N, ...]` or a single input).
pub fn shap_values_head(
    net: &Network<f32>,
    x: &Tensor<f32>,
    background: &BackgroundSet,
    target: ExplainTarget,
) -> Result<Vec<Attribution>> {
    let explainer = Explainer::new(net, target)?;
    let acts = net.penultimate(x)?;
    (0..acts.batch_size())
        .map(|r| {
            let a: Vec<f64> = acts.row(r).iter().map(|&v| v as f64).collect();
            explainer.attribute(&a, background)
        })
        .collect()
}

impl From<&Attribution> for XaiSignature {
    fn from(a: &Attribution) -> Self {
        XaiSignature {
            neurons: a.neurons,
            classes: a.classes,
            values: a.values.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// Signatures for every sample of `x`.
pub fn xai_signatures(
    net: &Network<f32>,
    x: &Tensor<f32>,
    background: &BackgroundSet,
    target: ExplainTarget,
) -> Result<Vec<XaiSignature>> {
    Ok(shap_values_head(net, x, background, target)?
        .iter()
        .map(XaiSignature::from)
        .collect())
}

/// Closed-form attributions of a linear head `z = W a + bias` (`W` is
/// `n × d`, row-major): `mean_b W[j][i] · (a_i − b_i)`.
pub fn linear_shap_oracle(w: &[f64], bias: &[f64], a: &[f64], background: &[Vec<f64>]) -> Vec<f64> {
    let (n, d) = (bias.len(), a.len());
    assert_eq!(w.len(), n * d, "weight matrix must be n × d");
    let mut out = vec![0.0; d * n];
    for b in background {
        for i in 0..d {
            for j in 0..n {
                out[i * n + j] += w[j * d + i] * (a[i] - b[i]);
            }
        }
    }
    let k = background.len() as f64;
    out.iter_mut().for_each(|v| *v /= k);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(w: &[f64], o: usize, i: usize, b: &[f64]) -> Layer<f64> {
        Layer::dense(
            Tensor::new(vec![o, i], w.to_vec()).unwrap(),
            Tensor::new(vec![o], b.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn linear_hand_example() {
        let e = Explainer::from_head(vec![dense(&[1.0, 0.0, 0.0, 2.0], 2, 2, &[0.0, 0.0])], 2, ExplainTarget::Logits)
            .unwrap();
        let bg = BackgroundSet::new(vec![vec![1.0, 1.0]], 0, vec![0]).unwrap();
        let phi = e.attribute(&[3.0, 1.0], &bg).unwrap();
        assert_eq!(phi.values, vec![2.0, 0.0, 0.0, 0.0]);
        let zero = e.attribute(&[1.0, 1.0], &bg).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn relu_chain_is_complete() {
        let head = vec![
            dense(&[1.0, -2.0, 0.5, 1.5, -1.0, 0.3], 3, 2, &[0.1, -0.2, 0.0]),
            Layer::Relu,
            dense(&[1.0, 1.0, -1.0, 0.5, -0.5, 2.0], 2, 3, &[0.0, 0.3]),
        ];
        for target in [ExplainTarget::Logits, ExplainTarget::Probabilities] {
            let e = Explainer::from_head(head.clone(), 2, target).unwrap();
            let bg = BackgroundSet::new(vec![vec![0.2, 0.9], vec![-1.0, 0.4], vec![0.5, 0.5]], 0, vec![0, 1, 2]).unwrap();
            let a = [1.3, -0.7];
            let phi = e.attribute(&a, &bg).unwrap();
            let out = e.outputs(&a);
            let base = e.mean_background_output(&bg);
            for j in 0..2 {
                assert!((phi.class_total(j) - (out[j] - base[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flatten_round_trip() {
        let m = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        assert_eq!(unflatten(&flatten(&m), 2, 3).unwrap(), m);
        assert!(unflatten(&[1.0; 5], 2, 3).is_err());
    }

    #[test]
    fn width_mismatch_is_reported() {
        let e = Explainer::from_head(vec![dense(&[1.0, 0.0], 1, 2, &[0.0])], 2, ExplainTarget::Logits).unwrap();
        let bg = BackgroundSet::new(vec![vec![1.0, 1.0, 1.0]], 0, vec![0]).unwrap();
        assert!(matches!(
            e.attribute(&[0.0, 0.0], &bg),
            Err(Error::WidthMismatch { expected: 2, got: 3 })
        ));
    }
}
