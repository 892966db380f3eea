//! The target classifier: architecture presets, training, prediction and
//! penultimate-layer access.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::layer::{Layer, Padding};
use crate::network::Network;
use crate::optim::{Adam, AdamConfig};
use crate::rng::stream_rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum Architecture {
    /// conv(32, 3x3) → relu → conv(64, 3x3) → relu → maxpool(2x2) → flatten
    /// → dense(128) → relu → dense(n) → softmax. Penultimate width 128.
    MnistCnn,
    /// flatten → dense(hidden) → relu → dense(n) → softmax.
    SmallMlp { hidden: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub architecture: Architecture,
    pub num_classes: usize,
    pub input_shape: Vec<usize>,
    pub training: TrainingParams,
}

impl ClassifierSpec {
    /// The MNIST CNN with the desk-scale training recipe (5 epochs of Adam).
    pub fn mnist_cnn(seed: u64) -> Self {
        ClassifierSpec {
            architecture: Architecture::MnistCnn,
            num_classes: 10,
            input_shape: vec![1, 28, 28],
            training: TrainingParams {
                epochs: 5,
                batch_size: 64,
                learning_rate: 1e-3,
                seed,
            },
        }
    }

    pub fn penultimate_width(&self) -> usize {
        match self.architecture {
            Architecture::MnistCnn => 128,
            Architecture::SmallMlp { hidden } => hidden,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub network: Network<f32>,
    pub spec: ClassifierSpec,
    pub metrics: ModelMetrics,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f32>,
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn glorot<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<f32> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit) as f32).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

fn dense<R: Rng>(rng: &mut R, inputs: usize, outputs: usize) -> Layer<f32> {
    Layer::Dense {
        weight: glorot(rng, &[outputs, inputs], inputs, outputs),
        bias: Tensor::zeros(&[outputs]),
    }
}

fn conv<R: Rng>(rng: &mut R, in_ch: usize, out_ch: usize, k: usize) -> Layer<f32> {
    Layer::Conv2d {
        weight: glorot(rng, &[out_ch, in_ch, k, k], in_ch * k * k, out_ch * k * k),
        bias: Tensor::zeros(&[out_ch]),
        stride: 1,
        padding: Padding::Valid,
    }
}

/// Freshly initialized (Glorot-uniform weights, zero biases) network for `spec`.
pub fn build_network(spec: &ClassifierSpec) -> Result<Network<f32>> {
    let mut rng = stream_rng(spec.training.seed, "classifier-init", 0);
    let n = spec.num_classes;
    if n < 2 {
        return Err(Error::InvalidArgument("a classifier needs at least two classes".into()));
    }
    let layers = match spec.architecture {
        Architecture::MnistCnn => {
            let s = &spec.input_shape;
            if s.len() != 3 || s[1] < 6 || s[2] < 6 {
                return Err(Error::shape(
                    None,
                    alloc::format!("mnist_cnn expects (C, H, W) input of at least 6x6, got {s:?}"),
                ));
            }
            let flat = 64 * ((s[1] - 4) / 2) * ((s[2] - 4) / 2);
            vec![
                conv(&mut rng, s[0], 32, 3),
                Layer::Relu,
                conv(&mut rng, 32, 64, 3),
                Layer::Relu,
                Layer::MaxPool2d { size: 2, stride: 2 },
                Layer::Flatten,
                dense(&mut rng, flat, 128),
                Layer::Relu,
                dense(&mut rng, 128, n),
                Layer::Softmax,
            ]
        }
        Architecture::SmallMlp { hidden } => {
            let flat = spec.input_shape.iter().product();
            vec![
                Layer::Flatten,
                dense(&mut rng, flat, hidden),
                Layer::Relu,
                dense(&mut rng, hidden, n),
                Layer::Softmax,
            ]
        }
    };
    Network::new(spec.input_shape.clone(), layers)
}

/// Trains `spec` on `train` with mini-batch Adam. Deterministic given the
/// spec's seed. `eval` (if given) is scored for the recorded test accuracy.
pub fn train_classifier(
    spec: &ClassifierSpec,
    train: &LabeledDataset,
    eval: Option<&LabeledDataset>,
) -> Result<TrainedModel> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.image_shape != spec.input_shape {
        return Err(Error::shape(
            None,
            alloc::format!(
                "dataset images {:?} do not match classifier input {:?}",
                train.image_shape, spec.input_shape
            ),
        ));
    }
    if train.num_classes > spec.num_classes {
        return Err(Error::ClassIndex {
            index: train.num_classes - 1,
            classes: spec.num_classes,
        });
    }
    let tp = &spec.training;
    if tp.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut net = build_network(spec)?;
    let mut opt = Adam::new(
        AdamConfig {
            learning_rate: tp.learning_rate,
            ..AdamConfig::default()
        },
        &net,
    );
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut final_loss = f64::NAN;
    for epoch in 0..tp.epochs {
        order.shuffle(&mut stream_rng(tp.seed, "classifier-shuffle", epoch as u64));
        let mut sum = 0.0;
        for chunk in order.chunks(tp.batch_size) {
            let batch = train.batch(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train.label(i)).collect();
            let (grads, loss) = net.param_gradients(&batch, &labels)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Diverged { epoch });
            }
            opt.step(&mut net, &grads);
            sum += loss as f64 * chunk.len() as f64;
        }
        final_loss = sum / train.len() as f64;
        if !final_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
    }
    let train_accuracy = accuracy(&net, train)?;
    let test_accuracy = eval.map(|ds| accuracy(&net, ds)).transpose()?;
    Ok(TrainedModel {
        network: net,
        spec: spec.clone(),
        metrics: ModelMetrics {
            train_accuracy,
            test_accuracy,
            final_loss,
        },
        seed: tp.seed,
    })
}

const EVAL_BATCH: usize = 256;

/// Fraction of samples whose predicted class equals the label.
pub fn accuracy(net: &Network<f32>, ds: &LabeledDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let out = net.forward(&ds.batch(chunk))?;
        for (r, &i) in chunk.iter().enumerate() {
            if argmax(out.row(r)) == ds.label(i) {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

impl TrainedModel {
    /// Class and output distribution for one sample.
    pub fn predict(&self, x: &Tensor<f32>) -> Result<Prediction> {
        if x.shape() != self.network.input_shape() {
            return Err(Error::shape(
                Some(0),
                alloc::format!(
                    "expected a single input of shape {:?}, got {:?}",
                    self.network.input_shape(),
                    x.shape()
                ),
            ));
        }
        let mut all = self.predict_batch(x)?;
        Ok(all.pop().expect("one prediction"))
    }

    /// Predictions for every sample of a (possibly unbatched) input.
    pub fn predict_batch(&self, x: &Tensor<f32>) -> Result<Vec<Prediction>> {
        let out = self.network.forward(x)?;
        Ok((0..out.batch_size())
            .map(|r| {
                let p = out.row(r);
                Prediction {
                    class: argmax(p),
                    probabilities: p.to_vec(),
                }
            })
            .collect())
    }

    /// Penultimate activations `[N, d]`.
    pub fn penultimate_activations(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.network.penultimate(x)
    }

    pub fn num_classes(&self) -> usize {
        self.network.num_classes()
    }

    pub fn penultimate_width(&self) -> usize {
        self.network.penultimate_shape().iter().product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn mnist_cnn_shapes() {
        let net = build_network(&ClassifierSpec::mnist_cnn(1)).unwrap();
        assert_eq!(net.penultimate_shape(), &[128]);
        assert_eq!(net.num_classes(), 10);
        assert_eq!(net.output_shapes()[5], vec![9216]);
    }
}
