//! Sequential networks over the fixed layer vocabulary, with full activation
//! capture and reverse-mode gradients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layer::{sigmoid, Layer, LayerKind};
use crate::tensor::{Real, Tensor};

/// Which probabilistic output closes the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputKind {
    Softmax,
    /// Single-unit binary output.
    Sigmoid,
}

/// Scalar objective whose input gradient is requested. Losses are summed over
/// the samples of a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossSpec {
    /// Cross-entropy of the output distribution against `class`.
    CrossEntropy { class: usize },
    /// The pre-activation logit of `class`.
    Logit { class: usize },
    /// `logit[other] - logit[target]`.
    LogitMargin { target: usize, other: usize },
}

/// A validated layer stack: consecutive shapes agree, exactly one output
/// activation (softmax or sigmoid) closes the stack, and it is fed by a dense
/// layer producing the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
    output_shapes: Vec<Vec<usize>>,
}

/// Per-layer outputs of one forward pass. All tensors carry a leading batch
/// axis.
#[derive(Clone, Debug)]
pub struct ActivationTrace<T> {
    pub input: Tensor<T>,
    pub outputs: Vec<Tensor<T>>,
    logits: usize,
}

impl<T: Real> ActivationTrace<T> {
    pub fn logits(&self) -> &Tensor<T> {
        &self.outputs[self.logits]
    }

    /// Output of the layer feeding the final dense layer (the network input
    /// when the final dense layer is also the first layer).
    pub fn penultimate(&self) -> &Tensor<T> {
        if self.logits == 0 {
            &self.input
        } else {
            &self.outputs[self.logits - 1]
        }
    }

    /// Final softmax / sigmoid output.
    pub fn output(&self) -> &Tensor<T> {
        self.outputs.last().expect("trace is never empty")
    }
}

/// Parameter gradients mirroring [`Network`] parameters layer by layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub per_layer: Vec<Vec<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Gradients {
            per_layer: net
                .layers
                .iter()
                .map(|l| l.params().iter().map(|p| Tensor::zeros(p.shape())).collect())
                .collect(),
        }
    }

    /// Gradients flattened in parameter declaration order.
    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.per_layer.iter().flatten()
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(Tensor::all_finite)
    }
}

impl<T: Real> Network<T> {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork {
                layer: 0,
                detail: "network has no layers".into(),
            });
        }
        let mut output_shapes = Vec::with_capacity(layers.len());
        let mut shape = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(&shape).map_err(|e| match e {
                Error::Shape { detail, .. } => Error::Shape {
                    layer: Some(i),
                    detail,
                },
                other => other,
            })?;
            output_shapes.push(shape.clone());
        }
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            let is_output = matches!(l.kind(), LayerKind::Softmax | LayerKind::Sigmoid);
            if is_output != (i == last) {
                return Err(Error::InvalidNetwork {
                    layer: i,
                    detail: "exactly one softmax/sigmoid is allowed and it must be the final layer"
                        .into(),
                });
            }
        }
        if last == 0 || layers[last - 1].kind() != LayerKind::Dense {
            return Err(Error::InvalidNetwork {
                layer: last,
                detail: "the output activation must be fed by a dense layer".into(),
            });
        }
        if layers[last].kind() == LayerKind::Sigmoid && output_shapes[last] != [1] {
            return Err(Error::InvalidNetwork {
                layer: last,
                detail: "sigmoid output must have a single unit".into(),
            });
        }
        Ok(Network {
            input_shape,
            layers,
            output_shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Per-sample output shape of every layer.
    pub fn output_shapes(&self) -> &[Vec<usize>] {
        &self.output_shapes
    }

    pub fn output_kind(&self) -> OutputKind {
        match self.layers.last().map(Layer::kind) {
            Some(LayerKind::Sigmoid) => OutputKind::Sigmoid,
            _ => OutputKind::Softmax,
        }
    }

    /// Index of the final dense layer, whose output is the logits.
    pub fn logits_index(&self) -> usize {
        self.layers.len() - 2
    }

    /// Width of the logits vector.
    pub fn num_logits(&self) -> usize {
        self.output_shapes[self.logits_index()][0]
    }

    /// Number of classes the output distribution ranges over.
    pub fn num_classes(&self) -> usize {
        match self.output_kind() {
            OutputKind::Softmax => self.num_logits(),
            OutputKind::Sigmoid => 2,
        }
    }

    /// Per-sample shape of the penultimate representation.
    pub fn penultimate_shape(&self) -> &[usize] {
        match self.logits_index() {
            0 => &self.input_shape,
            i => &self.output_shapes[i - 1],
        }
    }

    /// The layers between the penultimate representation and the logits.
    pub fn head(&self) -> &[Layer<T>] {
        let i = self.logits_index();
        &self.layers[i..=i]
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut())
    }

    pub fn num_params(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.iter().map(Layer::cast).collect(),
            output_shapes: self.output_shapes.clone(),
        }
    }

    /// Adds a leading batch axis when `x` is a single sample.
    pub fn batched(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.shape() == self.input_shape.as_slice() {
            let mut shape = Vec::with_capacity(x.shape().len() + 1);
            shape.push(1);
            shape.extend_from_slice(x.shape());
            return Ok(Tensor::from_parts(shape, x.data().to_vec()));
        }
        if x.shape().len() == self.input_shape.len() + 1 && x.shape()[1..] == self.input_shape[..] {
            return Ok(x.clone());
        }
        Err(Error::shape(
            Some(0),
            format!("network expects input {:?} (optionally batched), got {:?}", self.input_shape, x.shape()),
        ))
    }

    /// Runs every layer and keeps each output.
    pub fn forward_all(&self, x: &Tensor<T>) -> Result<ActivationTrace<T>> {
        let input = self.batched(x)?;
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let y = layer
                .forward(outputs.last().unwrap_or(&input))
                .map_err(|e| relabel(e, i))?;
            if !y.all_finite() {
                return Err(Error::NonFinite { layer: i });
            }
            outputs.push(y);
        }
        Ok(ActivationTrace {
            input,
            outputs,
            logits: self.logits_index(),
        })
    }

    /// Runs layers `0..=upto` without retaining intermediates.
    fn forward_to(&self, x: &Tensor<T>, upto: usize) -> Result<Tensor<T>> {
        let mut cur = self.batched(x)?;
        for (i, layer) in self.layers[..=upto].iter().enumerate() {
            cur = layer.forward(&cur).map_err(|e| relabel(e, i))?;
            if !cur.all_finite() {
                return Err(Error::NonFinite { layer: i });
            }
        }
        Ok(cur)
    }

    /// Final output distribution, batched.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_to(x, self.layers.len() - 1)
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_to(x, self.logits_index())
    }

    /// Penultimate representation, batched and flattened to `[N, d]`.
    pub fn penultimate(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let i = self.logits_index();
        let p = if i == 0 {
            self.batched(x)?
        } else {
            self.forward_to(x, i - 1)?
        };
        let n = p.batch_size();
        let w = p.row_len();
        p.reshape(vec![n, w])
    }

    /// Runs only the head and output activation on penultimate
    /// representations `[N, d]`, returning the output distribution.
    pub fn forward_from_penultimate(&self, p: &Tensor<T>) -> Result<Tensor<T>> {
        let mut shape = Vec::with_capacity(self.penultimate_shape().len() + 1);
        shape.push(p.batch_size());
        shape.extend_from_slice(self.penultimate_shape());
        let mut cur = p.clone().reshape(shape)?;
        let start = self.logits_index();
        for (i, layer) in self.layers.iter().enumerate().skip(start) {
            cur = layer.forward(&cur).map_err(|e| relabel(e, i))?;
        }
        Ok(cur)
    }

    fn check_class(&self, class: usize) -> Result<()> {
        let classes = match self.output_kind() {
            OutputKind::Softmax => self.num_logits(),
            OutputKind::Sigmoid => 2,
        };
        if class >= classes {
            return Err(Error::ClassIndex { index: class, classes });
        }
        Ok(())
    }

    fn check_logit(&self, index: usize) -> Result<()> {
        if index >= self.num_logits() {
            return Err(Error::ClassIndex {
                index,
                classes: self.num_logits(),
            });
        }
        Ok(())
    }

    fn validate_loss(&self, loss: LossSpec) -> Result<()> {
        match loss {
            LossSpec::CrossEntropy { class } => self.check_class(class),
            LossSpec::Logit { class } => self.check_logit(class),
            LossSpec::LogitMargin { target, other } => {
                self.check_logit(target)?;
                self.check_logit(other)
            }
        }
    }

    /// Loss value per sample and dL/dlogits for `loss` evaluated on `trace`.
    fn loss_seed(&self, trace: &ActivationTrace<T>, loss: LossSpec) -> (Vec<T>, Tensor<T>) {
        let z = trace.logits();
        let p = trace.output();
        let (n, w) = (z.batch_size(), z.row_len());
        let mut seed = vec![T::zero(); n * w];
        let mut values = Vec::with_capacity(n);
        for s in 0..n {
            let zr = z.row(s);
            let g = &mut seed[s * w..(s + 1) * w];
            match loss {
                LossSpec::CrossEntropy { class } => {
                    let y = T::of(class as f64);
                    values.push(self.sample_ce(zr, y, class));
                    match self.output_kind() {
                        OutputKind::Softmax => {
                            g.copy_from_slice(p.row(s));
                            g[class] -= T::one();
                        }
                        OutputKind::Sigmoid => g[0] = p.row(s)[0] - y,
                    }
                }
                LossSpec::Logit { class } => {
                    values.push(zr[class]);
                    g[class] = T::one();
                }
                LossSpec::LogitMargin { target, other } => {
                    values.push(zr[other] - zr[target]);
                    g[other] += T::one();
                    g[target] -= T::one();
                }
            }
        }
        (values, Tensor::from_parts(vec![n, w], seed))
    }

    /// Cross-entropy from logits; `y` is the 0/1 target for sigmoid outputs.
    fn sample_ce(&self, z: &[T], y: T, class: usize) -> T {
        match self.output_kind() {
            OutputKind::Softmax => {
                let max = z.iter().fold(T::neg_infinity(), |m, &v| if v > m { v } else { m });
                let lse = max + z.iter().fold(T::zero(), |a, &v| a + (v - max).exp()).ln();
                lse - z[class]
            }
            OutputKind::Sigmoid => {
                let z = z[0];
                let relu = if z > T::zero() { z } else { T::zero() };
                relu - z * y + (T::one() + (-z.abs()).exp()).ln()
            }
        }
    }

    /// Backpropagates `seed` (dL/dlogits) through layers `0..=logits`.
    fn backprop(
        &self,
        trace: &ActivationTrace<T>,
        seed: Tensor<T>,
        want_input: bool,
        mut grads: Option<&mut Gradients<T>>,
    ) -> Result<Option<Tensor<T>>> {
        let mut grad = seed;
        for i in (0..=self.logits_index()).rev() {
            let layer = &self.layers[i];
            let input = if i == 0 { &trace.input } else { &trace.outputs[i - 1] };
            let need_input = i > 0 || want_input;
            let pg = match grads.as_deref_mut() {
                Some(g) if !g.per_layer[i].is_empty() => Some(g.per_layer[i].as_mut_slice()),
                _ => None,
            };
            match layer
                .backward(input, &trace.outputs[i], &grad, need_input, pg)
                .map_err(|e| relabel(e, i))?
            {
                Some(g) => grad = g,
                None => return Ok(None),
            }
        }
        Ok(Some(grad))
    }

    /// Summed loss over the batch (a single value for an unbatched `x`).
    pub fn loss(&self, x: &Tensor<T>, loss: LossSpec) -> Result<T> {
        self.validate_loss(loss)?;
        let trace = self.forward_all(x)?;
        let (values, _) = self.loss_seed(&trace, loss);
        Ok(values.into_iter().fold(T::zero(), |a, v| a + v))
    }

    /// Gradient of `loss` with respect to the input; same shape as `x`.
    pub fn input_gradient(&self, x: &Tensor<T>, loss: LossSpec) -> Result<Tensor<T>> {
        self.validate_loss(loss)?;
        let trace = self.forward_all(x)?;
        let (_, seed) = self.loss_seed(&trace, loss);
        let g = self
            .backprop(&trace, seed, true, None)?
            .expect("input gradient requested");
        g.reshape(x.shape().to_vec())
    }

    /// Like [`Network::input_gradient`], but also returns the trace the
    /// gradient was computed from.
    pub fn input_gradient_with_trace(
        &self,
        x: &Tensor<T>,
        loss: LossSpec,
    ) -> Result<(Tensor<T>, ActivationTrace<T>)> {
        self.validate_loss(loss)?;
        let trace = self.forward_all(x)?;
        let (_, seed) = self.loss_seed(&trace, loss);
        let g = self
            .backprop(&trace, seed, true, None)?
            .expect("input gradient requested");
        Ok((g.reshape(x.shape().to_vec())?, trace))
    }

    /// Input gradient of `loss` reusing an existing forward trace; the result
    /// is batched like `trace.input`.
    pub fn input_gradient_from_trace(&self, trace: &ActivationTrace<T>, loss: LossSpec) -> Result<Tensor<T>> {
        self.validate_loss(loss)?;
        let (_, seed) = self.loss_seed(trace, loss);
        Ok(self
            .backprop(trace, seed, true, None)?
            .expect("input gradient requested"))
    }

    fn check_labels(&self,batch: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
        let batch = self.batched(batch)?;
        if labels.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if batch.batch_size() != labels.len() {
            return Err(Error::shape(
                None,
                format!("{} samples but {} labels", batch.batch_size(), labels.len()),
            ));
        }
        for &c in labels {
            self.check_class(c)?;
        }
        Ok(batch)
    }

    /// Mean cross-entropy over a labelled batch.
    pub fn mean_loss(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<T> {
        let batch = self.check_labels(batch, labels)?;
        let z = self.logits(&batch)?;
        let total = labels.iter().enumerate().fold(T::zero(), |acc, (s, &c)| {
            acc + self.sample_ce(z.row(s), T::of(c as f64), c)
        });
        Ok(total / T::of(labels.len() as f64))
    }

    /// Gradients of the mean cross-entropy with respect to every parameter,
    /// together with the loss value.
    pub fn param_gradients(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<(Gradients<T>, T)> {
        let batch = self.check_labels(batch, labels)?;
        let trace = self.forward_all(&batch)?;
        let n = labels.len();
        let inv = T::one() / T::of(n as f64);
        let z = trace.logits();
        let p = trace.output();
        let w = z.row_len();
        let mut seed = vec![T::zero(); n * w];
        let mut total = T::zero();
        for (s, &c) in labels.iter().enumerate() {
            let y = T::of(c as f64);
            total += self.sample_ce(z.row(s), y, c);
            let g = &mut seed[s * w..(s + 1) * w];
            match self.output_kind() {
                OutputKind::Softmax => {
                    for (gi, &pi) in g.iter_mut().zip(p.row(s)) {
                        *gi = pi * inv;
                    }
                    g[c] -= inv;
                }
                OutputKind::Sigmoid => g[0] = (p.row(s)[0] - y) * inv,
            }
        }
        let mut grads = Gradients::zeros_like(self);
        self.backprop(&trace, Tensor::from_parts(vec![n, w], seed), false, Some(&mut grads))?;
        Ok((grads, total * inv))
    }
}

fn relabel(e: Error, layer: usize) -> Error {
    match e {
        Error::Shape { detail, .. } => Error::Shape {
            layer: Some(layer),
            detail,
        },
        other => other,
    }
}

/// Sigmoid probability for a logit; exposed for detectors that score from logits.
pub fn logistic<T: Real>(z: T) -> T {
    sigmoid(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::Padding;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn logistic_head() -> Network<f64> {
        // logits (0, 2*x0 - x1)
        let w = t(&[2, 2], &[0.0, 0.0, 2.0, -1.0]);
        Network::new(
            vec![2],
            vec![Layer::dense(w, t(&[2], &[0.0, 0.0])).unwrap(), Layer::Softmax],
        )
        .unwrap()
    }

    #[test]
    fn logistic_head_gradient() {
        let g = logistic_head()
            .input_gradient(&t(&[2], &[0.0, 0.0]), LossSpec::CrossEntropy { class: 0 })
            .unwrap();
        assert!((g.data()[0] - 1.0).abs() < 1e-12);
        assert!((g.data()[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_network_has_zero_gradient() {
        let net = Network::new(
            vec![3],
            vec![Layer::dense(Tensor::zeros(&[4, 3]), t(&[4], &[0.1, 0.2, 0.3, 0.4])).unwrap(), Layer::Softmax],
        )
        .unwrap();
        let g = net
            .input_gradient(&t(&[3], &[0.3, -0.2, 0.9]), LossSpec::CrossEntropy { class: 2 })
            .unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_class_index() {
        let err = logistic_head()
            .input_gradient(&t(&[2], &[0.0, 0.0]), LossSpec::Logit { class: 5 })
            .unwrap_err();
        assert!(matches!(err, Error::ClassIndex { index: 5, classes: 2 }));
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let err = Network::new(
            vec![3],
            vec![
                Layer::dense(Tensor::<f64>::zeros(&[4, 3]), Tensor::zeros(&[4])).unwrap(),
                Layer::Relu,
                Layer::dense(Tensor::zeros(&[2, 5]), Tensor::zeros(&[2])).unwrap(),
                Layer::Softmax,
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Shape { layer: Some(2), .. }), "{err:?}");
    }

    #[test]
    fn softmax_must_be_last_and_unique() {
        let err = Network::new(
            vec![2],
            vec![
                Layer::dense(Tensor::<f64>::zeros(&[2, 2]), Tensor::zeros(&[2])).unwrap(),
                Layer::Softmax,
                Layer::dense(Tensor::zeros(&[2, 2]), Tensor::zeros(&[2])).unwrap(),
                Layer::Softmax,
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidNetwork { layer: 1, .. }));
        assert!(Network::new(
            vec![2],
            vec![Layer::dense(Tensor::<f64>::zeros(&[2, 2]), Tensor::zeros(&[2])).unwrap()]
        )
        .is_err());
    }

    #[test]
    fn zero_weight_softmax_bias_gradients_sum_to_zero() {
        let net = Network::new(
            vec![2],
            vec![Layer::dense(Tensor::zeros(&[3, 2]), Tensor::zeros(&[3])).unwrap(), Layer::Softmax],
        )
        .unwrap();
        let batch = t(&[3, 2], &[0.5, 1.0, -1.0, 2.0, 0.0, 0.3]);
        let (g, loss) = net.param_gradients(&batch, &[0, 1, 2]).unwrap();
        let bias = &g.per_layer[0][1];
        assert!(bias.data().iter().sum::<f64>().abs() < 1e-12);
        // balanced labels on uniform outputs: every bias gradient vanishes
        assert!(bias.data().iter().all(|v| v.abs() < 1e-12));
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_sample_matches_single() {
        let net = Network::new(
            vec![2],
            vec![
                Layer::dense(t(&[3, 2], &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6]), t(&[3], &[0.0, 0.1, -0.1])).unwrap(),
                Layer::Relu,
                Layer::dense(t(&[2, 3], &[0.7, -0.1, 0.2, 0.3, 0.5, -0.4]), t(&[2], &[0.0, 0.0])).unwrap(),
                Layer::Softmax,
            ],
        )
        .unwrap();
        let one = t(&[1, 2], &[0.4, 0.9]);
        let two = t(&[2, 2], &[0.4, 0.9, 0.4, 0.9]);
        let (g1, l1) = net.param_gradients(&one, &[1]).unwrap();
        let (g2, l2) = net.param_gradients(&two, &[1, 1]).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (a, b) in g1.iter().zip(g2.iter()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let net = logistic_head();
        let x = t(&[1, 2], &[0.0, 0.0]);
        assert_eq!(net.param_gradients(&x, &[]).unwrap_err(), Error::EmptyBatch);
    }

    #[test]
    fn batch_forward_matches_per_sample() {
        let net = Network::new(
            vec![1, 4, 4],
            vec![
                Layer::conv2d(
                    t(&[2, 1, 3, 3], &[0.1, -0.2, 0.3, 0.0, 0.5, -0.1, 0.2, 0.2, -0.3, 0.4, 0.1, -0.1, 0.2, -0.5, 0.3, 0.1, 0.0, 0.2]),
                    t(&[2], &[0.01, -0.02]),
                    1,
                    Padding::Same,
                )
                .unwrap(),
                Layer::Relu,
                Layer::MaxPool2d { size: 2, stride: 2 },
                Layer::Flatten,
                Layer::dense(Tensor::from_f64(vec![3, 8], &(0..24).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>()).unwrap(), t(&[3], &[0.0, 0.1, 0.2])).unwrap(),
                Layer::Softmax,
            ],
        )
        .unwrap();
        let xs: Vec<f64> = (0..32).map(|i| ((i * 7 % 11) as f64) / 11.0).collect();
        let batch = t(&[2, 1, 4, 4], &xs);
        let all = net.forward_all(&batch).unwrap();
        for s in 0..2 {
            let single = net.forward_all(&t(&[1, 4, 4], &xs[s * 16..(s + 1) * 16])).unwrap();
            for (a, b) in all.outputs.iter().zip(&single.outputs) {
                assert_eq!(a.row(s), b.row(0));
            }
            let sum: f64 = all.output().row(s).iter().sum();
            assert!((sum - 1.0).abs() < 1e-5);
        }
        assert_eq!(all.penultimate().shape(), &[2, 8]);
    }
}
