//! The fixed layer vocabulary: dense, conv2d, maxpool2d, relu, flatten,
//! softmax and sigmoid. Every layer works on batched tensors whose leading
//! axis is the sample index; image tensors are `[N, C, H, W]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemm::{matmul, MatRef};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    /// Output spatial size `ceil(in / stride)`; odd padding goes to the
    /// bottom/right edge.
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv2d,
    MaxPool2d,
    Relu,
    Flatten,
    Softmax,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    /// `y = x W^T + b` with `weight` shaped `(out, in)`.
    Dense { weight: Tensor<T>, bias: Tensor<T> },
    /// `weight` shaped `(out_ch, in_ch, kh, kw)`.
    Conv2d {
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        padding: Padding,
    },
    MaxPool2d { size: usize, stride: usize },
    Relu,
    Flatten,
    Softmax,
    Sigmoid,
}

/// Parameter-free description of a layer, used by model containers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerDescriptor {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: Padding,
    },
    MaxPool2d {
        size: usize,
        stride: usize,
    },
    Relu,
    Flatten,
    Softmax,
    Sigmoid,
}

impl LayerDescriptor {
    /// Shapes of the parameter tensors, in declaration order (weight, bias).
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerDescriptor::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            LayerDescriptor::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![out_channels, in_channels, kernel[0], kernel[1]],
                vec![out_channels],
            ],
            _ => Vec::new(),
        }
    }
}

impl<T: Real> Layer<T> {
    pub fn dense(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape(
                None,
                format!(
                    "dense weight {:?} / bias {:?} must be (out, in) / (out)",
                    weight.shape(),
                    bias.shape()
                ),
            ));
        }
        Ok(Layer::Dense { weight, bias })
    }

    pub fn conv2d(weight: Tensor<T>, bias: Tensor<T>, stride: usize, padding: Padding) -> Result<Self> {
        if weight.shape().len() != 4 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape(
                None,
                format!(
                    "conv2d weight {:?} / bias {:?} must be (out_ch, in_ch, kh, kw) / (out_ch)",
                    weight.shape(),
                    bias.shape()
                ),
            ));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
        }
        Ok(Layer::Conv2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense { .. } => LayerKind::Dense,
            Layer::Conv2d { .. } => LayerKind::Conv2d,
            Layer::MaxPool2d { .. } => LayerKind::MaxPool2d,
            Layer::Relu => LayerKind::Relu,
            Layer::Flatten => LayerKind::Flatten,
            Layer::Softmax => LayerKind::Softmax,
            Layer::Sigmoid => LayerKind::Sigmoid,
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => vec![weight, bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => vec![weight, bias],
            _ => Vec::new(),
        }
    }

    pub fn descriptor(&self) -> LayerDescriptor {
        match self {
            Layer::Dense { weight, .. } => LayerDescriptor::Dense {
                inputs: weight.shape()[1],
                outputs: weight.shape()[0],
            },
            Layer::Conv2d {
                weight,
                stride,
                padding,
                ..
            } => {
                let s = weight.shape();
                LayerDescriptor::Conv2d {
                    in_channels: s[1],
                    out_channels: s[0],
                    kernel: [s[2], s[3]],
                    stride: *stride,
                    padding: *padding,
                }
            }
            Layer::MaxPool2d { size, stride } => LayerDescriptor::MaxPool2d {
                size: *size,
                stride: *stride,
            },
            Layer::Relu => LayerDescriptor::Relu,
            Layer::Flatten => LayerDescriptor::Flatten,
            Layer::Softmax => LayerDescriptor::Softmax,
            Layer::Sigmoid => LayerDescriptor::Sigmoid,
        }
    }

    /// Rebuilds a layer from its descriptor and parameters (declaration order).
    pub fn from_descriptor(desc: &LayerDescriptor, mut params: Vec<Tensor<T>>) -> Result<Self> {
        let expected = desc.param_shapes();
        if params.len() != expected.len()
            || params.iter().zip(&expected).any(|(p, s)| p.shape() != s.as_slice())
        {
            return Err(Error::shape(
                None,
                format!("parameters do not match descriptor {desc:?}"),
            ));
        }
        Ok(match *desc {
            LayerDescriptor::Dense { .. } => {
                let bias = params.pop().unwrap();
                let weight = params.pop().unwrap();
                Layer::Dense { weight, bias }
            }
            LayerDescriptor::Conv2d { stride, padding, .. } => {
                let bias = params.pop().unwrap();
                let weight = params.pop().unwrap();
                Layer::conv2d(weight, bias, stride, padding)?
            }
            LayerDescriptor::MaxPool2d { size, stride } => {
                if size == 0 || stride == 0 {
                    return Err(Error::InvalidArgument("maxpool size and stride must be >= 1".into()));
                }
                Layer::MaxPool2d { size, stride }
            }
            LayerDescriptor::Relu => Layer::Relu,
            LayerDescriptor::Flatten => Layer::Flatten,
            LayerDescriptor::Softmax => Layer::Softmax,
            LayerDescriptor::Sigmoid => Layer::Sigmoid,
        })
    }

    pub fn cast<U: Real>(&self) -> Layer<U> {
        match self {
            Layer::Dense { weight, bias } => Layer::Dense {
                weight: weight.cast(),
                bias: bias.cast(),
            },
            Layer::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => Layer::Conv2d {
                weight: weight.cast(),
                bias: bias.cast(),
                stride: *stride,
                padding: *padding,
            },
            Layer::MaxPool2d { size, stride } => Layer::MaxPool2d {
                size: *size,
                stride: *stride,
            },
            Layer::Relu => Layer::Relu,
            Layer::Flatten => Layer::Flatten,
            Layer::Softmax => Layer::Softmax,
            Layer::Sigmoid => Layer::Sigmoid,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense { weight, .. } => {
                let inputs = weight.shape()[1];
                if input != [inputs] {
                    return Err(Error::shape(
                        None,
                        format!("dense expects input ({inputs}), got {input:?}"),
                    ));
                }
                Ok(vec![weight.shape()[0]])
            }
            Layer::Conv2d {
                weight,
                stride,
                padding,
                ..
            } => {
                let g = ConvGeom::new(input, weight.shape(), *stride, *padding)?;
                Ok(vec![g.out_ch, g.oh, g.ow])
            }
            Layer::MaxPool2d { size, stride } => {
                let g = PoolGeom::new(input, *size, *stride)?;
                Ok(vec![g.c, g.oh, g.ow])
            }
            Layer::Relu | Layer::Sigmoid => Ok(input.to_vec()),
            Layer::Softmax => {
                if input.len() != 1 {
                    return Err(Error::shape(
                        None,
                        format!("softmax expects a flat input, got {input:?}"),
                    ));
                }
                Ok(input.to_vec())
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Forward pass over a batch.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = x.batch_size();
        let out_sample = self.output_shape(&x.shape()[1..])?;
        let mut out_shape = Vec::with_capacity(out_sample.len() + 1);
        out_shape.push(n);
        out_shape.extend_from_slice(&out_sample);

        let data = match self {
            Layer::Dense { weight, bias } => {
                let (outs, ins) = (weight.shape()[0], weight.shape()[1]);
                let mut y = Vec::with_capacity(n * outs);
                for _ in 0..n {
                    y.extend_from_slice(bias.data());
                }
                matmul(
                    MatRef::row_major(x.data(), n, ins),
                    MatRef::row_major(weight.data(), outs, ins).t(),
                    &mut y,
                    T::one(),
                );
                y
            }
            Layer::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => {
                let g = ConvGeom::new(&x.shape()[1..], weight.shape(), *stride, *padding)?;
                conv_forward(x.data(), n, &g, weight.data(), bias.data())
            }
            Layer::MaxPool2d { size, stride } => {
                let g = PoolGeom::new(&x.shape()[1..], *size, *stride)?;
                let mut y = vec![T::zero(); n * g.out_len()];
                for s in 0..n {
                    let xs = &x.data()[s * g.in_len()..(s + 1) * g.in_len()];
                    let ys = &mut y[s * g.out_len()..(s + 1) * g.out_len()];
                    for (o, v) in ys.iter_mut().enumerate() {
                        *v = xs[g.argmax(xs, o)];
                    }
                }
                y
            }
            Layer::Relu => x
                .data()
                .iter()
                .map(|&v| if v > T::zero() { v } else { T::zero() })
                .collect(),
            Layer::Flatten => x.data().to_vec(),
            Layer::Softmax => {
                let w = x.row_len();
                let mut y = x.data().to_vec();
                for row in y.chunks_mut(w) {
                    softmax_in_place(row);
                }
                y
            }
            Layer::Sigmoid => x.data().iter().map(|&v| sigmoid(v)).collect(),
        };
        Ok(Tensor::from_parts(out_shape, data))
    }

    /// Backward pass. `grad_out` is dL/d(output). Parameter gradients, when
    /// requested, are accumulated into `param_grads` (same order as
    /// [`Layer::params`]). Returns dL/d(input) when `need_input` is set.
    pub(crate) fn backward(
        &self,
        input: &Tensor<T>,
        output: &Tensor<T>,
        grad_out: &Tensor<T>,
        need_input: bool,
        param_grads: Option<&mut [Tensor<T>]>,
    ) -> Result<Option<Tensor<T>>> {
        let n = input.batch_size();
        let grad_in = match self {
            Layer::Dense { weight, .. } => {
                let (outs, ins) = (weight.shape()[0], weight.shape()[1]);
                if let Some(pg) = param_grads {
                    let (gw, gb) = pg.split_at_mut(1);
                    matmul(
                        MatRef::row_major(grad_out.data(), n, outs).t(),
                        MatRef::row_major(input.data(), n, ins),
                        gw[0].data_mut(),
                        T::one(),
                    );
                    let gb = gb[0].data_mut();
                    for row in grad_out.data().chunks(outs) {
                        for (b, g) in gb.iter_mut().zip(row) {
                            *b += *g;
                        }
                    }
                }
                if need_input {
                    let mut gi = vec![T::zero(); n * ins];
                    matmul(
                        MatRef::row_major(grad_out.data(), n, outs),
                        MatRef::row_major(weight.data(), outs, ins),
                        &mut gi,
                        T::zero(),
                    );
                    Some(gi)
                } else {
                    None
                }
            }
            Layer::Conv2d {
                weight,
                stride,
                padding,
                ..
            } => {
                let g = ConvGeom::new(&input.shape()[1..], weight.shape(), *stride, *padding)?;
                conv_backward(input.data(), n, &g, weight.data(), grad_out.data(), need_input, param_grads)
            }
            Layer::MaxPool2d { size, stride } => {
                if need_input {
                    let g = PoolGeom::new(&input.shape()[1..], *size, *stride)?;
                    let mut gi = vec![T::zero(); input.len()];
                    for s in 0..n {
                        let xs = &input.data()[s * g.in_len()..(s + 1) * g.in_len()];
                        let go = &grad_out.data()[s * g.out_len()..(s + 1) * g.out_len()];
                        let gs = &mut gi[s * g.in_len()..(s + 1) * g.in_len()];
                        for (o, &d) in go.iter().enumerate() {
                            gs[g.argmax(xs, o)] += d;
                        }
                    }
                    Some(gi)
                } else {
                    None
                }
            }
            Layer::Relu => need_input.then(|| {
                input
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
                    .collect()
            }),
            Layer::Flatten => need_input.then(|| grad_out.data().to_vec()),
            Layer::Softmax => need_input.then(|| {
                let w = output.row_len();
                let mut gi = Vec::with_capacity(output.len());
                for (p, g) in output.data().chunks(w).zip(grad_out.data().chunks(w)) {
                    let dot = p.iter().zip(g).fold(T::zero(), |acc, (&pi, &gi)| acc + pi * gi);
                    gi.extend(p.iter().zip(g).map(|(&pi, &gi)| pi * (gi - dot)));
                }
                gi
            }),
            Layer::Sigmoid => need_input.then(|| {
                output
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&p, &g)| g * p * (T::one() - p))
                    .collect()
            }),
        };
        Ok(grad_in.map(|d| Tensor::from_parts(input.shape().to_vec(), d)))
    }
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| if v > m { v } else { m });
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Geometry of a 2-D convolution over one `[C, H, W]` sample.
#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    out_ch: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_t: usize,
    pad_l: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new(input: &[usize], weight: &[usize], stride: usize, padding: Padding) -> Result<Self> {
        if input.len() != 3 || input[0] != weight[1] {
            return Err(Error::shape(
                None,
                format!(
                    "conv2d with weight {weight:?} expects input ({}, H, W), got {input:?}",
                    weight[1]
                ),
            ));
        }
        let (c, h, w) = (input[0], input[1], input[2]);
        let (kh, kw) = (weight[2], weight[3]);
        let (oh, pad_t) = out_dim(h, kh, stride, padding)?;
        let (ow, pad_l) = out_dim(w, kw, stride, padding)?;
        Ok(ConvGeom {
            c,
            h,
            w,
            out_ch: weight[0],
            kh,
            kw,
            stride,
            pad_t,
            pad_l,
            oh,
            ow,
        })
    }

    fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }
    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }
    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds one sample into `[C*kh*kw, oh*ow]`.
    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let p = self.positions();
        for c in 0..self.c {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = &mut cols[((c * self.kh + i) * self.kw + j) * p..][..p];
                    for oy in 0..self.oh {
                        let y = (oy * self.stride + i) as isize - self.pad_t as isize;
                        let dst = &mut row[oy * self.ow..(oy + 1) * self.ow];
                        if y < 0 || y as usize >= self.h {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &x[(c * self.h + y as usize) * self.w..][..self.w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let xx = (ox * self.stride + j) as isize - self.pad_l as isize;
                            *d = if xx < 0 || xx as usize >= self.w {
                                T::zero()
                            } else {
                                src[xx as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Folds `[C*kh*kw, oh*ow]` column gradients back onto one sample.
    fn col2im<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let p = self.positions();
        for c in 0..self.c {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = &cols[((c * self.kh + i) * self.kw + j) * p..][..p];
                    for oy in 0..self.oh {
                        let y = (oy * self.stride + i) as isize - self.pad_t as isize;
                        if y < 0 || y as usize >= self.h {
                            continue;
                        }
                        let dst = &mut dx[(c * self.h + y as usize) * self.w..][..self.w];
                        for (ox, &g) in row[oy * self.ow..(oy + 1) * self.ow].iter().enumerate() {
                            let xx = (ox * self.stride + j) as isize - self.pad_l as isize;
                            if xx >= 0 && (xx as usize) < self.w {
                                dst[xx as usize] += g;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn out_dim(size: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if size < k {
                return Err(Error::shape(
                    None,
                    format!("kernel {k} larger than input extent {size}"),
                ));
            }
            Ok(((size - k) / stride + 1, 0))
        }
        Padding::Same => {
            let out = size.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(size);
            Ok((out, total / 2))
        }
    }
}

fn conv_forward<T: Real>(x: &[T], n: usize, g: &ConvGeom, weight: &[T], bias: &[T]) -> Vec<T> {
    let (q, p) = (g.patch(), g.positions());
    let mut cols = vec![T::zero(); q * p];
    let mut y = vec![T::zero(); n * g.out_ch * p];
    for s in 0..n {
        g.im2col(&x[s * g.in_len()..(s + 1) * g.in_len()], &mut cols);
        let ys = &mut y[s * g.out_ch * p..(s + 1) * g.out_ch * p];
        for (o, row) in ys.chunks_mut(p).enumerate() {
            row.fill(bias[o]);
        }
        matmul(
            MatRef::row_major(weight, g.out_ch, q),
            MatRef::row_major(&cols, q, p),
            ys,
            T::one(),
        );
    }
    y
}

fn conv_backward<T: Real>(
    x: &[T],
    n: usize,
    g: &ConvGeom,
    weight: &[T],
    grad_out: &[T],
    need_input: bool,
    mut param_grads: Option<&mut [Tensor<T>]>,
) -> Option<Vec<T>> {
    let (q, p) = (g.patch(), g.positions());
    let mut cols = vec![T::zero(); q * p];
    let mut dcols = if need_input { vec![T::zero(); q * p] } else { Vec::new() };
    let mut gi = if need_input { vec![T::zero(); n * g.in_len()] } else { Vec::new() };
    for s in 0..n {
        let go = &grad_out[s * g.out_ch * p..(s + 1) * g.out_ch * p];
        if let Some(pg) = param_grads.as_deref_mut() {
            g.im2col(&x[s * g.in_len()..(s + 1) * g.in_len()], &mut cols);
            let (gw, gb) = pg.split_at_mut(1);
            matmul(
                MatRef::row_major(go, g.out_ch, p),
                MatRef::row_major(&cols, q, p).t(),
                gw[0].data_mut(),
                T::one(),
            );
            for (b, row) in gb[0].data_mut().iter_mut().zip(go.chunks(p)) {
                *b += row.iter().fold(T::zero(), |a, &v| a + v);
            }
        }
        if need_input {
            matmul(
                MatRef::row_major(weight, g.out_ch, q).t(),
                MatRef::row_major(go, g.out_ch, p),
                &mut dcols,
                T::zero(),
            );
            g.col2im(&dcols, &mut gi[s * g.in_len()..(s + 1) * g.in_len()]);
        }
    }
    need_input.then_some(gi)
}

/// Geometry of a valid max-pool over one `[C, H, W]` sample.
#[derive(Clone, Copy, Debug)]
struct PoolGeom {
    c: usize,
    h: usize,
    w: usize,
    size: usize,
    stride: usize,
    oh: usize,
    ow: usize,
}

impl PoolGeom {
    fn new(input: &[usize], size: usize, stride: usize) -> Result<Self> {
        if input.len() != 3 {
            return Err(Error::shape(
                None,
                format!("maxpool2d expects (C, H, W), got {input:?}"),
            ));
        }
        let (oh, _) = out_dim(input[1], size, stride, Padding::Valid)?;
        let (ow, _) = out_dim(input[2], size, stride, Padding::Valid)?;
        Ok(PoolGeom {
            c: input[0],
            h: input[1],
            w: input[2],
            size,
            stride,
            oh,
            ow,
        })
    }

    fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }
    fn out_len(&self) -> usize {
        self.c * self.oh * self.ow
    }

    /// Index (within the sample) of the first row-major maximum feeding
    /// output element `o`.
    fn argmax<T: Real>(&self, xs: &[T], o: usize) -> usize {
        let c = o / (self.oh * self.ow);
        let rem = o % (self.oh * self.ow);
        let (oy, ox) = (rem / self.ow, rem % self.ow);
        let mut best = (c * self.h + oy * self.stride) * self.w + ox * self.stride;
        for i in 0..self.size {
            let base = (c * self.h + oy * self.stride + i) * self.w + ox * self.stride;
            for j in 0..self.size {
                if xs[base + j] > xs[best] {
                    best = base + j;
                }
            }
        }
        best
    }
}
