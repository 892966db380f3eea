//! Binary adversarial-example detector over signatures: a ReLU MLP with one
//! sigmoid output, trained with AdaBound on binary cross-entropy and stopped
//! early on validation loss.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::Layer;
use crate::network::Network;
use crate::optim::{AdaBound, AdaBoundConfig};
use crate::records::DetectorDataset;
use crate::rng::stream_rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub hidden: Vec<usize>,
    pub optimizer: AdaBoundConfig,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            hidden: vec![256, 128, 16],
            optimizer: AdaBoundConfig::default(),
            max_epochs: 500,
            patience: 20,
            validation_fraction: 0.2,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub train: f64,
    pub validation: f64,
}

/// Patience-based stopping on a loss that should decrease. Only strict
/// improvements reset the counter.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    /// The epoch is the new best.
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }

    /// Records the loss of `epoch` (0-based, consecutive).
    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            return StopDecision::Improved;
        }
        match self.best_epoch {
            Some(b) if epoch - b >= self.patience => StopDecision::Stop,
            _ => StopDecision::Continue,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorModel {
    pub network: Network<f32>,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
}

impl DetectorModel {
    pub fn input_width(&self) -> usize {
        self.network.input_shape()[0]
    }

    /// Adversarial probability of every row of `features` (`[N, width]`).
    pub fn score_batch(&self, features: &Tensor<f32>) -> Result<Vec<f32>> {
        let w = self.input_width();
        if features.row_len() != w {
            return Err(Error::WidthMismatch {
                expected: w,
                got: features.row_len(),
            });
        }
        let mut out = Vec::with_capacity(features.batch_size());
        let rows: Vec<usize> = (0..features.batch_size()).collect();
        for chunk in rows.chunks(SCORE_BATCH) {
            let mut data = Vec::with_capacity(chunk.len() * w);
            for &r in chunk {
                data.extend_from_slice(features.row(r));
            }
            let p = self.network.forward(&Tensor::from_parts(vec![chunk.len(), w], data))?;
            out.extend_from_slice(p.data());
        }
        Ok(out)
    }

    /// Adversarial probability of one signature.
    pub fn score(&self, signature: &[f32]) -> Result<f32> {
        if signature.len() != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                got: signature.len(),
            });
        }
        Ok(self.score_batch(&Tensor::from_parts(vec![1, signature.len()], signature.to_vec()))?[0])
    }

    pub fn score_dataset(&self, ds: &DetectorDataset) -> Result<Vec<f32>> {
        if ds.is_empty() {
            return Ok(Vec::new());
        }
        self.score_batch(&ds.tensor()?)
    }
}

const SCORE_BATCH: usize = 512;

/// Untrained detector network with Glorot-uniform weights.
pub fn build_detector_network(width: usize, hidden: &[usize], seed: u64) -> Result<Network<f32>> {
    let mut rng = stream_rng(seed, "detector-init", 0);
    let mut layers = Vec::new();
    let mut prev = width;
    for &h in hidden.iter().chain(core::iter::once(&1)) {
        let limit = (6.0 / (prev + h) as f64).sqrt();
        let w = (0..prev * h).map(|_| rng.gen_range(-limit..limit) as f32).collect();
        layers.push(Layer::Dense {
            weight: Tensor::from_parts(vec![h, prev], w),
            bias: Tensor::zeros(&[h]),
        });
        layers.push(Layer::Relu);
        prev = h;
    }
    layers.pop();
    layers.push(Layer::Sigmoid);
    Network::new(vec![width], layers)
}

/// Seeded split stratified by label; returns `(train, validation)` indices.
pub fn stratified_split(labels: &[u8], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = stream_rng(seed, "detector-split", 0);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let mut k = (idx.len() as f64 * fraction).round() as usize;
        if fraction > 0.0 && idx.len() >= 2 {
            k = k.clamp(1, idx.len() - 1);
        }
        val.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn mean_bce(net: &Network<f32>, ds: &DetectorDataset, rows: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in rows.chunks(SCORE_BATCH) {
        let sub = ds.subset(chunk);
        let labels: Vec<usize> = sub.labels.iter().map(|&l| l as usize).collect();
        total += net.mean_loss(&sub.tensor()?, &labels)? as f64 * chunk.len() as f64;
    }
    Ok(total / rows.len() as f64)
}

/// Trains a detector on `ds`. Holds out a stratified validation split, runs
/// up to `max_epochs`, stops `patience` epochs after the best validation loss
/// and returns the best epoch's weights.
pub fn train_detector(cfg: &DetectorConfig, ds: &DetectorDataset) -> Result<DetectorModel> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&bad) = ds.labels.iter().find(|&&l| l > 1) {
        return Err(Error::ClassIndex {
            index: bad as usize,
            classes: 2,
        });
    }
    if !ds.labels.contains(&0) || !ds.labels.contains(&1) {
        return Err(Error::SingleClass);
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::InvalidArgument("batch size and epoch limit must be positive".into()));
    }
    let (train_idx, val_idx) = stratified_split(&ds.labels, cfg.validation_fraction, cfg.seed);
    if val_idx.is_empty() {
        return Err(Error::InvalidArgument("validation split is empty".into()));
    }
    let mut net = build_detector_network(ds.width, &cfg.hidden, cfg.seed)?;
    let mut opt = AdaBound::new(cfg.optimizer, &net);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = net.clone();
    let mut history = Vec::new();
    let mut order = train_idx.clone();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut stream_rng(cfg.seed, "detector-shuffle", epoch as u64));
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let sub = ds.subset(chunk);
            let labels: Vec<usize> = sub.labels.iter().map(|&l| l as usize).collect();
            let (grads, loss) = net.param_gradients(&sub.tensor()?, &labels)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Diverged { epoch });
            }
            opt.step(&mut net, &grads);
            sum += loss as f64 * chunk.len() as f64;
        }
        let validation = mean_bce(&net, ds, &val_idx)?;
        if !validation.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.push(EpochLoss {
            train: sum / order.len() as f64,
            validation,
        });
        match stopper.observe(epoch, validation) {
            StopDecision::Improved => best = net.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    Ok(DetectorModel {
        network: best,
        history,
        best_epoch: stopper.best_epoch().expect("at least one finite epoch"),
    })
}
