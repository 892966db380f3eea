//! Detecting adversarial inputs to an image classifier from SHAP attributions
//! of its penultimate-layer neurons.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature; IO, file formats and the CLI live in the `sigdetect` crate.
//!
//! Pipeline stages:
//! - [`network`]: tensors, layers, reverse-mode gradients.
//! - [`classifier`]: the target classifier and its training loop.
//! - [`attacks`]: FGSM, BIM/PGD, C&W-L2 and randomized repository population.
//! - [`explainer`]: DeepLIFT-rescale attributions over the classifier head and
//!   flat XAI signatures.
//! - [`records`]: repository rows and detector-dataset assembly.
//! - [`detector`]: the signature MLP, AdaBound and early stopping.
//! - [`metrics`] / [`protocol`]: ROC/PR analysis and the two evaluation
//!   protocols (same-attack and leave-one-attack-out).
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod attacks;
pub mod classifier;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod explainer;
mod gemm;
pub mod gradcheck;
pub mod layer;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod protocol;
pub mod records;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use layer::{Layer, LayerDescriptor, LayerKind, Padding};
pub use network::{ActivationTrace, Gradients, LossSpec, Network, OutputKind};
pub use tensor::{Real, Tensor};
