//! Targeted evasion attacks and randomized repository population.
//!
//! All attacks work in the normalized `[0, 1]` pixel domain. An outcome
//! always satisfies `x_adv == clip(x + delta, 0, 1)` and
//! `success == (predict(x_adv) == target)`.

mod cw;
mod generate;
mod gradient;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{norms, Tensor};

pub use cw::cw_l2;
pub use generate::{
    generate_adversarial_repository, preferences, GeneratedExample, GenerationStats, GeneratorConfig,
    PreferenceGrid,
};
pub use gradient::{fgsm, iterative_attack};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    Fgsm,
    Bim,
    Pgd,
    CwL2,
}

impl AttackMethod {
    pub const ALL: [AttackMethod; 4] = [AttackMethod::Fgsm, AttackMethod::Bim, AttackMethod::Pgd, AttackMethod::CwL2];

    pub fn name(self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "fgsm",
            AttackMethod::Bim => "bim",
            AttackMethod::Pgd => "pgd",
            AttackMethod::CwL2 => "cw_l2",
        }
    }

    /// Distance metrics this implementation supports for the method.
    pub fn supported_metrics(self) -> &'static [Metric] {
        match self {
            AttackMethod::Fgsm | AttackMethod::Bim | AttackMethod::Pgd => &[Metric::L2, Metric::Linf],
            AttackMethod::CwL2 => &[Metric::L2],
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        AttackMethod::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Perturbation distance. `L0`/`L1` are representable but no attack
/// implements them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L0,
    L1,
    L2,
    Linf,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::L0 => "l0",
            Metric::L1 => "l1",
            Metric::L2 => "l2",
            Metric::Linf => "linf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Metric::L0, Metric::L1, Metric::L2, Metric::Linf]
            .into_iter()
            .find(|m| m.name() == s)
    }

    /// Norm of `v` under this metric (L1 is the absolute sum).
    pub fn norm(self, v: &[f32]) -> f64 {
        match self {
            Metric::L0 => norms::l0(v),
            Metric::L1 => v.iter().map(|x| (*x as f64).abs()).sum(),
            Metric::L2 => norms::l2(v),
            Metric::Linf => norms::linf(v),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Carlini-Wagner L2 settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CwParams {
    pub initial_const: f64,
    pub binary_search_steps: usize,
    pub iterations: usize,
    /// Confidence margin κ on the logit gap.
    pub confidence: f64,
    pub learning_rate: f64,
    /// Stop an inner optimization once the loss stalls (checked every
    /// `iterations / 10` steps).
    pub abort_early: bool,
}

impl Default for CwParams {
    fn default() -> Self {
        CwParams {
            initial_const: 1.0,
            binary_search_steps: 5,
            iterations: 100,
            confidence: 0.0,
            learning_rate: 0.1,
            abort_early: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub metric: Metric,
    /// Perturbation budget in normalized pixel units (unused by C&W).
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub random_start: bool,
    /// Iterative attacks stop once `logit[target] - max other logit` reaches
    /// this margin.
    pub early_stop_margin: Option<f64>,
    pub cw: Option<CwParams>,
}

impl AttackConfig {
    pub fn fgsm(metric: Metric, epsilon: f64) -> Self {
        AttackConfig {
            method: AttackMethod::Fgsm,
            metric,
            epsilon,
            steps: 1,
            step_size: epsilon,
            random_start: false,
            early_stop_margin: None,
            cw: None,
        }
    }

    /// Basic iterative method: no random start.
    pub fn bim(metric: Metric, epsilon: f64, steps: usize, step_size: f64) -> Self {
        AttackConfig {
            method: AttackMethod::Bim,
            metric,
            epsilon,
            steps,
            step_size,
            random_start: false,
            early_stop_margin: None,
            cw: None,
        }
    }

    /// Projected gradient descent: uniform random start in the ε-ball.
    pub fn pgd(metric: Metric, epsilon: f64, steps: usize, step_size: f64) -> Self {
        AttackConfig {
            method: AttackMethod::Pgd,
            random_start: true,
            ..AttackConfig::bim(metric, epsilon, steps, step_size)
        }
    }

    pub fn cw_l2(params: CwParams) -> Self {
        AttackConfig {
            method: AttackMethod::CwL2,
            metric: Metric::L2,
            epsilon: 0.0,
            steps: params.iterations * params.binary_search_steps,
            step_size: params.learning_rate,
            random_start: false,
            early_stop_margin: None,
            cw: Some(params),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidAttack(msg));
        if !self.method.supported_metrics().contains(&self.metric) {
            return bad(alloc::format!("{} does not implement the {} metric", self.method, self.metric));
        }
        match self.method {
            AttackMethod::Fgsm => {
                if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
                    return bad(alloc::format!("epsilon must be finite and >= 0, got {}", self.epsilon));
                }
            }
            AttackMethod::Bim | AttackMethod::Pgd => {
                if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
                    return bad(alloc::format!("epsilon must be finite and > 0, got {}", self.epsilon));
                }
                if self.steps == 0 {
                    return bad("steps must be >= 1".into());
                }
                if !(self.step_size > 0.0) {
                    return bad("step_size must be > 0".into());
                }
                if self.step_size * (self.steps as f64) < self.epsilon * (1.0 - 1e-12) {
                    return bad(alloc::format!(
                        "step_size * steps = {} cannot reach epsilon {}",
                        self.step_size * self.steps as f64,
                        self.epsilon
                    ));
                }
            }
            AttackMethod::CwL2 => {
                let Some(cw) = self.cw else {
                    return bad("cw_l2 requires C&W parameters".into());
                };
                if cw.binary_search_steps == 0 || cw.iterations == 0 {
                    return bad("C&W needs at least one search step and one iteration".into());
                }
                if !(cw.initial_const > 0.0 && cw.learning_rate > 0.0 && cw.confidence >= 0.0) {
                    return bad("C&W constant and learning rate must be > 0, confidence >= 0".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l0: f64,
    pub l2: f64,
    pub linf: f64,
}

impl Norms {
    pub fn of(delta: &[f32]) -> Self {
        Norms {
            l0: norms::l0(delta),
            l2: norms::l2(delta),
            linf: norms::linf(delta),
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::L0 => Some(self.l0),
            Metric::L2 => Some(self.l2),
            Metric::Linf => Some(self.linf),
            Metric::L1 => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub x_adv: Tensor<f32>,
    pub delta: Tensor<f32>,
    pub norms: Norms,
    pub success: bool,
    pub target: usize,
    /// Class predicted for `x_adv`.
    pub predicted: usize,
    /// Gradient evaluations spent.
    pub iterations: usize,
}

/// `clip(x + delta, 0, 1)`, the single definition of the adversarial input.
pub(crate) fn compose(x: &[f32], delta: &[f32]) -> Vec<f32> {
    x.iter().zip(delta).map(|(&a, &d)| (a + d).clamp(0.0, 1.0)).collect()
}
