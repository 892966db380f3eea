//! Randomized repository population: each iteration draws a sample, an
//! attack, a distance, a hyperparameter preference and a target class, and
//! keeps the outcome only if the attack succeeded.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{cw_l2, fgsm, iterative_attack, AttackConfig, AttackMethod, AttackOutcome, CwParams, Metric};
use crate::classifier::argmax;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::rng::stream_rng;

/// Hyperparameter grid the per-iteration preference is drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceGrid {
    pub linf_epsilons: Vec<f64>,
    pub l2_epsilons: Vec<f64>,
    pub steps: Vec<usize>,
    /// Iterative step size is `step_factor · ε / steps`.
    pub step_factor: f64,
    pub cw: CwParams,
}

impl Default for PreferenceGrid {
    fn default() -> Self {
        PreferenceGrid {
            linf_epsilons: alloc::vec![0.05, 0.1, 0.2, 0.3],
            l2_epsilons: alloc::vec![1.0, 2.0, 3.0],
            steps: alloc::vec![10, 40],
            step_factor: 2.5,
            cw: CwParams::default(),
        }
    }
}

/// All attack configurations the grid allows for `(method, metric)`. Empty when
/// the method does not support the metric.
pub fn preferences(grid: &PreferenceGrid, method: AttackMethod, metric: Metric) -> Vec<AttackConfig> {
    if !method.supported_metrics().contains(&metric) {
        return Vec::new();
    }
    let eps: &[f64] = match metric {
        Metric::Linf => &grid.linf_epsilons,
        _ => &grid.l2_epsilons,
    };
    match method {
        AttackMethod::Fgsm => eps.iter().map(|&e| AttackConfig::fgsm(metric, e)).collect(),
        AttackMethod::Bim | AttackMethod::Pgd => {
            let mut out = Vec::new();
            for &e in eps {
                for &s in &grid.steps {
                    let step = grid.step_factor * e / s as f64;
                    out.push(match method {
                        AttackMethod::Bim => AttackConfig::bim(metric, e, s, step),
                        _ => AttackConfig::pgd(metric, e, s, step),
                    });
                }
            }
            out
        }
        AttackMethod::CwL2 => alloc::vec![AttackConfig::cw_l2(grid.cw)],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Candidate target classes `L`.
    pub labels: Vec<usize>,
    pub methods: Vec<AttackMethod>,
    pub metrics: Vec<Metric>,
    pub grid: PreferenceGrid,
    /// Number of loop iterations `i`; at most this many examples are stored.
    pub iterations: usize,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn desk(num_classes: usize, iterations: usize, seed: u64) -> Self {
        GeneratorConfig {
            labels: (0..num_classes).collect(),
            methods: AttackMethod::ALL.to_vec(),
            metrics: alloc::vec![Metric::L2, Metric::Linf],
            grid: PreferenceGrid::default(),
            iterations,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.labels.is_empty() || self.methods.is_empty() || self.metrics.is_empty() {
            return Err(Error::InvalidAttack("labels, methods and metrics must be nonempty".into()));
        }
        for &m in &self.methods {
            let usable: Vec<Metric> = self.metrics.iter().copied().filter(|d| m.supported_metrics().contains(d)).collect();
            if usable.is_empty() {
                return Err(Error::InvalidAttack(alloc::format!("no configured metric is supported by {m}")));
            }
            for d in usable {
                let prefs = preferences(&self.grid, m, d);
                if prefs.is_empty() {
                    return Err(Error::InvalidAttack(alloc::format!("empty preference set for {m}/{d}")));
                }
                for p in &prefs {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }
}

/// A successful attack kept by the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedExample {
    pub iteration: usize,
    /// Index of the attacked sample in the normals dataset.
    pub source_index: usize,
    pub true_label: usize,
    pub config: AttackConfig,
    pub outcome: AttackOutcome,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub iterations: usize,
    pub stored: usize,
    /// Iterations whose sample was already classified as the drawn target.
    pub skipped_already_target: usize,
    /// Attempts and successes per `method/metric`.
    pub attempts: BTreeMap<alloc::string::String, usize>,
    pub successes: BTreeMap<alloc::string::String, usize>,
}

enum Attempt {
    Stored(GeneratedExample),
    Failed,
    AlreadyTarget,
    NoTarget,
}

/// Runs one generator iteration. Depends only on `(cfg.seed, iteration)`, so
/// iterations may be evaluated in any order.
fn run_iteration(net: &Network<f32>, normals: &LabeledDataset, cfg: &GeneratorConfig, iteration: usize) -> Result<(Attempt, AttackMethod, Metric)> {
    let mut rng = stream_rng(cfg.seed, "alg1", iteration as u64);
    let source_index = rng.gen_range(0..normals.len());
    let method = *cfg.methods.choose(&mut rng).expect("nonempty");
    let metrics: Vec<Metric> = cfg
        .metrics
        .iter()
        .copied()
        .filter(|d| method.supported_metrics().contains(d))
        .collect();
    let metric = *metrics.choose(&mut rng).expect("validated");
    let config = preferences(&cfg.grid, method, metric)
        .choose(&mut rng)
        .expect("validated")
        .clone();
    let true_label = normals.label(source_index);
    let targets: Vec<usize> = cfg.labels.iter().copied().filter(|&l| l != true_label).collect();
    let Some(&target) = targets.choose(&mut rng) else {
        return Ok((Attempt::NoTarget, method, metric));
    };
    let x = normals.tensor(source_index);
    if argmax(net.forward(&x)?.row(0)) == target {
        return Ok((Attempt::AlreadyTarget, method, metric));
    }
    let outcome = match method {
        AttackMethod::Fgsm => fgsm(net, &x, target, &config)?,
        AttackMethod::Bim | AttackMethod::Pgd => iterative_attack(net, &x, target, &config, &mut rng)?,
        AttackMethod::CwL2 => cw_l2(net, &x, target, &config)?,
    };
    let attempt = if outcome.success {
        Attempt::Stored(GeneratedExample {
            iteration,
            source_index,
            true_label,
            config,
            outcome,
        })
    } else {
        Attempt::Failed
    };
    Ok((attempt, method, metric))
}

/// Runs exactly `cfg.iterations` iterations against `net` and returns the
/// successful outcomes in iteration order. `progress` is called after every
/// iteration with the number completed.
pub fn generate_adversarial_repository(
    net: &Network<f32>,
    normals: &LabeledDataset,
    cfg: &GeneratorConfig,
    mut progress: impl FnMut(usize),
) -> Result<(Vec<GeneratedExample>, GenerationStats)> {
    if normals.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    let mut stats = GenerationStats {
        iterations: cfg.iterations,
        ..GenerationStats::default()
    };
    let mut out = Vec::new();
    for it in 0..cfg.iterations {
        let (attempt, method, metric) = run_iteration(net, normals, cfg, it)?;
        let key = alloc::format!("{method}/{metric}");
        match attempt {
            Attempt::Stored(ex) => {
                *stats.attempts.entry(key.clone()).or_default() += 1;
                *stats.successes.entry(key).or_default() += 1;
                out.push(ex);
            }
            Attempt::Failed => *stats.attempts.entry(key).or_default() += 1,
            Attempt::AlreadyTarget => stats.skipped_already_target += 1,
            Attempt::NoTarget => {}
        }
        progress(it + 1);
    }
    stats.stored = out.len();
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let g = PreferenceGrid::default();
        assert_eq!(preferences(&g, AttackMethod::Fgsm, Metric::Linf).len(), 4);
        assert_eq!(preferences(&g, AttackMethod::Pgd, Metric::L2).len(), 6);
        assert_eq!(preferences(&g, AttackMethod::CwL2, Metric::L2).len(), 1);
        assert!(preferences(&g, AttackMethod::CwL2, Metric::Linf).is_empty());
        for m in AttackMethod::ALL {
            for d in [Metric::L2, Metric::Linf] {
                for p in preferences(&g, m, d) {
                    p.validate().unwrap();
                }
            }
        }
    }
}
