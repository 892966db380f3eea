//! Evaluation protocols: same-attack detection (RQ1) and leave-one-group-out
//! detection of unseen attacks (RQ2).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::detector::{train_detector, DetectorConfig, DetectorModel};
use crate::error::{Error, Result};
use crate::metrics::{pr_auc, rate_at, roc_auc, threshold_at_fpr, EvalReport, GroupTpr, SampleCounts};
use crate::records::DetectorDataset;
use crate::rng::{derive_seed, stream_rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub detector: DetectorConfig,
    pub fpr_cap: f64,
    /// Seed of the RQ2 test under-sampling.
    pub undersample_seed: u64,
    pub fingerprint: String,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            detector: DetectorConfig::default(),
            fpr_cap: 0.05,
            undersample_seed: 0,
            fingerprint: String::new(),
        }
    }
}

fn counts(train: &DetectorDataset, test: &DetectorDataset) -> SampleCounts {
    let ones = |d: &DetectorDataset| d.labels.iter().filter(|&&l| l == 1).count();
    SampleCounts {
        train_normal: train.len() - ones(train),
        train_adversarial: ones(train),
        test_normal: test.len() - ones(test),
        test_adversarial: ones(test),
    }
}

/// Scores `test` with `model` and assembles the report.
pub fn evaluate(
    name: &str,
    model: &DetectorModel,
    train: &DetectorDataset,
    test: &DetectorDataset,
    cfg: &ProtocolConfig,
) -> Result<EvalReport> {
    let scores: Vec<f64> = model.score_dataset(test)?.into_iter().map(f64::from).collect();
    let (roc, auc_roc) = roc_auc(&scores, &test.labels)?;
    let (pr, auc_pr) = pr_auc(&scores, &test.labels)?;
    let threshold = threshold_at_fpr(&scores, &test.labels, cfg.fpr_cap)?;
    let mut per_group = BTreeMap::new();
    let groups: BTreeSet<&String> = test.groups.iter().flatten().collect();
    for g in groups {
        let idx: Vec<usize> = (0..test.len()).filter(|&i| test.groups[i].as_ref() == Some(g)).collect();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<u8> = idx.iter().map(|&i| test.labels[i]).collect();
        per_group.insert(
            g.clone(),
            GroupTpr {
                adversarial: idx.len(),
                tpr: rate_at(&s, &l, 1, threshold),
            },
        );
    }
    Ok(EvalReport {
        name: name.into(),
        roc,
        pr,
        auc_roc,
        auc_pr,
        fpr_cap: cfg.fpr_cap,
        threshold,
        tpr_at_fpr: rate_at(&scores, &test.labels, 1, threshold),
        per_group,
        counts: counts(train, test),
        detector_best_epoch: model.best_epoch,
        detector_epochs: model.history.len(),
        seed: cfg.detector.seed,
        fingerprint: cfg.fingerprint.clone(),
    })
}

/// Trains on every train signature and evaluates on every test signature.
pub fn run_rq1(train: &DetectorDataset, test: &DetectorDataset, cfg: &ProtocolConfig) -> Result<(EvalReport, DetectorModel)> {
    let model = train_detector(&cfg.detector, train)?;
    let report = evaluate("rq1", &model, train, test, cfg)?;
    Ok((report, model))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Holdout {
    pub group: String,
    pub report: Option<EvalReport>,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rq2Report {
    pub holdouts: Vec<Holdout>,
    pub mean_auc_roc: f64,
    pub mean_auc_pr: f64,
    pub min_auc_roc: f64,
    pub mean_tpr_at_fpr: f64,
    pub fingerprint: String,
}

/// Training rows for holdout `group`: everything except that group's
/// adversarial examples.
pub fn holdout_train_rows(train: &DetectorDataset, group: &str) -> Vec<usize> {
    (0..train.len())
        .filter(|&i| train.groups[i].as_deref() != Some(group))
        .collect()
}

/// Balanced test rows for holdout `group`: its adversarial examples and an
/// equal number of normals, both under-sampled to the smaller count.
pub fn holdout_test_rows(test: &DetectorDataset, group: &str, seed: u64, index: u64) -> Vec<usize> {
    let adv: Vec<usize> = (0..test.len())
        .filter(|&i| test.groups[i].as_deref() == Some(group))
        .collect();
    let normal: Vec<usize> = (0..test.len()).filter(|&i| test.labels[i] == 0).collect();
    let k = adv.len().min(normal.len());
    let mut rng = stream_rng(seed, "rq2-undersample", index);
    let mut pick = |from: &[usize]| -> Vec<usize> {
        let mut chosen: Vec<usize> = sample(&mut rng, from.len(), k).into_iter().map(|j| from[j]).collect();
        chosen.sort_unstable();
        chosen
    };
    let mut rows = pick(&normal);
    rows.extend(pick(&adv));
    rows.sort_unstable();
    rows
}

/// Leave-one-(method, metric)-out evaluation over every attack group present
/// in either split. Groups are processed in name order.
pub fn run_rq2(train: &DetectorDataset, test: &DetectorDataset, cfg: &ProtocolConfig) -> Result<Rq2Report> {
    let groups: BTreeSet<String> = train.groups.iter().chain(&test.groups).flatten().cloned().collect();
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(alloc::format!(
            "leave-one-out needs at least two attack groups, found {}",
            groups.len()
        )));
    }
    let mut holdouts = Vec::new();
    for (gi, group) in groups.iter().enumerate() {
        let test_rows = holdout_test_rows(test, group, cfg.undersample_seed, gi as u64);
        if test_rows.is_empty() {
            holdouts.push(Holdout {
                group: group.clone(),
                report: None,
                warning: Some(alloc::format!("no test adversarial examples for {group}; skipped")),
            });
            continue;
        }
        let tr = train.subset(&holdout_train_rows(train, group));
        assert!(
            tr.groups.iter().all(|g| g.as_deref() != Some(group.as_str())),
            "held-out group leaked into training"
        );
        let te = test.subset(&test_rows);
        let mut local = cfg.clone();
        local.detector.seed = derive_seed(cfg.detector.seed, group);
        let model = train_detector(&local.detector, &tr)?;
        let report = evaluate(&alloc::format!("rq2/{group}"), &model, &tr, &te, &local)?;
        holdouts.push(Holdout {
            group: group.clone(),
            report: Some(report),
            warning: None,
        });
    }
    let done: Vec<&EvalReport> = holdouts.iter().filter_map(|h| h.report.as_ref()).collect();
    let mean = |f: fn(&EvalReport) -> f64| {
        if done.is_empty() {
            f64::NAN
        } else {
            done.iter().map(|r| f(r)).sum::<f64>() / done.len() as f64
        }
    };
    Ok(Rq2Report {
        mean_auc_roc: mean(|r| r.auc_roc),
        mean_auc_pr: mean(|r| r.auc_pr),
        mean_tpr_at_fpr: mean(|r| r.tpr_at_fpr),
        min_auc_roc: done.iter().map(|r| r.auc_roc).fold(f64::INFINITY, f64::min),
        holdouts,
        fingerprint: cfg.fingerprint.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ds() -> DetectorDataset {
        let groups = vec![
            None,
            None,
            None,
            Some("fgsm/l2".into()),
            Some("pgd/linf".into()),
            Some("pgd/linf".into()),
        ];
        DetectorDataset {
            features: vec![0.0; 6],
            width: 1,
            labels: vec![0, 0, 0, 1, 1, 1],
            ids: (0..6).map(|i| alloc::format!("r{i}")).collect(),
            groups,
        }
    }

    #[test]
    fn holdout_rows_exclude_group_and_balance() {
        let d = ds();
        assert_eq!(holdout_train_rows(&d, "pgd/linf"), vec![0, 1, 2, 3]);
        let rows = holdout_test_rows(&d, "pgd/linf", 1, 0);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows.iter().filter(|&&i| d.labels[i] == 1).count(), 2);
        assert!(rows.iter().all(|&i| d.groups[i].is_none() || d.groups[i].as_deref() == Some("pgd/linf")));
    }
}
