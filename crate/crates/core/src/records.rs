//! Repository rows and detector-dataset assembly.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackMethod, GeneratedExample, Metric, Norms};
use crate::error::{Error, Result};
use crate::explainer::XaiSignature;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackMeta {
    pub method: AttackMethod,
    pub metric: Metric,
    /// Budget; `None` for C&W, which has none.
    pub epsilon: Option<f64>,
    pub steps: usize,
    pub step_size: f64,
    pub target: usize,
    pub norms: Norms,
    /// Generator iteration that produced the example.
    pub iteration: usize,
}

impl AttackMeta {
    /// `method/metric`, the grouping key used by the evaluation protocols.
    pub fn group(&self) -> String {
        group_key(self.method, self.metric)
    }
}

pub fn group_key(method: AttackMethod, metric: Metric) -> String {
    alloc::format!("{method}/{metric}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExampleRecord {
    pub id: String,
    pub split: Split,
    pub image: Tensor<f32>,
    pub true_label: usize,
    /// Classifier prediction for `image`.
    pub predicted_label: usize,
    /// Index of the source sample in the split's dataset.
    pub source_index: usize,
    pub attack: Option<AttackMeta>,
    pub signature: Option<XaiSignature>,
}

impl ExampleRecord {
    pub fn normal(split: Split, source_index: usize, image: Tensor<f32>, true_label: usize, predicted_label: usize) -> Self {
        ExampleRecord {
            id: alloc::format!("{split}-n-{source_index}"),
            split,
            image,
            true_label,
            predicted_label,
            source_index,
            attack: None,
            signature: None,
        }
    }

    pub fn adversarial(split: Split, ex: &GeneratedExample) -> Self {
        let cfg = &ex.config;
        let cw = cfg.method == AttackMethod::CwL2;
        ExampleRecord {
            id: alloc::format!("{split}-a-{}", ex.iteration),
            split,
            image: ex.outcome.x_adv.clone(),
            true_label: ex.true_label,
            predicted_label: ex.outcome.predicted,
            source_index: ex.source_index,
            attack: Some(AttackMeta {
                method: cfg.method,
                metric: cfg.metric,
                epsilon: if cw { None } else { Some(cfg.epsilon) },
                steps: cfg.steps,
                step_size: cfg.step_size,
                target: ex.outcome.target,
                norms: ex.outcome.norms,
                iteration: ex.iteration,
            }),
            signature: None,
        }
    }

    pub fn is_adversarial(&self) -> bool {
        self.attack.is_some()
    }

    /// Detector label: 1 for adversarial, 0 for normal.
    pub fn label(&self) -> u8 {
        u8::from(self.is_adversarial())
    }

    pub fn group(&self) -> Option<String> {
        self.attack.as_ref().map(AttackMeta::group)
    }

    /// Structural invariants of a stored row.
    pub fn validate(&self) -> Result<()> {
        if let Some(a) = &self.attack {
            if a.target == self.true_label {
                return Err(Error::InvalidArgument(alloc::format!(
                    "record {}: attack target equals the true label {}",
                    self.id, a.target
                )));
            }
        }
        if let Some(s) = &self.signature {
            if s.values.len() != s.neurons * s.classes || !s.values.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "record {}: malformed signature",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Record counts keyed by `split/normal` and `split/adversarial/method/metric`.
pub fn count_records(records: &[ExampleRecord]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        let key = match &r.attack {
            None => alloc::format!("{}/normal", r.split),
            Some(a) => alloc::format!("{}/adversarial/{}", r.split, a.group()),
        };
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

/// Signatures and labels of one split, ready for the detector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectorDataset {
    /// Row-major `len × width`.
    pub features: Vec<f32>,
    pub width: usize,
    pub labels: Vec<u8>,
    pub ids: Vec<String>,
    /// Attack group of adversarial rows.
    pub groups: Vec<Option<String>>,
}

impl DetectorDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> DetectorDataset {
        let mut out = DetectorDataset {
            width: self.width,
            ..DetectorDataset::default()
        };
        for &i in indices {
            out.features.extend_from_slice(self.row(i));
            out.labels.push(self.labels[i]);
            out.ids.push(self.ids[i].clone());
            out.groups.push(self.groups[i].clone());
        }
        out
    }

    /// Features as a `[len, width]` tensor.
    pub fn tensor(&self) -> Result<Tensor<f32>> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Tensor::from_parts(alloc::vec![self.len(), self.width], self.features.clone()))
    }
}

/// Collects the signatures of every `split` record verbatim, in record order.
pub fn build_detector_dataset(records: &[ExampleRecord], split: Split) -> Result<DetectorDataset> {
    let selected: Vec<&ExampleRecord> = records.iter().filter(|r| r.split == split).collect();
    let missing: Vec<String> = selected
        .iter()
        .filter(|r| r.signature.is_none())
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSignatures { ids: missing });
    }
    let mut out = DetectorDataset::default();
    for r in selected {
        let sig = r.signature.as_ref().expect("checked");
        if out.ids.is_empty() {
            out.width = sig.values.len();
        } else if sig.values.len() != out.width {
            return Err(Error::WidthMismatch {
                expected: out.width,
                got: sig.values.len(),
            });
        }
        out.features.extend_from_slice(&sig.values);
        out.labels.push(r.label());
        out.ids.push(r.id.clone());
        out.groups.push(r.group());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, split: Split, adv: bool, sig: Option<Vec<f32>>) -> ExampleRecord {
        ExampleRecord {
            id: id.into(),
            split,
            image: Tensor::zeros(&[2]),
            true_label: 1,
            predicted_label: if adv { 0 } else { 1 },
            source_index: 0,
            attack: adv.then(|| AttackMeta {
                method: AttackMethod::Pgd,
                metric: Metric::Linf,
                epsilon: Some(0.1),
                steps: 10,
                step_size: 0.025,
                target: 0,
                norms: Norms::of(&[0.1, 0.0]),
                iteration: 0,
            }),
            signature: sig.map(|values| XaiSignature {
                neurons: 1,
                classes: values.len(),
                values,
            }),
        }
    }

    #[test]
    fn missing_signatures_are_listed() {
        let rs = [
            rec("a", Split::Train, false, None),
            rec("b", Split::Train, true, Some(vec![1.0, 2.0])),
            rec("c", Split::Train, true, None),
        ];
        match build_detector_dataset(&rs, Split::Train) {
            Err(Error::MissingSignatures { ids }) => assert_eq!(ids, vec!["a", "c"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_split_is_empty() {
        let rs = [rec("a", Split::Train, false, Some(vec![1.0]))];
        let ds = build_detector_dataset(&rs, Split::Test).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn features_are_verbatim() {
        let rs = [
            rec("a", Split::Test, false, Some(vec![1.5, -2.0])),
            rec("b", Split::Test, true, Some(vec![3.0, 4.0])),
        ];
        let ds = build_detector_dataset(&rs, Split::Test).unwrap();
        assert_eq!(ds.features, vec![1.5, -2.0, 3.0, 4.0]);
        assert_eq!(ds.labels, vec![0, 1]);
        assert_eq!(ds.groups[1].as_deref(), Some("pgd/linf"));
        let c = count_records(&rs);
        assert_eq!(c["test/normal"], 1);
        assert_eq!(c["test/adversarial/pgd/linf"], 1);
    }
}
