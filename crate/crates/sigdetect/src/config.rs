//! Pipeline configuration, read from a TOML file. Every field has a default,
//! so an empty file describes the desk-scale MNIST run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sigdetect_core::attacks::{AttackMethod, CwParams, GeneratorConfig, Metric, PreferenceGrid};
use sigdetect_core::classifier::{Architecture, ClassifierSpec, TrainingParams};
use sigdetect_core::detector::DetectorConfig;
use sigdetect_core::explainer::ExplainTarget;
use sigdetect_core::optim::AdaBoundConfig;
use sigdetect_core::protocol::ProtocolConfig;
use sigdetect_core::rng::derive_seed;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Directory for models, the repository and reports.
    pub work_dir: PathBuf,
    pub data: DataConfig,
    pub classifier: ClassifierConfig,
    pub generator: GeneratorSection,
    pub repository: RepositoryConfig,
    pub explainer: ExplainerConfig,
    pub detector: DetectorSection,
    pub eval: EvalConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub mnist_dir: PathBuf,
    /// Leading samples of each official split to use.
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub train_iterations: usize,
    pub test_iterations: usize,
    pub methods: Vec<AttackMethod>,
    pub metrics: Vec<Metric>,
    pub linf_epsilons: Vec<f64>,
    pub l2_epsilons: Vec<f64>,
    pub steps: Vec<usize>,
    pub step_factor: f64,
    pub cw: CwParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepositoryConfig {
    pub train_normals: usize,
    pub test_normals: usize,
    /// Keep normals the classifier gets wrong (they are still labelled normal).
    pub include_misclassified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainerConfig {
    pub background_size: usize,
    pub target: ExplainTarget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub batch_size: usize,
    pub optimizer: AdaBoundConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub fpr_cap: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            work_dir: "work".into(),
            data: DataConfig::default(),
            classifier: ClassifierConfig::default(),
            generator: GeneratorSection::default(),
            repository: RepositoryConfig::default(),
            explainer: ExplainerConfig::default(),
            detector: DetectorSection::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            mnist_dir: "data/mnist".into(),
            train_size: 10_000,
            test_size: 2_000,
        }
    }
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 1e-3,
        }
    }
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let grid = PreferenceGrid::default();
        GeneratorSection {
            train_iterations: 3_200,
            test_iterations: 1_300,
            methods: AttackMethod::ALL.to_vec(),
            metrics: vec![Metric::L2, Metric::Linf],
            linf_epsilons: grid.linf_epsilons,
            l2_epsilons: grid.l2_epsilons,
            steps: grid.steps,
            step_factor: grid.step_factor,
            cw: grid.cw,
        }
    }
}

impl Default for RepositoryConfig {
    fn default() -> Self {
        RepositoryConfig {
            train_normals: 2_000,
            test_normals: 800,
            include_misclassified: true,
        }
    }
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        ExplainerConfig {
            background_size: 64,
            target: ExplainTarget::Logits,
        }
    }
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = DetectorConfig::default();
        DetectorSection {
            hidden: d.hidden,
            max_epochs: d.max_epochs,
            patience: d.patience,
            validation_fraction: d.validation_fraction,
            batch_size: d.batch_size,
            optimizer: d.optimizer,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { fpr_cap: 0.05 }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Seed for one pipeline stage, derived from the master seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn classifier_spec(&self) -> ClassifierSpec {
        ClassifierSpec {
            architecture: Architecture::MnistCnn,
            num_classes: 10,
            input_shape: vec![1, 28, 28],
            training: TrainingParams {
                epochs: self.classifier.epochs,
                batch_size: self.classifier.batch_size,
                learning_rate: self.classifier.learning_rate,
                seed: self.stage_seed("classifier"),
            },
        }
    }

    pub fn generator(&self, iterations: usize, stage: &str) -> GeneratorConfig {
        let g = &self.generator;
        GeneratorConfig {
            labels: (0..10).collect(),
            methods: g.methods.clone(),
            metrics: g.metrics.clone(),
            grid: PreferenceGrid {
                linf_epsilons: g.linf_epsilons.clone(),
                l2_epsilons: g.l2_epsilons.clone(),
                steps: g.steps.clone(),
                step_factor: g.step_factor,
                cw: g.cw,
            },
            iterations,
            seed: self.stage_seed(stage),
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        let d = &self.detector;
        DetectorConfig {
            hidden: d.hidden.clone(),
            optimizer: d.optimizer,
            max_epochs: d.max_epochs,
            patience: d.patience,
            validation_fraction: d.validation_fraction,
            batch_size: d.batch_size,
            seed: self.stage_seed("detector"),
        }
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            detector: self.detector_config(),
            fpr_cap: self.eval.fpr_cap,
            undersample_seed: self.stage_seed("rq2-undersample"),
            fingerprint: self.fingerprint(),
        }
    }

    pub fn classifier_path(&self) -> PathBuf {
        self.work_dir.join("classifier.sgm")
    }

    pub fn detector_path(&self) -> PathBuf {
        self.work_dir.join("detector.sgm")
    }

    pub fn repository_dir(&self) -> PathBuf {
        self.work_dir.join("repository")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.work_dir.join("reports")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn round_trips_and_rejects_unknown_keys() {
        let mut c = Config::default();
        c.seed = 9;
        c.generator.methods = vec![AttackMethod::Pgd];
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
        assert!(Config::from_toml("sed = 3").is_err());
        assert_ne!(c.fingerprint(), Config::default().fingerprint());
    }
}
