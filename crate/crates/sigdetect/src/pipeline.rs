//! The end-to-end stages behind the CLI subcommands. Each stage reads its
//! inputs from and writes its outputs to the configured work directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use sha2::{Digest, Sha256};
use sigdetect_core::attacks::{generate_adversarial_repository, AttackMethod, Metric};
use sigdetect_core::classifier::{argmax, train_classifier, TrainedModel};
use sigdetect_core::dataset::LabeledDataset;
use sigdetect_core::detector::{train_detector, DetectorModel};
use sigdetect_core::explainer::{xai_signatures, BackgroundSet};
use sigdetect_core::metrics::EvalReport;
use sigdetect_core::protocol::{evaluate, run_rq2, Rq2Report};
use sigdetect_core::records::{build_detector_dataset, DetectorDataset, ExampleRecord, Split};
use sigdetect_core::rng::stream_rng;
use sigdetect_core::Tensor;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::repository::{Manifest, Repository};
use crate::report::{emit_report, write_json, Format};
use crate::{export, idx, model_io};

/// The desk-scale train and test subsets.
pub struct Datasets {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl Datasets {
    pub fn split(&self, split: Split) -> &LabeledDataset {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

pub fn load_data(cfg: &Config) -> Result<Datasets> {
    let (train, test) = idx::load_mnist(&cfg.data.mnist_dir)?;
    Ok(Datasets {
        train: train.head(cfg.data.train_size),
        test: test.head(cfg.data.test_size),
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn train_classifier_stage(cfg: &Config, data: &Datasets) -> Result<TrainedModel> {
    let model = train_classifier(&cfg.classifier_spec(), &data.train, Some(&data.test))?;
    model_io::save_classifier(&cfg.classifier_path(), &model)?;
    Ok(model)
}

pub fn load_classifier(cfg: &Config) -> Result<TrainedModel> {
    model_io::load_classifier(&cfg.classifier_path())
}

fn predictions(model: &TrainedModel, ds: &LabeledDataset, indices: &[usize]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(256) {
        let p = model.network.forward(&ds.batch(chunk))?;
        out.extend((0..chunk.len()).map(|r| argmax(p.row(r))));
    }
    Ok(out)
}

/// Sorted indices of `count` normals drawn without replacement.
pub fn select_normals(
    cfg: &Config,
    model: &TrainedModel,
    ds: &LabeledDataset,
    count: usize,
    split: Split,
) -> Result<Vec<usize>> {
    let all: Vec<usize> = (0..ds.len()).collect();
    let pool: Vec<usize> = if cfg.repository.include_misclassified {
        all
    } else {
        let pred = predictions(model, ds, &all)?;
        all.into_iter().filter(|&i| pred[i] == ds.label(i)).collect()
    };
    if count > pool.len() {
        return Err(Error::Invalid(format!(
            "{count} {split} normals requested but only {} are available",
            pool.len()
        )));
    }
    let mut rng = stream_rng(cfg.stage_seed(&format!("normals-{split}")), "select", 0);
    let mut chosen: Vec<usize> = sample(&mut rng, pool.len(), count).into_iter().map(|j| pool[j]).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Builds the repository: sampled normals of both splits plus the successful
/// adversarial examples generated from them (train from train, test from test).
pub fn generate_stage(
    cfg: &Config,
    model: &TrainedModel,
    data: &Datasets,
    mut progress: impl FnMut(Split, usize, usize),
) -> Result<Repository> {
    let seeds: BTreeMap<String, u64> = ["classifier", "normals-train", "normals-test", "gen-train", "gen-test", "background", "detector", "rq2-undersample"]
        .iter()
        .map(|s| (s.to_string(), cfg.stage_seed(s)))
        .chain(std::iter::once(("master".to_string(), cfg.seed)))
        .collect();
    let manifest = Manifest {
        seeds,
        model_sha256: sha256_file(&cfg.classifier_path())?,
        ..Manifest::default()
    };
    let mut repo = Repository::create(&cfg.repository_dir(), manifest)?;
    let mut stats = BTreeMap::new();
    for (split, count, iterations) in [
        (Split::Train, cfg.repository.train_normals, cfg.generator.train_iterations),
        (Split::Test, cfg.repository.test_normals, cfg.generator.test_iterations),
    ] {
        let ds = data.split(split);
        let chosen = select_normals(cfg, model, ds, count, split)?;
        let pred = predictions(model, ds, &chosen)?;
        let normals: Vec<ExampleRecord> = chosen
            .iter()
            .zip(&pred)
            .map(|(&i, &p)| ExampleRecord::normal(split, i, ds.tensor(i), ds.label(i), p))
            .collect();
        repo.append(&normals)?;
        let pool = ds.subset(&chosen);
        let gen = cfg.generator(iterations, &format!("gen-{split}"));
        let (examples, st) =
            generate_adversarial_repository(&model.network, &pool, &gen, |done| progress(split, done, iterations))?;
        let adversarial: Vec<ExampleRecord> = examples
            .iter()
            .map(|ex| {
                let mut r = ExampleRecord::adversarial(split, ex);
                // The generator saw the pool; record the dataset index.
                r.source_index = chosen[ex.source_index];
                r
            })
            .collect();
        repo.append(&adversarial)?;
        stats.insert(split.to_string(), st);
    }
    repo.manifest_mut().generation = stats;
    repo.write_manifest()?;
    Ok(repo)
}

pub fn open_repository(cfg: &Config) -> Result<Repository> {
    Repository::open(&cfg.repository_dir())
}

/// Background activations drawn from the train subset.
pub fn background(cfg: &Config, model: &TrainedModel, data: &Datasets) -> Result<BackgroundSet> {
    let all = Tensor::new(
        std::iter::once(data.train.len()).chain(data.train.image_shape.iter().copied()).collect(),
        data.train.images.clone(),
    )?;
    Ok(BackgroundSet::sample(
        &model.network,
        &all,
        cfg.explainer.background_size,
        cfg.stage_seed("background"),
    )?)
}

/// Computes the signature of every record and rewrites the repository.
pub fn sign_stage(cfg: &Config, model: &TrainedModel, data: &Datasets, repo: &mut Repository) -> Result<()> {
    let bg = background(cfg, model, data)?;
    let mut records = repo.load_all()?;
    for chunk in records.chunks_mut(256) {
        let images: Vec<Tensor<f32>> = chunk.iter().map(|r| r.image.clone()).collect();
        let sigs = xai_signatures(&model.network, &Tensor::stack(&images)?, &bg, cfg.explainer.target)?;
        for (r, s) in chunk.iter_mut().zip(sigs) {
            r.signature = Some(s);
        }
    }
    repo.manifest_mut().background_indices = bg.source_indices.clone();
    repo.manifest_mut().signed = true;
    repo.rewrite(&records)
}

pub fn detector_datasets(repo: &Repository) -> Result<(DetectorDataset, DetectorDataset)> {
    let records = repo.load_all()?;
    Ok((
        build_detector_dataset(&records, Split::Train)?,
        build_detector_dataset(&records, Split::Test)?,
    ))
}

pub fn train_detector_stage(cfg: &Config, repo: &Repository) -> Result<DetectorModel> {
    let (train, _) = detector_datasets(repo)?;
    let model = train_detector(&cfg.detector_config(), &train)?;
    model_io::save_detector(&cfg.detector_path(), &model)?;
    Ok(model)
}

pub fn eval_rq1_stage(cfg: &Config, repo: &Repository, detector: &DetectorModel) -> Result<(EvalReport, Vec<PathBuf>)> {
    let (train, test) = detector_datasets(repo)?;
    let report = evaluate("rq1", detector, &train, &test, &cfg.protocol())?;
    let paths = emit_report(&report, &cfg.reports_dir().join("rq1"), &Format::ALL)?;
    Ok((report, paths))
}

pub fn eval_rq2_stage(cfg: &Config, repo: &Repository) -> Result<(Rq2Report, Vec<PathBuf>)> {
    let (train, test) = detector_datasets(repo)?;
    let report = run_rq2(&train, &test, &cfg.protocol())?;
    let dir = cfg.reports_dir().join("rq2");
    let mut paths = Vec::new();
    for h in &report.holdouts {
        if let Some(r) = &h.report {
            paths.extend(emit_report(r, &dir.join(h.group.replace('/', "-")), &[Format::Csv, Format::Svg])?);
        }
    }
    let summary = cfg.reports_dir().join("rq2.json");
    write_json(&report, &summary)?;
    paths.push(summary);
    Ok((report, paths))
}

pub fn export_stage(repo: &Repository, path: &Path) -> Result<usize> {
    export::export_signatures_csv(&repo.load_all()?, path)
}

/// Outcome of re-checking stored adversarial examples against the classifier.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplaySummary {
    pub checked: usize,
    pub violations: Vec<String>,
}

/// Replays every adversarial record: the classifier must predict the stored
/// target, pixels must lie in `[0, 1]`, and budgeted attacks must stay within
/// `ε + 1e-6` of their source image.
pub fn replay(model: &TrainedModel, data: &Datasets, records: &[ExampleRecord]) -> Result<ReplaySummary> {
    let mut out = ReplaySummary::default();
    let adv: Vec<&ExampleRecord> = records.iter().filter(|r| r.is_adversarial()).collect();
    for chunk in adv.chunks(256) {
        let images: Vec<Tensor<f32>> = chunk.iter().map(|r| r.image.clone()).collect();
        let p = model.network.forward(&Tensor::stack(&images)?)?;
        for (k, r) in chunk.iter().enumerate() {
            let a = r.attack.as_ref().expect("adversarial");
            out.checked += 1;
            let pred = argmax(p.row(k));
            if pred != a.target {
                out.violations.push(format!("{}: predicted {pred}, target {}", r.id, a.target));
            }
            if r.image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                out.violations.push(format!("{}: pixel outside [0, 1]", r.id));
            }
            if let (Some(eps), true) = (a.epsilon, a.method != AttackMethod::CwL2) {
                let src = data.split(r.split).image(r.source_index);
                let delta: Vec<f32> = r.image.data().iter().zip(src).map(|(x, s)| x - s).collect();
                let norm = match a.metric {
                    Metric::Linf => sigdetect_core::tensor::norms::linf(&delta),
                    m => m.norm(&delta),
                };
                if norm > eps + 1e-6 {
                    out.violations.push(format!("{}: {} norm {norm} exceeds {eps}", r.id, a.metric));
                }
            }
        }
    }
    Ok(out)
}
