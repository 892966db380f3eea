use std::path::{Path, PathBuf};

use proptest::prelude::*;
use sigdetect::error::Error;
use sigdetect::export::{export_signatures_csv, read_signatures_csv};
use sigdetect::idx::{parse_idx, read_idx};
use sigdetect::model_io::{self, decode, encode, ModelInfo, FORMAT_VERSION, MAGIC};
use sigdetect::repository::{Manifest, Repository, BLOB_FILE, MANIFEST_FILE, RECORDS_FILE};
use sigdetect_core::attacks::{AttackMethod, Metric, Norms};
use sigdetect_core::classifier::{build_network, ClassifierSpec, ModelMetrics, TrainedModel};
use sigdetect_core::detector::{build_detector_network, DetectorModel, EpochLoss};
use sigdetect_core::explainer::XaiSignature;
use sigdetect_core::records::{AttackMeta, ExampleRecord, Split};
use sigdetect_core::Tensor;

fn mnist_dir() -> Option<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    dir.join("train-images-idx3-ubyte").exists().then_some(dir)
}

fn histogram(labels: &[u8]) -> [usize; 10] {
    let mut h = [0; 10];
    labels.iter().for_each(|&l| h[l as usize] += 1);
    h
}

#[test]
fn official_mnist_files_parse_bit_exactly() {
    let Some(dir) = mnist_dir() else {
        eprintln!("MNIST files not found; skipping");
        return;
    };
    for (images, labels, n, first, hist) in [
        (
            "train-images-idx3-ubyte",
            "train-labels-idx1-ubyte",
            60_000,
            [5, 0, 4, 1, 9, 2, 1, 3, 1, 4],
            [5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949],
        ),
        (
            "t10k-images-idx3-ubyte",
            "t10k-labels-idx1-ubyte",
            10_000,
            [7, 2, 1, 0, 4, 1, 4, 9, 5, 9],
            [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009],
        ),
    ] {
        let raw = std::fs::read(dir.join(images)).unwrap();
        let img = read_idx(&dir.join(images), 3).unwrap();
        assert_eq!(img.dims, vec![n, 28, 28]);
        assert_eq!(img.data, raw[16..]);
        let lab = read_idx(&dir.join(labels), 1).unwrap();
        assert_eq!(lab.dims, vec![n]);
        assert_eq!(lab.data[..10], first);
        assert_eq!(histogram(&lab.data), hist);
    }
}

fn label_file(values: &[u8]) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 1];
    b.extend_from_slice(&(values.len() as u32).to_be_bytes());
    b.extend_from_slice(values);
    b
}

#[test]
fn corrupted_idx_headers_are_rejected() {
    let p = Path::new("x.idx");
    let good = label_file(&[1, 2, 3]);
    assert_eq!(parse_idx(&good, 1, p).unwrap().data, vec![1, 2, 3]);
    let mut bad_magic = good.clone();
    bad_magic[0] = 1;
    let mut bad_type = good.clone();
    bad_type[2] = 0x0D;
    let mut bad_rank = good.clone();
    bad_rank[3] = 2;
    let mut bad_count = good.clone();
    bad_count[7] = 4;
    for bytes in [bad_magic, bad_type, bad_rank, bad_count, good[..6].to_vec(), good[..good.len() - 1].to_vec()] {
        assert!(matches!(parse_idx(&bytes, 1, p), Err(Error::Idx { .. })));
    }
}

fn signature(seed: u32) -> XaiSignature {
    XaiSignature {
        neurons: 3,
        classes: 2,
        values: (0..6).map(|i| (seed as f32 + i as f32) * 1e-3 - 0.0025).collect(),
    }
}

fn records() -> Vec<ExampleRecord> {
    let img = |v: f32| Tensor::new(vec![1, 2, 2], vec![v, 0.0, 1.0, 0.25]).unwrap();
    let mut normal = ExampleRecord::normal(Split::Train, 4, img(0.5), 3, 3);
    normal.signature = Some(signature(1));
    let mut adv = ExampleRecord::normal(Split::Test, 7, img(0.75), 1, 6);
    adv.id = "test-a-12".into();
    adv.attack = Some(AttackMeta {
        method: AttackMethod::Pgd,
        metric: Metric::Linf,
        epsilon: Some(0.1),
        steps: 40,
        step_size: 0.00625,
        target: 6,
        norms: Norms::of(&[0.1, -0.05]),
        iteration: 12,
    });
    adv.signature = Some(signature(2));
    let mut cw = adv.clone();
    cw.id = "test-a-13".into();
    cw.attack.as_mut().unwrap().method = AttackMethod::CwL2;
    cw.attack.as_mut().unwrap().metric = Metric::L2;
    cw.attack.as_mut().unwrap().epsilon = None;
    vec![normal, adv, cw]
}

#[test]
fn repository_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let recs = records();
    let mut repo = Repository::create(dir.path(), Manifest::default()).unwrap();
    repo.append(&recs[..1]).unwrap();
    repo.append(&recs[1..]).unwrap();
    let back = Repository::open(dir.path()).unwrap();
    assert_eq!(back.load_all().unwrap(), recs);
    assert_eq!(back.manifest().record_count, 3);
    assert_eq!(back.manifest().counts["train/normal"], 1);
}

#[test]
fn uncommitted_tail_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let recs = records();
    let mut repo = Repository::create(dir.path(), Manifest::default()).unwrap();
    repo.append(&recs[..2]).unwrap();
    let committed = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
    repo.append(&recs[2..]).unwrap();
    // Simulate a crash after the data files were written but before the
    // manifest was updated.
    std::fs::write(dir.path().join(MANIFEST_FILE), committed).unwrap();
    assert_eq!(Repository::open(dir.path()).unwrap().load_all().unwrap(), recs[..2]);
}

#[test]
fn damaged_repositories_report_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let mut repo = Repository::create(dir.path(), Manifest::default()).unwrap();
    repo.append(&records()).unwrap();
    let records_path = dir.path().join(RECORDS_FILE);
    let text = std::fs::read_to_string(&records_path).unwrap();
    std::fs::write(&records_path, text.replacen("\"split\"", "\"spilt\"", 2)).unwrap();
    match repo.load_all() {
        Err(Error::Record { line, .. }) => assert_eq!(line, 1),
        other => panic!("expected a record error, got {other:?}"),
    }
    let blob = dir.path().join(BLOB_FILE);
    let mut bytes = std::fs::read(&blob).unwrap();
    bytes[8] = 9;
    std::fs::write(&blob, &bytes).unwrap();
    assert!(matches!(Repository::open(dir.path()), Err(Error::Version { found: 9, .. })));
    bytes.truncate(20);
    bytes[8] = 1;
    std::fs::write(&blob, &bytes).unwrap();
    assert!(matches!(repo.load_all(), Err(Error::Corrupt { .. })));
}

fn classifier() -> TrainedModel {
    let spec = ClassifierSpec::mnist_cnn(3);
    TrainedModel {
        network: build_network(&spec).unwrap(),
        metrics: ModelMetrics {
            train_accuracy: 0.5,
            test_accuracy: None,
            final_loss: 1.0,
        },
        seed: 3,
        spec,
    }
}

#[test]
fn model_containers_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let c = classifier();
    let path = dir.path().join("c.sgm");
    model_io::save_classifier(&path, &c).unwrap();
    let back = model_io::load_classifier(&path).unwrap();
    assert_eq!(back.network, c.network);
    assert_eq!(back.spec, c.spec);
    let x = Tensor::new(vec![1, 28, 28], (0..784).map(|i| (i % 17) as f32 / 16.0).collect()).unwrap();
    assert_eq!(back.network.forward(&x).unwrap(), c.network.forward(&x).unwrap());

    let d = DetectorModel {
        network: build_detector_network(20, &[8, 4], 1).unwrap(),
        history: vec![EpochLoss { train: 0.7, validation: 0.69 }],
        best_epoch: 0,
    };
    let dpath = dir.path().join("d.sgm");
    model_io::save_detector(&dpath, &d).unwrap();
    assert_eq!(model_io::load_detector(&dpath).unwrap(), d);
    assert!(model_io::load_classifier(&dpath).is_err());
}

#[test]
fn truncated_and_future_models_are_rejected() {
    let c = classifier();
    let info = ModelInfo::Classifier {
        spec: c.spec.clone(),
        metrics: c.metrics.clone(),
        seed: 3,
    };
    let bytes = encode(&c.network, &info);
    assert_eq!(&bytes[..8], MAGIC);
    let p = Path::new("m.sgm");
    assert!(decode(&bytes, p).is_ok());
    assert!(matches!(decode(&bytes[..bytes.len() - 3], p), Err(Error::Corrupt { .. })));
    let mut future = bytes.clone();
    future[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    assert!(matches!(decode(&future, p), Err(Error::Version { .. })));
    assert!(matches!(decode(b"not a model at all", p), Err(Error::Corrupt { .. })));
}

#[test]
fn signature_csv_reparses() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sig.csv");
    let recs = records();
    assert_eq!(export_signatures_csv(&recs, &path).unwrap(), 3);
    let rows = read_signatures_csv(&path).unwrap();
    for (r, row) in recs.iter().zip(&rows) {
        assert_eq!(row.id, r.id);
        assert_eq!(row.adversarial, r.label());
        for (a, b) in r.signature.as_ref().unwrap().values.iter().zip(&row.values) {
            assert!((a - b).abs() <= 1e-6);
        }
    }
    assert_eq!(rows[2].method, "cw_l2");
    let mut unsigned = recs.clone();
    unsigned[1].signature = None;
    assert!(export_signatures_csv(&unsigned, &path).is_err());
}

proptest! {
    #[test]
    fn csv_values_survive_formatting(values in prop::collection::vec(-1e3f32..1e3, 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let mut r = ExampleRecord::normal(Split::Train, 0, Tensor::zeros(&[1]), 0, 0);
        r.signature = Some(XaiSignature { neurons: values.len(), classes: 1, values: values.clone() });
        export_signatures_csv(&[r], &path).unwrap();
        let back = read_signatures_csv(&path).unwrap();
        for (a, b) in values.iter().zip(&back[0].values) {
            prop_assert_eq!(a, b);
        }
    }
}
