use sigdetect::report::{curves_csv, curves_svg, emit_report, Format};
use sigdetect_core::detector::{build_detector_network, DetectorModel};
use sigdetect_core::metrics::EvalReport;
use sigdetect_core::protocol::{evaluate, ProtocolConfig};
use sigdetect_core::records::DetectorDataset;

fn report() -> EvalReport {
    let n = 40;
    let features: Vec<f32> = (0..n).flat_map(|i| [i as f32 / n as f32, ((i * 7) % 5) as f32]).collect();
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
    let ds = DetectorDataset {
        features,
        width: 2,
        groups: labels
            .iter()
            .enumerate()
            .map(|(i, &l)| (l == 1).then(|| if i % 2 == 0 { "pgd/linf" } else { "fgsm/l2" }.to_string()))
            .collect(),
        labels,
        ids: (0..n).map(|i| format!("r{i}")).collect(),
    };
    let model = DetectorModel {
        network: build_detector_network(2, &[4], 5).unwrap(),
        history: Vec::new(),
        best_epoch: 0,
    };
    evaluate("toy", &model, &ds, &ds, &ProtocolConfig::default()).unwrap()
}

#[test]
fn json_round_trips() {
    let r = report();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_report(&r, &dir.path().join("toy"), &[Format::Json]).unwrap();
    let back: EvalReport = serde_json::from_str(&std::fs::read_to_string(&paths[0]).unwrap()).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.per_group.len(), 2);
}

#[test]
fn csv_has_one_row_per_curve_point() {
    let r = report();
    let text = curves_csv(&r);
    let mut rows = text.lines();
    assert_eq!(rows.next(), Some("curve,x,y"));
    let rows: Vec<&str> = rows.collect();
    assert_eq!(rows.len(), r.roc.len() + r.pr.len());
    assert_eq!(rows.iter().filter(|l| l.starts_with("roc,")).count(), r.roc.len());
}

#[test]
fn svg_is_well_formed_with_one_path_per_curve() {
    let svg = curves_svg(&report());
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    let paths = root.descendants().filter(|n| n.has_tag_name("path")).count();
    assert_eq!(paths, 2);
    let diagonal = root
        .descendants()
        .filter(|n| n.has_tag_name("line"))
        .count();
    assert_eq!(diagonal, 1);
}

#[test]
fn emit_writes_every_requested_format() {
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_report(&report(), &dir.path().join("nested/toy"), &Format::ALL).unwrap();
    let names: Vec<String> = paths.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["toy.json", "toy.csv", "toy.svg"]);
    assert!(paths.iter().all(|p| p.exists()));
}
