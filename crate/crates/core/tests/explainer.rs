use proptest::prelude::*;
use rand::Rng;
use sigdetect_core::explainer::{flatten, unflatten, BackgroundSet, ExplainTarget, Explainer};
use sigdetect_core::rng::stream_rng;
use sigdetect_core::{Layer, Tensor};

fn random_dense(rng: &mut impl Rng, out: usize, inp: usize) -> Layer<f64> {
    Layer::dense(
        Tensor::new(vec![out, inp], (0..out * inp).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
        Tensor::new(vec![out], (0..out).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap(),
    )
    .unwrap()
}

fn random_background(rng: &mut impl Rng, k: usize, d: usize) -> BackgroundSet {
    let rows = (0..k)
        .map(|_| (0..d).map(|_| rng.gen_range(0.0f32..2.0)).collect())
        .collect();
    BackgroundSet::new(rows, 0, (0..k).collect()).unwrap()
}

fn to_f64(b: &BackgroundSet) -> Vec<Vec<f64>> {
    b.activations
        .iter()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Completeness for a dense-ReLU-dense head, for both explained outputs.
    #[test]
    fn attributions_sum_to_output_minus_baseline(seed in any::<u64>(), probs in any::<bool>()) {
        let mut rng = stream_rng(seed, "explainer-test", 0);
        let (d, h, n, k) = (rng.gen_range(1..8), rng.gen_range(1..8), rng.gen_range(2..6), rng.gen_range(1..10));
        let head = vec![random_dense(&mut rng, h, d), Layer::Relu, random_dense(&mut rng, n, h)];
        let target = if probs { ExplainTarget::Probabilities } else { ExplainTarget::Logits };
        let ex = Explainer::from_head(head, d, target).unwrap();
        let bg = random_background(&mut rng, k, d);
        let a: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..2.0)).collect();
        let phi = ex.attribute(&a, &bg).unwrap();
        let out = ex.outputs(&a);
        let base = ex.mean_background_output(&bg);
        for j in 0..n {
            prop_assert!((phi.class_total(j) - (out[j] - base[j])).abs() <= 1e-9);
        }
    }

    /// For a single dense layer the attribution is `W[j][i] (a_i - mean_b b_i)`.
    #[test]
    fn linear_head_matches_closed_form(seed in any::<u64>()) {
        let mut rng = stream_rng(seed, "explainer-test", 1);
        let (d, n, k) = (rng.gen_range(1..12), rng.gen_range(2..8), rng.gen_range(1..16));
        let layer = random_dense(&mut rng, n, d);
        let Layer::Dense { weight, .. } = &layer else { unreachable!() };
        let w = weight.data().to_vec();
        let ex = Explainer::from_head(vec![layer], d, ExplainTarget::Logits).unwrap();
        let bg = random_background(&mut rng, k, d);
        let a: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..2.0)).collect();
        let phi = ex.attribute(&a, &bg).unwrap();
        let rows = to_f64(&bg);
        for i in 0..d {
            let mean_b = rows.iter().map(|r| r[i]).sum::<f64>() / k as f64;
            for j in 0..n {
                let expect = w[j * d + i] * (a[i] - mean_b);
                prop_assert!((phi.get(i, j) - expect).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn background_order_does_not_matter(seed in any::<u64>()) {
        let mut rng = stream_rng(seed, "explainer-test", 2);
        let (d, n) = (4, 3);
        let head = vec![random_dense(&mut rng, 5, d), Layer::Relu, random_dense(&mut rng, n, 5)];
        let ex = Explainer::from_head(head, d, ExplainTarget::Logits).unwrap();
        let bg = random_background(&mut rng, 7, d);
        let mut rev = bg.clone();
        rev.activations.reverse();
        let a: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..2.0)).collect();
        prop_assert_eq!(ex.attribute(&a, &bg).unwrap(), ex.attribute(&a, &rev).unwrap());
    }

    #[test]
    fn flatten_round_trips(d in 1usize..10, n in 1usize..10, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, "explainer-test", 3);
        let m: Vec<Vec<f64>> = (0..d).map(|_| (0..n).map(|_| rng.gen()).collect()).collect();
        let flat = flatten(&m);
        prop_assert_eq!(flat.len(), d * n);
        prop_assert_eq!(unflatten(&flat, d, n).unwrap(), m);
    }
}

#[test]
fn input_equal_to_the_only_baseline_has_zero_attribution() {
    let mut rng = stream_rng(9, "explainer-test", 4);
    let head = vec![random_dense(&mut rng, 3, 2), Layer::Relu, random_dense(&mut rng, 2, 3)];
    let ex = Explainer::from_head(head, 2, ExplainTarget::Logits).unwrap();
    let bg = BackgroundSet::new(vec![vec![0.5, 1.5]], 0, vec![0]).unwrap();
    let phi = ex.attribute(&[0.5, 1.5], &bg).unwrap();
    assert!(phi.values.iter().all(|&v| v == 0.0));
}

#[test]
fn width_mismatch_is_rejected() {
    let mut rng = stream_rng(1, "explainer-test", 5);
    let ex = Explainer::from_head(vec![random_dense(&mut rng, 2, 3)], 3, ExplainTarget::Logits).unwrap();
    let bg = random_background(&mut rng, 2, 3);
    assert!(ex.attribute(&[1.0, 2.0], &bg).is_err());
    assert!(unflatten(&[1.0, 2.0, 3.0], 2, 2).is_err());
}
