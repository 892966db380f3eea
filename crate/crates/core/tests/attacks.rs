use proptest::prelude::*;
use rand::Rng;
use sigdetect_core::attacks::{
    cw_l2, fgsm, generate_adversarial_repository, iterative_attack, AttackConfig, AttackMethod, CwParams,
    GeneratorConfig, Metric, PreferenceGrid,
};
use sigdetect_core::classifier::argmax;
use sigdetect_core::dataset::LabeledDataset;
use sigdetect_core::rng::stream_rng;
use sigdetect_core::tensor::norms;
use sigdetect_core::{Layer, Network, Tensor};

const D: usize = 12;
const CLASSES: usize = 4;

/// A random ReLU MLP on `D` inputs with large weights, so gradients are steep.
fn random_net(seed: u64) -> Network<f32> {
    let mut rng = stream_rng(seed, "attack-test-net", 0);
    let mut dense = |o: usize, i: usize| {
        Layer::dense(
            Tensor::new(vec![o, i], (0..o * i).map(|_| rng.gen_range(-3.0f32..3.0)).collect()).unwrap(),
            Tensor::new(vec![o], (0..o).map(|_| rng.gen_range(-0.5f32..0.5)).collect()).unwrap(),
        )
        .unwrap()
    };
    let layers = vec![dense(16, D), Layer::Relu, dense(CLASSES, 16), Layer::Softmax];
    Network::new(vec![D], layers).unwrap()
}

fn random_input(seed: u64) -> Tensor<f32> {
    let mut rng = stream_rng(seed, "attack-test-x", 0);
    Tensor::new(vec![D], (0..D).map(|_| rng.gen_range(0.0f32..1.0)).collect()).unwrap()
}

fn predicted(net: &Network<f32>, x: &Tensor<f32>) -> usize {
    argmax(net.forward(x).unwrap().row(0))
}

fn other_class(net: &Network<f32>, x: &Tensor<f32>, pick: usize) -> usize {
    let p = predicted(net, x);
    (p + 1 + pick % (CLASSES - 1)) % CLASSES
}

fn assert_composed(x: &Tensor<f32>, x_adv: &Tensor<f32>, delta: &Tensor<f32>) {
    for ((&a, &d), &v) in x.data().iter().zip(delta.data()).zip(x_adv.data()) {
        assert_eq!(v, (a + d).clamp(0.0, 1.0));
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn l2_projection_holds_over_many_trials() {
    for trial in 0..1000u64 {
        let net = random_net(trial % 50);
        let x = random_input(trial);
        let target = other_class(&net, &x, trial as usize);
        let mut rng = stream_rng(trial, "attack-test-start", 0);
        let eps = rng.gen_range(0.05..2.0);
        let steps = rng.gen_range(1..8);
        let cfg = AttackConfig::pgd(Metric::L2, eps, steps, 2.5 * eps / steps as f64);
        let out = iterative_attack(&net, &x, target, &cfg, &mut rng).unwrap();
        assert!(norms::l2(out.delta.data()) <= eps + 1e-6, "trial {trial}");
        assert!(norms::l2(&diff(&out.x_adv, &x)) <= eps + 1e-6);
        assert_composed(&x, &out.x_adv, &out.delta);
        assert_eq!(out.success, predicted(&net, &out.x_adv) == target);
    }
}

fn diff(a: &Tensor<f32>, b: &Tensor<f32>) -> Vec<f32> {
    a.data().iter().zip(b.data()).map(|(p, q)| p - q).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn linf_attacks_stay_in_budget(seed in any::<u64>(), eps in 0.01f64..0.5, random_start in any::<bool>()) {
        let net = random_net(seed);
        let x = random_input(seed);
        let target = other_class(&net, &x, seed as usize);
        let mut cfg = AttackConfig::bim(Metric::Linf, eps, 10, eps / 4.0);
        cfg.random_start = random_start;
        let out = iterative_attack(&net, &x, target, &cfg, &mut stream_rng(seed, "t", 0)).unwrap();
        prop_assert!(norms::linf(&diff(&out.x_adv, &x)) <= eps + 1e-6);
        assert_composed(&x, &out.x_adv, &out.delta);
        let single = fgsm(&net, &x, target, &AttackConfig::fgsm(Metric::Linf, eps)).unwrap();
        prop_assert!(norms::linf(&diff(&single.x_adv, &x)) <= eps + 1e-6);
        prop_assert_eq!(single.success, predicted(&net, &single.x_adv) == target);
    }

    #[test]
    fn one_step_bim_is_fgsm(seed in any::<u64>(), eps in 0.01f64..1.0, l2 in any::<bool>()) {
        let net = random_net(seed);
        let x = random_input(seed);
        let target = other_class(&net, &x, 1);
        let metric = if l2 { Metric::L2 } else { Metric::Linf };
        let a = fgsm(&net, &x, target, &AttackConfig::fgsm(metric, eps)).unwrap();
        let b = iterative_attack(&net, &x, target, &AttackConfig::bim(metric, eps, 1, eps), &mut stream_rng(0, "t", 0)).unwrap();
        prop_assert_eq!(a.x_adv, b.x_adv);
        prop_assert_eq!(a.success, b.success);
    }
}

#[test]
fn cw_success_means_the_target_logit_wins() {
    let mut wins = 0;
    for seed in 0..20u64 {
        let net = random_net(seed);
        let x = random_input(seed);
        let target = other_class(&net, &x, seed as usize);
        let out = cw_l2(&net, &x, target, &AttackConfig::cw_l2(CwParams::default())).unwrap();
        assert_composed(&x, &out.x_adv, &out.delta);
        if out.success {
            wins += 1;
            let z = net.logits(&out.x_adv).unwrap();
            let zt = z.data()[target];
            assert!(z.data().iter().enumerate().all(|(j, &v)| j == target || v <= zt));
        }
    }
    assert!(wins > 0);
}

#[test]
fn attacks_reject_an_input_already_at_the_target() {
    let net = random_net(3);
    let x = random_input(3);
    let p = predicted(&net, &x);
    assert!(cw_l2(&net, &x, p, &AttackConfig::cw_l2(CwParams::default())).is_err());
}

fn normals(seed: u64, n: usize) -> LabeledDataset {
    let mut rng = stream_rng(seed, "attack-test-normals", 0);
    let images = (0..n * D).map(|_| rng.gen_range(0.0f32..1.0)).collect();
    let labels = (0..n).map(|_| rng.gen_range(0..CLASSES as u8)).collect();
    LabeledDataset::new(images, vec![D], labels, CLASSES).unwrap()
}

fn small_generator(iterations: usize, seed: u64) -> GeneratorConfig {
    let mut grid = PreferenceGrid::default();
    grid.cw.iterations = 20;
    grid.cw.binary_search_steps = 2;
    GeneratorConfig {
        labels: (0..CLASSES).collect(),
        methods: AttackMethod::ALL.to_vec(),
        metrics: vec![Metric::L2, Metric::Linf],
        grid,
        iterations,
        seed,
    }
}

#[test]
fn zero_iterations_store_nothing() {
    let (out, stats) = generate_adversarial_repository(&random_net(1), &normals(1, 5), &small_generator(0, 1), |_| {}).unwrap();
    assert!(out.is_empty());
    assert_eq!(stats.stored, 0);
}

#[test]
fn generator_keeps_only_successful_targeted_examples() {
    let net = random_net(2);
    let pool = normals(2, 30);
    let cfg = small_generator(120, 5);
    let mut calls = 0;
    let (out, stats) = generate_adversarial_repository(&net, &pool, &cfg, |_| calls += 1).unwrap();
    assert_eq!(calls, 120);
    assert!(!out.is_empty());
    assert_eq!(stats.stored, out.len());
    let attempts: usize = stats.attempts.values().sum();
    assert_eq!(attempts + stats.skipped_already_target, 120);
    for ex in &out {
        assert!(ex.outcome.success);
        assert_ne!(ex.outcome.target, ex.true_label);
        assert_eq!(ex.true_label, pool.label(ex.source_index));
        assert_eq!(predicted(&net, &ex.outcome.x_adv), ex.outcome.target);
        if ex.config.method != AttackMethod::CwL2 {
            let n = ex.config.metric.norm(&diff(&ex.outcome.x_adv, &pool.tensor(ex.source_index)));
            assert!(n <= ex.config.epsilon + 1e-6);
        }
    }
}

#[test]
fn generator_is_deterministic() {
    let net = random_net(4);
    let pool = normals(4, 20);
    let cfg = small_generator(60, 9);
    let a = generate_adversarial_repository(&net, &pool, &cfg, |_| {}).unwrap();
    let b = generate_adversarial_repository(&net, &pool, &cfg, |_| {}).unwrap();
    assert_eq!(a, b);
}

#[test]
fn generator_rejects_empty_inputs() {
    let net = random_net(1);
    let empty = LabeledDataset::new(Vec::new(), vec![D], Vec::new(), CLASSES).unwrap();
    assert!(generate_adversarial_repository(&net, &empty, &small_generator(3, 1), |_| {}).is_err());
    let mut cfg = small_generator(3, 1);
    cfg.methods.clear();
    assert!(generate_adversarial_repository(&net, &normals(1, 3), &cfg, |_| {}).is_err());
}
