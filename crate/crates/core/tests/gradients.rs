use proptest::prelude::*;
use sigdetect_core::gradcheck::{kink_margin, oracle_error, random_network};
use sigdetect_core::{Layer, LossSpec, Network, Tensor};

const H: f64 = 1e-5;
const FLOOR: f64 = 1e-5;

fn labels_for(net: &Network<f64>, x: &Tensor<f64>, seed: u64) -> Vec<usize> {
    let k = net.num_classes();
    (0..x.batch_size()).map(|i| (seed as usize + 3 * i) % k).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn reverse_mode_matches_central_differences(seed in any::<u64>()) {
        let (net, x) = random_network(seed);
        prop_assume!(kink_margin(&net, &x).unwrap() > 1e-3);
        let labels = labels_for(&net, &x, seed);
        let err = oracle_error(&net, &x, &labels, H, FLOOR).unwrap();
        prop_assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>()) {
        let (net, x) = random_network(seed);
        let p = net.forward(&x).unwrap();
        for r in 0..p.batch_size() {
            let s: f64 = p.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn batch_forward_equals_per_sample(seed in any::<u64>()) {
        let (net, x) = random_network(seed);
        let all = net.forward(&x).unwrap();
        for r in 0..x.batch_size() {
            let one = Tensor::new(x.shape()[1..].to_vec(), x.row(r).to_vec()).unwrap();
            let p = net.forward(&one).unwrap();
            for (a, b) in p.data().iter().zip(all.row(r)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn duplicated_sample_keeps_the_mean_gradient() {
    let (net, x) = random_network(11);
    let row = Tensor::new(x.shape()[1..].to_vec(), x.row(0).to_vec()).unwrap();
    let two = Tensor::stack(&[row.clone(), row.clone()]).unwrap();
    let (g1, l1) = net.param_gradients(&row, &[1]).unwrap();
    let (g2, l2) = net.param_gradients(&two, &[1, 1]).unwrap();
    assert!((l1 - l2).abs() < 1e-12);
    for (a, b) in g1.iter().zip(g2.iter()) {
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn logit_gradient_of_a_dense_head_is_its_weight_row() {
    let w = Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]).unwrap();
    let net = Network::new(
        vec![3],
        vec![Layer::dense(w, Tensor::zeros(&[2])).unwrap(), Layer::Softmax],
    )
    .unwrap();
    let x = Tensor::new(vec![3], vec![0.2, 0.1, -0.4]).unwrap();
    let g = net.input_gradient(&x, LossSpec::Logit { class: 1 }).unwrap();
    assert_eq!(g.data(), &[3.0, 0.0, -1.0]);
}

#[test]
fn shape_errors_name_the_layer() {
    let (net, _) = random_network(3);
    let wrong = Tensor::<f64>::zeros(&[1, 99]);
    let err = net.forward(&wrong).unwrap_err().to_string();
    assert!(!err.is_empty());
}
