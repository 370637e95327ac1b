mod common;

use common::*;
use dlnlab::data::gaussian_batch;
use dlnlab::nonlinear::*;
use dlnlab::rules::*;
use dlnlab::{Batch, Matrix, NetworkSpec};

fn identity_net(dims: &[usize], seed: u64) -> (NonlinearNet, dlnlab::WeightStack) {
    let stack = random_stack(dims, seed);
    let net = NonlinearNet::new(stack.weights().to_vec(), Activation::Identity, Activation::Identity).unwrap();
    (net, stack)
}

fn converged() -> InferenceConfig {
    InferenceConfig { max_steps: 20_000, step_size: 0.1, early_stop_grad_norm: 1e-12, divergence_window: 100 }
}

#[test]
fn identity_inference_matches_analytic_equilibrium() {
    for seed in 0..5 {
        let (net, stack) = identity_net(&[5, 6, 6, 4], seed);
        let batch = gaussian_batch(seed, 0, 5, 4, 3).unwrap();
        let inf = nl_pc_infer(&net, &batch, &converged()).unwrap();
        let eq = pc_equilibrium(&stack, &batch).unwrap();
        for (a, b) in inf.activities.iter().zip(&eq.activities) {
            assert!((a - b).norm() <= 1e-6, "seed {seed}");
        }
    }
}

#[test]
fn identity_updates_match_linear_rules() {
    let (net, stack) = identity_net(&[4, 5, 3, 2], 9);
    let batch = gaussian_batch(9, 1, 4, 2, 3).unwrap();
    let bp_lin = bp_gradients(&stack, &batch).unwrap();
    let bp_nl = nl_bp_deltas(&net, &batch, &RescalingConfig::none()).unwrap();
    for (a, b) in bp_nl.iter().zip(&bp_lin.deltas) {
        assert!((a - b).norm() <= 1e-10);
    }
    let eq = pc_equilibrium(&stack, &batch).unwrap();
    for cfg in [RescalingConfig::none(), RescalingConfig::adaptive()] {
        let lin = pc_report(&stack, &batch, &eq, &cfg).unwrap();
        let nl = nl_pc_deltas(&net, &batch, &eq.activities, &cfg).unwrap();
        for (a, b) in nl.iter().zip(&lin.deltas) {
            assert!((a - b).norm() <= 1e-8);
        }
        let ta = nl_alignment(&net, &batch, &nl).unwrap();
        for (a, b) in ta.iter().zip(&lin.ta_per_sample) {
            assert!((a.unwrap() - b.unwrap()).abs() <= 1e-10);
        }
    }
}

#[test]
fn sigmoid_bp_matches_finite_differences() {
    let spec = NetworkSpec::new(vec![4, 6, 5, 3]).unwrap();
    for seed in 0..5 {
        let net = NonlinearNet::init(&spec, Activation::Relu, Activation::Sigmoid, seed).unwrap();
        let batch = gaussian_batch(seed, 2, 4, 3, 4).unwrap();
        let deltas = nl_bp_deltas(&net, &batch, &RescalingConfig::none()).unwrap();
        let fd: Vec<Matrix> = fd_gradient(net.weights(), 1e-6, |ws| {
            NonlinearNet::new(ws.to_vec(), net.hidden, net.output).unwrap().loss(&batch).unwrap()
        })
        .into_iter()
        .map(|g| -g)
        .collect();
        assert!(max_rel_err(&deltas, &fd) <= 1e-4);
    }
}

fn autoencoder_batch() -> Batch {
    let x = Matrix::from_fn(784, 4, |i, j| ((i * 31 + j * 7) % 256) as f64 / 255.0);
    Batch::new(x.clone(), x).unwrap()
}

fn rises(energies: &[f64]) -> usize {
    energies.windows(2).filter(|w| w[1] > w[0] + 1e-12 * w[0].abs()).count()
}

#[test]
fn inference_energy_is_monotone_for_smooth_autoencoder() {
    let spec = NetworkSpec::new(vec![784, 128, 32, 128, 784]).unwrap();
    let net = NonlinearNet::init(&spec, Activation::Identity, Activation::Sigmoid, 1).unwrap();
    let cfg = InferenceConfig { max_steps: 1000, ..InferenceConfig::default() };
    let inf = nl_pc_infer(&net, &autoencoder_batch(), &cfg).unwrap();
    assert_eq!(rises(&inf.energies), 0);
}

#[test]
fn relu_inference_descends_until_kinks_are_reached() {
    // Once activities sit on ReLU kinks the iterates chatter; the initial descent is monotone.
    let spec = NetworkSpec::new(vec![784, 128, 32, 128, 784]).unwrap();
    let net = NonlinearNet::init(&spec, Activation::Relu, Activation::Sigmoid, 1).unwrap();
    let cfg = InferenceConfig { max_steps: 500, ..InferenceConfig::default() };
    let inf = nl_pc_infer(&net, &autoencoder_batch(), &cfg).unwrap();
    assert_eq!(rises(&inf.energies[..80]), 0);
    let e0 = inf.energies[0];
    assert!(inf.energies.iter().all(|&e| e <= e0));
    assert!(*inf.energies.last().unwrap() < e0);
}

#[test]
fn inference_gradient_matches_directional_derivative() {
    let spec = NetworkSpec::new(vec![10, 8, 6, 8, 10]).unwrap();
    let net = NonlinearNet::init(&spec, Activation::Relu, Activation::Sigmoid, 3).unwrap();
    let batch = gaussian_batch(3, 0, 10, 10, 3).unwrap();
    let h = 1e-7;
    let start = nl_pc_infer(&net, &batch, &InferenceConfig { max_steps: 0, ..Default::default() }).unwrap();
    let one = nl_pc_infer(&net, &batch, &InferenceConfig { max_steps: 1, step_size: h, ..Default::default() }).unwrap();
    let slope = (one.energies[1] - one.energies[0]) / h;
    let want = -start.final_grad_norm.powi(2);
    assert!((slope - want).abs() <= 1e-5 * want.abs(), "{slope} vs {want}");
}

#[test]
fn small_steps_reduce_autoencoder_loss() {
    let spec = NetworkSpec::new(vec![64, 32, 16, 32, 64]).unwrap();
    let net = NonlinearNet::init(&spec, Activation::Relu, Activation::Sigmoid, 2).unwrap();
    let x = Matrix::from_fn(64, 8, |i, j| ((i * 13 + j * 5) % 17) as f64 / 16.0);
    let batch = Batch::new(x.clone(), x).unwrap();
    let before = net.loss(&batch).unwrap();
    let bp = nl_bp_step(&net, &batch, 1e-2, &RescalingConfig::none()).unwrap();
    assert!(bp.loss(&batch).unwrap() < before);
    let inf = nl_pc_infer(&net, &batch, &InferenceConfig { max_steps: 200, ..Default::default() }).unwrap();
    let pc = nl_pc_step(&net, &batch, &inf.activities, 1e-2, &RescalingConfig::none()).unwrap();
    assert!(pc.loss(&batch).unwrap() < before);
}

#[test]
fn divergence_is_reported() {
    let (net, _) = identity_net(&[3, 3, 3], 0);
    let batch = gaussian_batch(0, 0, 3, 3, 1).unwrap();
    let cfg = InferenceConfig { max_steps: 1000, step_size: 50.0, early_stop_grad_norm: 0.0, divergence_window: 5 };
    assert!(matches!(nl_pc_infer(&net, &batch, &cfg), Err(dlnlab::Error::InferenceDiverged { .. })));
}
