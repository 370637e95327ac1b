mod common;

use common::*;
use dlnlab::data::gaussian_batch;
use dlnlab::rules::*;
use dlnlab::Matrix;
use proptest::prelude::*;

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..7, 2..7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adaptive_pc_aligns_single_samples(dims in dims_strategy(), seed in 0u64..10_000) {
        let stack = random_stack(&dims, seed);
        let batch = gaussian_batch(seed, 0, dims[0], *dims.last().unwrap(), 1).unwrap();
        let rep = match update_report(&stack, &batch, Rule::Pc, &RescalingConfig::adaptive()) {
            Ok(r) => r,
            Err(dlnlab::Error::DegenerateActivity { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        if let Some(ta) = rep.mean_ta() {
            prop_assert!((ta - 1.0).abs() <= 1e-6, "ta = {ta}");
            prop_assert!((&rep.predicted_dydt - &rep.residual).norm() <= 1e-6 * rep.residual.norm());
        }
    }

    #[test]
    fn decorrelated_pc_aligns_small_batches(hidden in 1usize..5, batch_size in 1usize..5, seed in 0u64..10_000) {
        let dims: Vec<usize> = std::iter::repeat(20).take(hidden + 2).collect();
        let stack = random_stack(&dims, seed);
        let batch = gaussian_batch(seed, 1, 20, 20, batch_size).unwrap();
        let cfg = RescalingConfig::decorrelation(InversePolicy::PseudoInverse);
        let rep = update_report(&stack, &batch, Rule::Pc, &cfg).unwrap();
        for ta in rep.ta_per_sample.iter().flatten() {
            prop_assert!((ta - 1.0).abs() <= 1e-6, "ta = {ta}");
        }
    }
}

#[test]
fn decorrelation_whitens_activities() {
    let stack = random_stack(&[20, 20, 20, 20], 5);
    let batch = gaussian_batch(5, 0, 20, 20, 4).unwrap();
    let eq = pc_equilibrium(&stack, &batch).unwrap();
    let factors = decorrelation_factors(&eq, &RescalingConfig::decorrelation(InversePolicy::PseudoInverse)).unwrap();
    for (l, a) in factors.iter().enumerate() {
        let m = eq.activities[l].transpose() * a * &eq.feedforward[l];
        assert!((m - Matrix::identity(4, 4) * 4.0).norm() < 1e-8, "layer {}", l + 1);
    }
}

#[test]
fn decorrelation_equals_adaptive_for_single_samples() {
    for seed in 0..10 {
        let stack = random_stack(&[6, 5, 7, 4], seed);
        let batch = gaussian_batch(seed, 2, 6, 4, 1).unwrap();
        let eq = pc_equilibrium(&stack, &batch).unwrap();
        let ad = pc_report(&stack, &batch, &eq, &RescalingConfig::adaptive()).unwrap();
        let de = pc_report(&stack, &batch, &eq, &RescalingConfig::decorrelation(InversePolicy::PseudoInverse)).unwrap();
        let scale = ad.predicted_dydt.norm();
        assert!((&ad.predicted_dydt - &de.predicted_dydt).norm() <= 1e-9 * scale);
    }
}

#[test]
fn adaptive_factors_match_overlaps() {
    let stack = random_stack(&[3, 4, 4, 2], 1);
    let batch = gaussian_batch(1, 3, 3, 2, 5).unwrap();
    let eq = pc_equilibrium(&stack, &batch).unwrap();
    let alphas = adaptive_lr_factors(&eq, 0.0).unwrap();
    for l in 0..3 {
        let mut overlap = 0.0;
        for b in 0..5 {
            for i in 0..eq.activities[l].nrows() {
                overlap += eq.activities[l][(i, b)] * eq.feedforward[l][(i, b)];
            }
        }
        assert!((alphas[l] - 5.0 / overlap).abs() <= 1e-12 * alphas[l].abs());
    }
}

#[test]
fn excluding_output_layer_leaves_it_unscaled() {
    let stack = random_stack(&[4, 5, 3], 2);
    let batch = gaussian_batch(2, 0, 4, 3, 2).unwrap();
    let plain = update_report(&stack, &batch, Rule::Pc, &RescalingConfig::none()).unwrap();
    let cfg = RescalingConfig { adaptive_layers: AdaptiveLayers::ExcludeOutput, ..RescalingConfig::adaptive() };
    let partial = update_report(&stack, &batch, Rule::Pc, &cfg).unwrap();
    assert_eq!(plain.deltas[1], partial.deltas[1]);
    assert_ne!(plain.deltas[0], partial.deltas[0]);
}

#[test]
fn spectral_shift_bounds_the_spectrum() {
    assert_eq!(spectral_shift(10.0, 5.0, 1e-4), 0.0);
    assert!((spectral_shift(10.0, -1.0, 0.1) - 2.0).abs() < 1e-15);
    let pre = Matrix::from_fn(6, 3, |i, j| ((i * 3 + j) as f64).sin());
    let post = Matrix::from_fn(6, 3, |i, j| ((i + 2 * j) as f64).cos());
    let a = decorrelation_matrix(&pre, &post, InversePolicy::SpectralRegularized { alpha: 1e-2 }).unwrap();
    assert!(a.iter().all(|v| v.is_finite()));
    let unreg = decorrelation_matrix(&pre, &post, InversePolicy::PseudoInverse).unwrap();
    assert!(a.norm() <= unreg.norm() * 1e3);
    assert!(RescalingConfig::decorrelation(InversePolicy::SpectralRegularized { alpha: 0.0 })
        .validate()
        .is_err());
}

#[test]
fn bp_rescalings_use_feedforward_activities() {
    let stack = random_stack(&[3, 3, 3], 7);
    let batch = gaussian_batch(7, 0, 3, 3, 1).unwrap();
    let plain = bp_gradients(&stack, &batch).unwrap();
    let ad = bp_report(&stack, &batch, &RescalingConfig::adaptive()).unwrap();
    let xhat = stack.forward(&batch.x).unwrap().activities;
    for l in 0..2 {
        let alpha = 1.0 / xhat[l].norm_squared();
        assert!((&ad.deltas[l] - &plain.deltas[l] * alpha).norm() <= 1e-12 * ad.deltas[l].norm());
    }
}

#[test]
fn degenerate_overlap_is_reported() {
    let stack = random_stack(&[3, 3, 3], 1);
    let batch = dlnlab::Batch::new(Matrix::zeros(3, 1), Matrix::from_element(3, 1, 1.0)).unwrap();
    let err = update_report(&stack, &batch, Rule::Pc, &RescalingConfig::adaptive()).unwrap_err();
    assert!(matches!(err, dlnlab::Error::DegenerateActivity { layer: 1, .. }));
}
