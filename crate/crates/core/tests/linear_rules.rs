mod common;

use common::*;
use dlnlab::data::{gaussian_batch, Batch};
use dlnlab::rules::*;
use dlnlab::{Matrix, WeightStack};

fn toy() -> (WeightStack, Batch) {
    let stack = WeightStack::new(vec![Matrix::from_element(1, 1, 1.0), Matrix::from_element(2, 1, 1.0)]).unwrap();
    let batch = Batch::new(Matrix::from_element(1, 1, 1.0), Matrix::from_column_slice(2, 1, &[-1.0, 1.0])).unwrap();
    (stack, batch)
}

// Hand-derived values for the 1-1-2 all-ones network, x = 1, y = [-1, 1]:
// r = [-2, 0], S = [[2, 1], [1, 2]], ε_2 = S⁻¹r = [-4/3, 2/3], x*_1 = 1/3.
// BP:  dŷ = W_2W_2ᵀr·1 + r·1 = [-4, -2],          TA = 8 / (2√20)
// PC:  dŷ = [-2/3, -2/3] + (1/3)[-4/3, 2/3] = [-10/9, -4/9],  TA = 10/√116
#[test]
fn toy_network_hand_oracle() {
    let (stack, batch) = toy();
    let bp = bp_gradients(&stack, &batch).unwrap();
    assert!((bp.predicted_dydt[(0, 0)] + 4.0).abs() < 1e-14);
    assert!((bp.predicted_dydt[(1, 0)] + 2.0).abs() < 1e-14);
    assert!((bp.mean_ta().unwrap() - 8.0 / (2.0 * 20f64.sqrt())).abs() < 1e-12);
    assert!((bp.mean_ta().unwrap() - 0.8944).abs() < 1e-4);

    let eq = pc_equilibrium(&stack, &batch).unwrap();
    let pc = pc_gradients(&stack, &batch, &eq).unwrap();
    assert!((pc.predicted_dydt[(0, 0)] + 10.0 / 9.0).abs() < 1e-14);
    assert!((pc.predicted_dydt[(1, 0)] + 4.0 / 9.0).abs() < 1e-14);
    assert!((pc.mean_ta().unwrap() - 10.0 / 116f64.sqrt()).abs() < 1e-12);
    assert!((pc.mean_ta().unwrap() - 0.9285).abs() < 1e-4);

    let ad = pc_report(&stack, &batch, &eq, &RescalingConfig::adaptive()).unwrap();
    assert!((&ad.predicted_dydt - &ad.residual).norm() < 1e-14);
}

#[test]
fn closed_form_prediction_changes_match_reports() {
    let stack = random_stack(&[5, 7, 6, 4], 3);
    let batch = gaussian_batch(3, 0, 5, 4, 3).unwrap();
    let b = 3.0;
    let ws = stack.weights();
    let xhat = stack.forward(&batch.x).unwrap().activities;
    let r = &batch.y - composite(ws) * &batch.x;
    let s_inv = s_brute(ws).try_inverse().unwrap();
    let eq = pc_equilibrium(&stack, &batch).unwrap();
    let dims = [5, 7, 6, 4];

    let mut bp_oracle = Matrix::zeros(4, 3);
    let mut pc_oracle = Matrix::zeros(4, 3);
    for l in 1..=3 {
        let p = product(ws, 3, l + 1, dims[l]);
        let pp = &p * p.transpose();
        bp_oracle += &pp * &r * xhat[l - 1].transpose() * &xhat[l - 1] / b;
        pc_oracle += &pp * &s_inv * &r * eq.activities[l - 1].transpose() * &xhat[l - 1] / b;
    }
    let bp = bp_gradients(&stack, &batch).unwrap();
    let pc = pc_gradients(&stack, &batch, &eq).unwrap();
    assert!((&bp.predicted_dydt - &bp_oracle).norm() <= 1e-12 * bp_oracle.norm());
    assert!((&pc.predicted_dydt - &pc_oracle).norm() <= 1e-12 * pc_oracle.norm());

    // PC deltas: local ε*_l x*ᵀ equals W_{L:l+1}ᵀ S⁻¹ R x*ᵀ
    for l in 1..=3 {
        let p = product(ws, 3, l + 1, dims[l]);
        let want = p.transpose() * &s_inv * &r * eq.activities[l - 1].transpose() / b;
        assert!((&pc.deltas[l - 1] - &want).norm() <= 1e-12 * want.norm());
    }
}

#[test]
fn s_matrix_matches_enumeration() {
    let stack = random_stack(&[3, 6, 2, 5], 8);
    assert!((s_matrix(&stack) - s_brute(stack.weights())).norm() < 1e-13);
}

#[test]
fn equilibrium_invariants_and_stationarity() {
    for seed in 0..10 {
        let stack = random_stack(&[4, 6, 5, 3], seed);
        let batch = gaussian_batch(seed, 1, 4, 3, 2).unwrap();
        let eq = pc_equilibrium(&stack, &batch).unwrap();
        let ws = stack.weights();
        assert_eq!(eq.activities[0], batch.x);
        assert_eq!(eq.activities[3], batch.y);
        for l in 1..=3 {
            let e = &eq.activities[l] - &ws[l - 1] * &eq.activities[l - 1];
            assert!((&e - &eq.errors[l - 1]).norm() < 1e-10);
        }
        for l in 1..3 {
            assert!((&eq.errors[l - 1] - ws[l].transpose() * &eq.errors[l]).norm() < 1e-12);
        }
        let r = &batch.y - composite(ws) * &batch.x;
        assert!((&eq.s * eq.s_inv_r() - r).norm() < 1e-10);
        let g = hidden_gradient(ws, &eq.activities);
        let gnorm: f64 = g.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        assert!(gnorm <= 1e-9, "stationarity violated: {gnorm}");
    }
}

#[test]
fn analytic_equilibrium_is_a_fixed_point_of_relaxation() {
    for seed in 0..3 {
        let stack = random_stack(&[5, 6, 6, 4], seed);
        let batch = gaussian_batch(seed, 2, 5, 4, 1).unwrap();
        let eq = pc_equilibrium(&stack, &batch).unwrap();
        let mut acts = eq.activities.clone();
        relax(stack.weights(), &mut acts, 10_000, 0.05);
        let moved: f64 = acts.iter().zip(&eq.activities).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
        assert!(moved <= 1e-8, "moved {moved}");
    }
}

#[test]
fn bp_deltas_match_finite_differences() {
    for seed in 0..20 {
        let depth = 1 + (seed as usize % 3);
        let mut dims = vec![3 + seed as usize % 3];
        for k in 0..depth {
            dims.push(2 + (seed as usize + k) % 4);
        }
        let stack = random_stack(&dims, seed);
        let batch = gaussian_batch(seed, 3, dims[0], *dims.last().unwrap(), 3).unwrap();
        let rep = bp_gradients(&stack, &batch).unwrap();
        let fd: Vec<Matrix> = fd_gradient(stack.weights(), 1e-5, |w| bp_loss(w, &batch))
            .into_iter()
            .map(|g| -g)
            .collect();
        let err = max_rel_err(&rep.deltas, &fd);
        assert!(err <= 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn pc_deltas_match_finite_differences_of_equilibrated_energy() {
    for seed in 0..20 {
        let depth = 1 + (seed as usize % 3);
        let mut dims = vec![3 + seed as usize % 3];
        for k in 0..depth {
            dims.push(2 + (seed as usize + k) % 4);
        }
        let stack = random_stack(&dims, seed + 100);
        let batch = gaussian_batch(seed, 4, dims[0], *dims.last().unwrap(), 3).unwrap();
        let rep = update_report(&stack, &batch, Rule::Pc, &RescalingConfig::none()).unwrap();
        let fd: Vec<Matrix> = fd_gradient(stack.weights(), 1e-5, |w| equilibrated_energy(w, &batch))
            .into_iter()
            .map(|g| -g)
            .collect();
        let err = max_rel_err(&rep.deltas, &fd);
        assert!(err <= 1e-5, "seed {seed}: {err}");
    }
}

// 1-1-2 net with W_1 = 2, W_2 = [1, 1]ᵀ, x = 1, y = [-1, 0.5]: r = [-3, -1.5],
// wᵀS⁻¹r = wᵀr / (1 + ‖w‖²) = -3/2, x*_1 = 1/2, so x*_0 x̂_0 = x*_1 x̂_1 = 1.
#[test]
fn equal_layer_overlaps_cancel_interference() {
    let stack = WeightStack::new(vec![Matrix::from_element(1, 1, 2.0), Matrix::from_element(2, 1, 1.0)]).unwrap();
    let batch = Batch::new(Matrix::from_element(1, 1, 1.0), Matrix::from_column_slice(2, 1, &[-1.0, 0.5])).unwrap();
    let eq = pc_equilibrium(&stack, &batch).unwrap();
    assert!((eq.activities[1][(0, 0)] - 0.5).abs() < 1e-15);
    let pc = pc_gradients(&stack, &batch, &eq).unwrap();
    let expect = Matrix::from_column_slice(2, 1, &[-3.0, -1.5]);
    assert!((&pc.predicted_dydt - expect).norm() < 1e-14);
    assert!((pc.mean_ta().unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn small_bp_step_decreases_loss() {
    for seed in 0..5 {
        let stack = random_stack(&[6, 8, 8, 4], seed);
        let batch = gaussian_batch(seed, 5, 6, 4, 4).unwrap();
        let rep = bp_gradients(&stack, &batch).unwrap();
        let next = apply_update(&stack, &rep, DEFAULT_ONE_STEP_LR).unwrap();
        assert!(bp_loss(next.weights(), &batch) < bp_loss(stack.weights(), &batch));
    }
}

#[test]
fn observed_change_converges_first_order() {
    let stack = random_stack(&[5, 6, 6, 5], 4);
    let batch = gaussian_batch(4, 6, 5, 5, 2).unwrap();
    for rule in [Rule::Bp, Rule::Pc] {
        let rep = update_report(&stack, &batch, rule, &RescalingConfig::none()).unwrap();
        let before = composite(stack.weights()) * &batch.x;
        let errs: Vec<f64> = [1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&lr| {
                let next = apply_update(&stack, &rep, lr).unwrap();
                let after = composite(next.weights()) * &batch.x;
                ((after - &before) / lr - &rep.predicted_dydt).norm()
            })
            .collect();
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log10();
            assert!((slope - 1.0).abs() < 0.2, "{rule:?}: {errs:?}");
        }
    }
}

#[test]
fn alignment_is_independent_of_step_scale() {
    let stack = random_stack(&[4, 5, 3], 1);
    let batch = gaussian_batch(1, 0, 4, 3, 1).unwrap();
    let rep = bp_gradients(&stack, &batch).unwrap();
    let ta = rep.mean_ta().unwrap();
    for lr in [1e-6, 1e-4, 1e-2] {
        let next = apply_update(&stack, &rep, lr).unwrap();
        let dy = (composite(next.weights()) - composite(stack.weights())) * &batch.x;
        let r: Vec<f64> = rep.residual.iter().copied().collect();
        let d: Vec<f64> = dy.iter().copied().collect();
        // finite steps drift by O(lr)
        assert!((cosine(&r, &d) - ta).abs() < 10.0 * lr);
    }
}
