//! Target alignment, conditioning and distance measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dims, singular_values, Matrix};
use crate::network::WeightStack;

/// Norms at or below this are treated as zero when computing alignment.
pub const ALIGNMENT_FLOOR: f64 = 1e-12;

/// Smallest singular value treated as nonzero by [`condition_number`].
pub const SIGMA_MIN_FLOOR: f64 = 1e-300;

/// Cosine between a residual and a prediction change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// `None` when either vector has norm at or below [`ALIGNMENT_FLOOR`].
    pub value: Option<f64>,
    pub residual_norm: f64,
    pub dydt_norm: f64,
}

impl AlignmentResult {
    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }
}

/// `rᵀ Δŷ / (‖r‖ ‖Δŷ‖)`.
pub fn target_alignment(r: &[f64], dydt: &[f64]) -> Result<AlignmentResult> {
    if r.len() != dydt.len() {
        return Err(Error::InvalidArgument(format!(
            "residual has length {}, prediction change {}",
            r.len(),
            dydt.len()
        )));
    }
    let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dn = dydt.iter().map(|v| v * v).sum::<f64>().sqrt();
    let value = if rn <= ALIGNMENT_FLOOR || dn <= ALIGNMENT_FLOOR || !rn.is_finite() || !dn.is_finite() {
        None
    } else {
        let dot: f64 = r.iter().zip(dydt).map(|(a, b)| a * b).sum();
        Some((dot / (rn * dn)).clamp(-1.0, 1.0))
    };
    Ok(AlignmentResult { value, residual_norm: rn, dydt_norm: dn })
}

/// Per-column alignment of two `d × B` matrices.
pub fn column_alignment(r: &Matrix, dydt: &Matrix) -> Result<Vec<AlignmentResult>> {
    if r.shape() != dydt.shape() {
        return Err(Error::InvalidArgument(format!(
            "residual is {}, prediction change is {}",
            dims(r),
            dims(dydt)
        )));
    }
    (0..r.ncols())
        .map(|b| {
            let rc: Vec<f64> = r.column(b).iter().copied().collect();
            let dc: Vec<f64> = dydt.column(b).iter().copied().collect();
            target_alignment(&rc, &dc)
        })
        .collect()
}

/// Mean over the defined entries; `None` if none are defined.
pub fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let (sum, n) = values
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// `σ_max / σ_min` over the `min(m, n)` singular values; `+∞` when `σ_min` underflows.
pub fn condition_number(w: &Matrix) -> Result<f64> {
    let s = singular_values(w);
    let smax = s.first().copied().unwrap_or(0.0);
    if !(smax > 0.0) {
        return Err(Error::InvalidArgument("condition number of a zero matrix".into()));
    }
    let smin = *s.last().expect("non-empty");
    if smin <= SIGMA_MIN_FLOOR {
        return Ok(f64::INFINITY);
    }
    Ok(smax / smin)
}

/// Per-layer condition numbers of a stack.
pub fn layer_condition_numbers(stack: &WeightStack) -> Vec<f64> {
    stack
        .weights()
        .iter()
        .map(|w| condition_number(w).unwrap_or(f64::INFINITY))
        .collect()
}

/// Squared Frobenius distance `‖W_data − W_{L:1}‖²_F`.
pub fn weight_distance(stack: &WeightStack, w_data: &Matrix) -> Result<f64> {
    let c = stack.composite();
    if c.shape() != w_data.shape() {
        return Err(Error::Shape { layer: stack.depth(), expected: dims(w_data), got: dims(&c) });
    }
    Ok((w_data - c).norm_squared())
}

/// Batch-mean Euclidean norm of each activity matrix.
pub fn activity_norms(activities: &[Matrix]) -> Vec<f64> {
    activities
        .iter()
        .map(|a| {
            let b = a.ncols().max(1) as f64;
            a.column_iter().map(|c| c.norm()).sum::<f64>() / b
        })
        .collect()
}

/// Batch-mean of `½‖y_b − ŷ_b‖²`.
pub fn mse_loss(residual: &Matrix) -> f64 {
    0.5 * residual.norm_squared() / residual.ncols().max(1) as f64
}

/// Sample mean and standard deviation (n − 1 denominator; zero for n < 2).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, _) = mean_sd(&rx);
    let (my, _) = mean_sd(&ry);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{initialize, set_condition_number, InitScheme, NetworkSpec};
    use proptest::prelude::*;

    #[test]
    fn alignment_basic_cases() {
        assert_eq!(target_alignment(&[1.0, 0.0], &[1.0, 0.0]).unwrap().value, Some(1.0));
        assert_eq!(target_alignment(&[1.0, 0.0], &[0.0, 1.0]).unwrap().value, Some(0.0));
        let toy = target_alignment(&[-2.0, 0.0], &[-4.0, -2.0]).unwrap().value.unwrap();
        assert!((toy - 8.0 / (2.0 * 20f64.sqrt())).abs() < 1e-12);
        assert!((toy - 0.894427).abs() < 1e-6);
    }

    #[test]
    fn alignment_undefined_at_zero() {
        let a = target_alignment(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(!a.is_defined());
        let b = target_alignment(&[1.0, 0.0], &[1e-13, 0.0]).unwrap();
        assert!(!b.is_defined());
        assert!(target_alignment(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mean_skips_undefined() {
        assert_eq!(mean_defined(&[Some(1.0), None, Some(0.0)]), Some(0.5));
        assert_eq!(mean_defined(&[None]), None);
    }

    #[test]
    fn condition_number_cases() {
        assert!((condition_number(&Matrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-14);
        let d = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0]));
        assert!((condition_number(&d).unwrap() - 2.0).abs() < 1e-14);
        assert!(condition_number(&Matrix::zeros(2, 2)).is_err());
        let singular = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(condition_number(&singular).unwrap(), f64::INFINITY);
    }

    #[test]
    fn conditioning_round_trip() {
        let spec = NetworkSpec::new(vec![10, 10]).unwrap();
        let w = initialize(&spec, &InitScheme::kaiming(2)).unwrap().weights()[0].clone();
        let c = set_condition_number(&w, 50.0).unwrap();
        assert!((condition_number(&c).unwrap() / 50.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn weight_distance_cases() {
        let s = crate::network::WeightStack::new(vec![Matrix::identity(2, 2)]).unwrap();
        assert_eq!(weight_distance(&s, &Matrix::identity(2, 2)).unwrap(), 0.0);
        assert_eq!(weight_distance(&s, &Matrix::zeros(2, 2)).unwrap(), 2.0);
        assert!(weight_distance(&s, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn weight_distance_matches_elementwise_sum() {
        let spec = NetworkSpec::new(vec![20, 20]).unwrap();
        let a = initialize(&spec, &InitScheme::norm_preserving(1)).unwrap();
        let b = initialize(&spec, &InitScheme::norm_preserving(2)).unwrap().weights()[0].clone();
        let mut oracle = 0.0;
        for i in 0..20 {
            for j in 0..20 {
                let d = b[(i, j)] - a.weights()[0][(i, j)];
                oracle += d * d;
            }
        }
        let got = weight_distance(&a, &b).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn spearman_monotone() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 5.0, 9.0]) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn alignment_scale_invariant_and_antisymmetric(
            r in prop::collection::vec(-10.0f64..10.0, 3),
            d in prop::collection::vec(-10.0f64..10.0, 3),
            c in 0.01f64..100.0,
        ) {
            let base = target_alignment(&r, &d).unwrap();
            prop_assume!(base.is_defined());
            let v = base.value.unwrap();
            let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
            let rs: Vec<f64> = r.iter().map(|x| x * c).collect();
            let neg: Vec<f64> = d.iter().map(|x| -x).collect();
            prop_assert!((target_alignment(&r, &scaled).unwrap().value.unwrap() - v).abs() < 1e-12);
            prop_assert!((target_alignment(&rs, &d).unwrap().value.unwrap() - v).abs() < 1e-12);
            prop_assert!((target_alignment(&r, &neg).unwrap().value.unwrap() + v).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&v));
        }

        #[test]
        fn condition_number_scale_invariant(seed in 0u64..1000, c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
            let spec = NetworkSpec::new(vec![5, 4]).unwrap();
            let w = initialize(&spec, &InitScheme::kaiming(seed)).unwrap().weights()[0].clone();
            let k1 = condition_number(&w).unwrap();
            let k2 = condition_number(&(&w * c)).unwrap();
            prop_assert!((k1 - k2).abs() <= 1e-9 * k1);
        }
    }
}
