//! Backpropagation and predictive-coding updates for deep linear networks,
//! with the analytic PC equilibrium and the interference-cancelling
//! rescalings (per-layer adaptive learning rates and batch decorrelation).
//!
//! All updates are reported as descent directions `ΔW_l` (already carrying
//! the minus sign of the gradient), together with the continuous-time change
//! in prediction they induce on the batch,
//!
//! ```text
//! dŶ/dt = Σ_l W_{L:l+1} ΔW_l X̂_{l-1}
//! ```
//!
//! where `X̂_{l-1}` are the feedforward activities. Batch updates are
//! normalised by `1/B` for both rules.

use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::linalg::{pinv, spd_solve, symmetric_extremes, Matrix};
use crate::metrics::{column_alignment, mean_defined};
use crate::network::WeightStack;

/// Default denominator floor for adaptive learning rates.
pub const DEFAULT_ACTIVITY_FLOOR: f64 = 1e-12;

/// Default single-step learning rate.
pub const DEFAULT_ONE_STEP_LR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Bp,
    Pc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rescaling {
    None,
    AdaptiveLr,
    Decorrelation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversePolicy {
    PseudoInverse,
    /// Shift the spectrum so its smallest eigenvalue is at least `alpha · λ_max`.
    SpectralRegularized { alpha: f64 },
}

/// Which layers receive the adaptive learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveLayers {
    /// `l = 1..=L`; gives exact alignment.
    All,
    /// `l = 1..L`, leaving the output layer unscaled.
    ExcludeOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescalingConfig {
    pub mode: Rescaling,
    pub inverse_policy: InversePolicy,
    pub adaptive_layers: AdaptiveLayers,
    pub activity_floor: f64,
}

impl Default for RescalingConfig {
    fn default() -> Self {
        Self {
            mode: Rescaling::None,
            inverse_policy: InversePolicy::PseudoInverse,
            adaptive_layers: AdaptiveLayers::All,
            activity_floor: DEFAULT_ACTIVITY_FLOOR,
        }
    }
}

impl RescalingConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn adaptive() -> Self {
        Self { mode: Rescaling::AdaptiveLr, ..Self::default() }
    }

    pub fn decorrelation(policy: InversePolicy) -> Self {
        Self { mode: Rescaling::Decorrelation, inverse_policy: policy, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if let InversePolicy::SpectralRegularized { alpha } = self.inverse_policy {
            if !(alpha > 0.0) {
                return Err(Error::InvalidArgument(format!("spectral alpha must be > 0, got {alpha}")));
            }
        }
        if !(self.activity_floor >= 0.0) {
            return Err(Error::InvalidArgument("activity floor must be >= 0".into()));
        }
        Ok(())
    }
}

/// Converged PC state for one batch.
#[derive(Debug, Clone)]
pub struct EquilibriumState {
    /// `x*_0..x*_L`; `x*_0 = X` and `x*_L = Y`.
    pub activities: Vec<Matrix>,
    /// `ε*_1..ε*_L` at indices `0..L`.
    pub errors: Vec<Matrix>,
    /// Feedforward activities `x̂_0..x̂_L` of the same batch.
    pub feedforward: Vec<Matrix>,
    pub s: Matrix,
    fingerprint: u64,
}

impl EquilibriumState {
    /// `ε*_L = S⁻¹ R`.
    pub fn s_inv_r(&self) -> &Matrix {
        self.errors.last().expect("depth >= 1")
    }

    pub fn belongs_to(&self, stack: &WeightStack, batch: &Batch) -> bool {
        self.fingerprint == fingerprint(stack.weights(), batch)
    }
}

/// A proposed update and the prediction change it induces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateReport {
    pub rule: Rule,
    pub rescaling: Rescaling,
    /// `ΔW_1..ΔW_L` (descent directions).
    #[serde(skip)]
    pub deltas: Vec<Matrix>,
    /// `d_L × B`, column `b` is `dŷ_b/dt`.
    #[serde(with = "matrix_serde")]
    pub predicted_dydt: Matrix,
    /// `R = Y − Ŷ` before the update.
    #[serde(with = "matrix_serde")]
    pub residual: Matrix,
    /// Per-sample alignment; `None` where undefined.
    pub ta_per_sample: Vec<Option<f64>>,
}

impl UpdateReport {
    /// Mean alignment over samples where it is defined.
    pub fn mean_ta(&self) -> Option<f64> {
        mean_defined(&self.ta_per_sample)
    }

    /// JSON form; `include_deltas` adds the row-major weight deltas.
    pub fn to_json(&self, include_deltas: bool) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report is serialisable");
        if include_deltas {
            let deltas: Vec<serde_json::Value> = self.deltas.iter().map(matrix_serde::to_value).collect();
            v["deltas"] = serde_json::Value::Array(deltas);
        }
        v
    }
}

pub(crate) mod matrix_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::Matrix;

    #[derive(Serialize, Deserialize)]
    struct Dense {
        rows: usize,
        cols: usize,
        /// row-major
        data: Vec<f64>,
    }

    pub fn to_value(m: &Matrix) -> serde_json::Value {
        serde_json::to_value(dense(m)).expect("plain numbers")
    }

    fn dense(m: &Matrix) -> Dense {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        Dense { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        dense(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let v = Dense::deserialize(d)?;
        if v.data.len() != v.rows * v.cols {
            return Err(serde::de::Error::custom("matrix data length does not match shape"));
        }
        Ok(Matrix::from_row_slice(v.rows, v.cols, &v.data))
    }
}

fn fingerprint(weights: &[Matrix], batch: &Batch) -> u64 {
    let mut h = DefaultHasher::new();
    for m in weights.iter().chain([&batch.x, &batch.y]) {
        m.shape().hash(&mut h);
        for v in m.iter() {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

pub(crate) fn check_batch(input_dim: usize, output_dim: usize, batch: &Batch) -> Result<()> {
    let b = batch.x.ncols();
    if b == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if batch.x.nrows() != input_dim {
        return Err(Error::Shape {
            layer: 0,
            expected: format!("{input_dim} input rows"),
            got: format!("{}x{}", batch.x.nrows(), b),
        });
    }
    if batch.y.nrows() != output_dim || batch.y.ncols() != b {
        return Err(Error::Shape {
            layer: 0,
            expected: format!("{output_dim}x{b} targets"),
            got: format!("{}x{}", batch.y.nrows(), batch.y.ncols()),
        });
    }
    Ok(())
}

/// Sum of outer products of a list of matrices, `Σ P Pᵀ`.
pub(crate) fn gram_sum(products: &[Matrix]) -> Matrix {
    let n = products[0].nrows();
    let mut s = Matrix::zeros(n, n);
    for p in products {
        s += p * p.transpose();
    }
    s
}

/// `S = Σ_{l=1}^{L} W_{L:l+1} W_{L:l+1}ᵀ` (the `l = L` term is the identity).
pub fn s_matrix(stack: &WeightStack) -> Matrix {
    gram_sum(&stack.partials())
}

/// Analytic PC inference with input clamped to `X` and output clamped to `Y`.
///
/// Solves `S ε*_L = R`, propagates `ε*_l = W_{l+1}ᵀ ε*_{l+1}` downwards and
/// rebuilds `x*_l = W_l x*_{l-1} + ε*_l` upwards.
pub fn pc_equilibrium(stack: &WeightStack, batch: &Batch) -> Result<EquilibriumState> {
    check_batch(stack.input_dim(), stack.output_dim(), batch)?;
    let partials = stack.partials();
    let s = gram_sum(&partials);
    let feedforward = stack.forward(&batch.x)?.activities;
    let residual = &batch.y - feedforward.last().expect("non-empty");
    let depth = stack.depth();
    let mut errors = vec![Matrix::zeros(0, 0); depth];
    errors[depth - 1] = spd_solve(&s, &residual)?;
    for l in (0..depth - 1).rev() {
        errors[l] = stack.weights()[l + 1].transpose() * &errors[l + 1];
    }
    let mut activities = Vec::with_capacity(depth + 1);
    activities.push(batch.x.clone());
    for l in 0..depth - 1 {
        let next = &stack.weights()[l] * &activities[l] + &errors[l];
        activities.push(next);
    }
    activities.push(batch.y.clone());
    Ok(EquilibriumState {
        activities,
        errors,
        feedforward,
        s,
        fingerprint: fingerprint(stack.weights(), batch),
    })
}

/// `α_l = 1 / mean_b(post_{l-1,b}ᵀ pre_{l-1,b})` for `l = 1..=L`.
///
/// `pre` and `post` are activity lists indexed from layer 0; only entries
/// `0..L` are read.
pub fn overlap_factors(pre: &[Matrix], post: &[Matrix], depth: usize, floor: f64) -> Result<Vec<f64>> {
    (0..depth)
        .map(|i| {
            let b = pre[i].ncols() as f64;
            let overlap = post[i].dot(&pre[i]) / b;
            if !overlap.is_finite() {
                return Err(Error::NonFinite(format!("activity overlap at layer {}", i + 1)));
            }
            if overlap.abs() <= floor {
                return Err(Error::DegenerateActivity { layer: i + 1, value: overlap, floor });
            }
            Ok(1.0 / overlap)
        })
        .collect()
}

/// PC adaptive learning rates `α_l = 1 / mean_b(x*_{l-1,b}ᵀ x̂_{l-1,b})`.
pub fn adaptive_lr_factors(eq: &EquilibriumState, floor: f64) -> Result<Vec<f64>> {
    overlap_factors(&eq.feedforward, &eq.activities, eq.errors.len(), floor)
}

/// `ε = max(0, α λ_max − λ_min)`.
pub fn spectral_shift(lambda_max: f64, lambda_min: f64, alpha: f64) -> f64 {
    (alpha * lambda_max - lambda_min).max(0.0)
}

/// Inverse of the cross-covariance `Σ = (1/B) Σ_b post_b pre_bᵀ`, returned in
/// the orientation that multiplies a gradient from the right:
/// `A = (Σ⁻¹)ᵀ`, so that `postᵀ A pre = B · I` whenever both activity
/// matrices have full column rank.
pub fn decorrelation_matrix(pre: &Matrix, post: &Matrix, policy: InversePolicy) -> Result<Matrix> {
    let b = pre.ncols() as f64;
    let sigma = post * pre.transpose() / b;
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("activity cross-covariance".into()));
    }
    let inv = match policy {
        InversePolicy::PseudoInverse => pinv(&sigma)?,
        InversePolicy::SpectralRegularized { alpha } => {
            let (lmin, lmax) = symmetric_extremes(&sigma);
            let eps = spectral_shift(lmax, lmin, alpha);
            let n = sigma.nrows();
            pinv(&(sigma + Matrix::identity(n, n) * eps))?
        }
    };
    Ok(inv.transpose())
}

/// Decorrelation factors `A_1..A_L` from pre/post activity lists.
pub fn decorrelation_from_activities(
    pre: &[Matrix],
    post: &[Matrix],
    depth: usize,
    policy: InversePolicy,
) -> Result<Vec<Matrix>> {
    (0..depth).map(|i| decorrelation_matrix(&pre[i], &post[i], policy)).collect()
}

/// PC decorrelation factors built from the equilibrium and feedforward activities.
pub fn decorrelation_factors(eq: &EquilibriumState, cfg: &RescalingConfig) -> Result<Vec<Matrix>> {
    cfg.validate()?;
    decorrelation_from_activities(&eq.feedforward, &eq.activities, eq.errors.len(), cfg.inverse_policy)
}

/// Applies the configured rescaling to raw descent directions.
pub fn rescale_deltas(
    deltas: Vec<Matrix>,
    pre: &[Matrix],
    post: &[Matrix],
    cfg: &RescalingConfig,
) -> Result<Vec<Matrix>> {
    cfg.validate()?;
    let depth = deltas.len();
    match cfg.mode {
        Rescaling::None => Ok(deltas),
        Rescaling::AdaptiveLr => {
            let alphas = overlap_factors(pre, post, depth, cfg.activity_floor)?;
            let scaled_layers = match cfg.adaptive_layers {
                AdaptiveLayers::All => depth,
                AdaptiveLayers::ExcludeOutput => depth - 1,
            };
            Ok(deltas
                .into_iter()
                .zip(alphas)
                .enumerate()
                .map(|(i, (d, a))| if i < scaled_layers { d * a } else { d })
                .collect())
        }
        Rescaling::Decorrelation => {
            let factors = decorrelation_from_activities(pre, post, depth, cfg.inverse_policy)?;
            Ok(deltas.into_iter().zip(factors).map(|(d, a)| d * a).collect())
        }
    }
}

/// `dŶ/dt = Σ_l above_l ΔW_l pre_{l-1}`.
pub(crate) fn prediction_change(above: &[Matrix], deltas: &[Matrix], pre: &[Matrix]) -> Matrix {
    let mut out = Matrix::zeros(above[0].nrows(), pre[0].ncols());
    for ((a, d), p) in above.iter().zip(deltas).zip(pre) {
        out += a * (d * p);
    }
    out
}

/// Shared tail of every linear update: raw deltas `(1/B) G_l post_{l-1}ᵀ`,
/// rescaling, prediction change and per-sample alignment.
pub(crate) fn assemble(
    rule: Rule,
    cfg: &RescalingConfig,
    above: &[Matrix],
    pre: &[Matrix],
    post: &[Matrix],
    signals: &[Matrix],
    residual: Matrix,
) -> Result<UpdateReport> {
    let b = residual.ncols() as f64;
    let raw: Vec<Matrix> = signals
        .iter()
        .zip(post)
        .map(|(g, p)| g * p.transpose() / b)
        .collect();
    let deltas = rescale_deltas(raw, pre, post, cfg)?;
    let predicted_dydt = prediction_change(above, &deltas, pre);
    let ta_per_sample = column_alignment(&residual, &predicted_dydt)?
        .into_iter()
        .map(|a| a.value)
        .collect();
    Ok(UpdateReport { rule, rescaling: cfg.mode, deltas, predicted_dydt, residual, ta_per_sample })
}

/// Backpropagation update `ΔW_l = (1/B) W_{L:l+1}ᵀ R X̂_{l-1}ᵀ`, optionally rescaled.
///
/// For BP the rescalings use feedforward activities on both sides
/// (`α_l = 1/mean‖x̂_{l-1}‖²`, `A_l = (mean x̂ x̂ᵀ)⁻¹`).
pub fn bp_report(stack: &WeightStack, batch: &Batch, cfg: &RescalingConfig) -> Result<UpdateReport> {
    check_batch(stack.input_dim(), stack.output_dim(), batch)?;
    let partials = stack.partials();
    let acts = stack.forward(&batch.x)?.activities;
    let residual = &batch.y - acts.last().expect("non-empty");
    let signals: Vec<Matrix> = partials.iter().map(|p| p.transpose() * &residual).collect();
    assemble(Rule::Bp, cfg, &partials, &acts, &acts, &signals, residual)
}

/// Plain BP update (no rescaling).
pub fn bp_gradients(stack: &WeightStack, batch: &Batch) -> Result<UpdateReport> {
    bp_report(stack, batch, &RescalingConfig::none())
}

/// PC update with local form `ΔW_l = (1/B) ε*_l x*_{l-1}ᵀ`, optionally rescaled.
pub fn pc_report(
    stack: &WeightStack,
    batch: &Batch,
    eq: &EquilibriumState,
    cfg: &RescalingConfig,
) -> Result<UpdateReport> {
    if !eq.belongs_to(stack, batch) {
        return Err(Error::StaleEquilibrium);
    }
    let partials = stack.partials();
    let residual = &batch.y - eq.feedforward.last().expect("non-empty");
    assemble(Rule::Pc, cfg, &partials, &eq.feedforward, &eq.activities, &eq.errors, residual)
}

/// Plain PC update (no rescaling).
pub fn pc_gradients(stack: &WeightStack, batch: &Batch, eq: &EquilibriumState) -> Result<UpdateReport> {
    pc_report(stack, batch, eq, &RescalingConfig::none())
}

/// Runs inference (for PC) and builds the update for `rule` under `cfg`.
pub fn update_report(stack: &WeightStack, batch: &Batch, rule: Rule, cfg: &RescalingConfig) -> Result<UpdateReport> {
    match rule {
        Rule::Bp => bp_report(stack, batch, cfg),
        Rule::Pc => {
            let eq = pc_equilibrium(stack, batch)?;
            pc_report(stack, batch, &eq, cfg)
        }
    }
}

/// Explicit Euler step `W_l ← W_l + lr ΔW_l`.
pub fn apply_update(stack: &WeightStack, report: &UpdateReport, lr: f64) -> Result<WeightStack> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::InvalidArgument(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    stack.add_scaled(&report.deltas, lr)
}
