//! Small nonlinear MLPs trained by backpropagation or by predictive coding
//! with iterative inference.
//!
//! Layer `l` computes `x_l = f_l(W_l x_{l-1})`, with `f_l` the hidden
//! activation for `l < L` and the output activation for `l = L`. The PC
//! energy of one sample is `Σ_l ½‖x_l − f_l(W_l x_{l-1})‖²`; inference relaxes
//! the hidden activities of every sample by gradient descent on it.

use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::linalg::{dims, Matrix};
use crate::network::{draw_matrix, BaseInit, NetworkSpec};
use crate::rules::{check_batch, rescale_deltas, RescalingConfig};
use crate::seeding::{domain, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, a: &Matrix) -> Matrix {
        match self {
            Activation::Identity => a.clone(),
            Activation::Relu => a.map(|v| v.max(0.0)),
            Activation::Sigmoid => a.map(|v| 1.0 / (1.0 + (-v).exp())),
        }
    }

    /// Elementwise derivative at the pre-activation; ReLU'(0) = 0.
    pub fn derivative(self, a: &Matrix) -> Matrix {
        match self {
            Activation::Identity => Matrix::from_element(a.nrows(), a.ncols(), 1.0),
            Activation::Relu => a.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            Activation::Sigmoid => a.map(|v| {
                let s = 1.0 / (1.0 + (-v).exp());
                s * (1.0 - s)
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearNet {
    weights: Vec<Matrix>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Pre-activations `a_1..a_L` and activities `x̂_0..x̂_L` of a forward pass.
#[derive(Debug, Clone)]
pub struct NlForward {
    pub preacts: Vec<Matrix>,
    pub activities: Vec<Matrix>,
}

impl NlForward {
    pub fn prediction(&self) -> &Matrix {
        self.activities.last().expect("non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub max_steps: usize,
    pub step_size: f64,
    /// Stop once the hidden-activity gradient norm falls to this value; 0 disables.
    pub early_stop_grad_norm: f64,
    /// Consecutive energy increases tolerated before reporting divergence.
    pub divergence_window: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { max_steps: 10_000, step_size: 0.05, early_stop_grad_norm: 0.0, divergence_window: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    /// `x*_0..x*_L`.
    pub activities: Vec<Matrix>,
    /// Energy before each step and after the last, summed over the batch.
    pub energies: Vec<f64>,
    pub final_grad_norm: f64,
    pub steps: usize,
}

impl NonlinearNet {
    pub fn new(weights: Vec<Matrix>, hidden: Activation, output: Activation) -> Result<Self> {
        // reuse the linear stack's shape checks
        let weights = crate::network::WeightStack::new(weights)?.into_weights();
        Ok(Self { weights, hidden, output })
    }

    /// LeCun-normal weights, one stream per layer.
    pub fn init(spec: &NetworkSpec, hidden: Activation, output: Activation, seed: u64) -> Result<Self> {
        let d = spec.dims();
        let weights = (1..d.len())
            .map(|l| {
                let mut rng = rng_for(seed, domain::INIT, l as u64);
                draw_matrix(BaseInit::LecunNormal, d[l], d[l - 1], &mut rng)
            })
            .collect();
        Self::new(weights, hidden, output)
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    fn act(&self, l: usize) -> Activation {
        if l == self.depth() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("non-empty").nrows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<NlForward> {
        if x.nrows() != self.input_dim() {
            return Err(Error::Shape { layer: 0, expected: format!("{} rows", self.input_dim()), got: dims(x) });
        }
        let mut preacts = Vec::with_capacity(self.depth());
        let mut activities = Vec::with_capacity(self.depth() + 1);
        activities.push(x.clone());
        for (i, w) in self.weights.iter().enumerate() {
            let a = w * &activities[i];
            activities.push(self.act(i + 1).apply(&a));
            preacts.push(a);
        }
        Ok(NlForward { preacts, activities })
    }

    pub fn with_deltas(&self, deltas: &[Matrix], lr: f64) -> Result<NonlinearNet> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate must be finite and >= 0, got {lr}")));
        }
        if deltas.len() != self.depth() {
            return Err(Error::InvalidArgument("delta count does not match depth".into()));
        }
        let weights = self.weights.iter().zip(deltas).map(|(w, d)| w + d * lr).collect();
        Ok(NonlinearNet { weights, hidden: self.hidden, output: self.output })
    }

    /// Batch-mean `½‖y − f(x)‖²`.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let f = self.forward(&batch.x)?;
        Ok(crate::metrics::mse_loss(&(&batch.y - f.prediction())))
    }
}

/// Reverse-mode descent directions for the batch-mean squared error,
/// optionally rescaled with feedforward activities on both sides.
pub fn nl_bp_deltas(net: &NonlinearNet, batch: &Batch, cfg: &RescalingConfig) -> Result<Vec<Matrix>> {
    check_batch(net.input_dim(), net.output_dim(), batch)?;
    let b = batch.size() as f64;
    let fwd = net.forward(&batch.x)?;
    let depth = net.depth();
    let mut deltas = vec![Matrix::zeros(0, 0); depth];
    // signal = −∂loss/∂a_l (per sample, before the 1/B)
    let mut signal = (&batch.y - fwd.prediction()).component_mul(&net.act(depth).derivative(&fwd.preacts[depth - 1]));
    for l in (0..depth).rev() {
        deltas[l] = &signal * fwd.activities[l].transpose() / b;
        if l > 0 {
            signal = (net.weights[l].transpose() * &signal).component_mul(&net.act(l).derivative(&fwd.preacts[l - 1]));
        }
    }
    rescale_deltas(deltas, &fwd.activities, &fwd.activities, cfg)
}

pub fn nl_bp_step(net: &NonlinearNet, batch: &Batch, lr: f64, cfg: &RescalingConfig) -> Result<NonlinearNet> {
    let d = nl_bp_deltas(net, batch, cfg)?;
    net.with_deltas(&d, lr)
}

fn layer_errors(net: &NonlinearNet, acts: &[Matrix]) -> (Vec<Matrix>, Vec<Matrix>) {
    let mut errs = Vec::with_capacity(net.depth());
    let mut pre = Vec::with_capacity(net.depth());
    for (i, w) in net.weights.iter().enumerate() {
        let a = w * &acts[i];
        errs.push(&acts[i + 1] - net.act(i + 1).apply(&a));
        pre.push(a);
    }
    (errs, pre)
}

fn energy(errs: &[Matrix]) -> f64 {
    0.5 * errs.iter().map(|e| e.norm_squared()).sum::<f64>()
}

/// Iterative PC inference from the feedforward pass, input and target clamped.
pub fn nl_pc_infer(net: &NonlinearNet, batch: &Batch, cfg: &InferenceConfig) -> Result<InferenceResult> {
    check_batch(net.input_dim(), net.output_dim(), batch)?;
    if !(cfg.step_size > 0.0) {
        return Err(Error::InvalidArgument(format!("inference step must be > 0, got {}", cfg.step_size)));
    }
    let depth = net.depth();
    let mut acts = net.forward(&batch.x)?.activities;
    acts[depth] = batch.y.clone();
    let mut energies = Vec::with_capacity(cfg.max_steps + 1);
    let mut rising = 0usize;
    let mut grad_norm;
    let mut steps = 0;
    loop {
        let (errs, pre) = layer_errors(net, &acts);
        let e = energy(&errs);
        if !e.is_finite() {
            return Err(Error::InferenceDiverged { step: steps, window: rising });
        }
        if let Some(&prev) = energies.last() {
            if e > prev {
                rising += 1;
                if rising >= cfg.divergence_window {
                    return Err(Error::InferenceDiverged { step: steps, window: rising });
                }
            } else {
                rising = 0;
            }
        }
        energies.push(e);
        // ∂E/∂x_l = ε_l − W_{l+1}ᵀ (ε_{l+1} ⊙ f'_{l+1}(a_{l+1})) for hidden l
        let grads: Vec<Matrix> = (1..depth)
            .map(|l| &errs[l - 1] - net.weights[l].transpose() * errs[l].component_mul(&net.act(l + 1).derivative(&pre[l])))
            .collect();
        grad_norm = grads.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
        if steps >= cfg.max_steps || (cfg.early_stop_grad_norm > 0.0 && grad_norm <= cfg.early_stop_grad_norm) {
            break;
        }
        for (l, g) in (1..depth).zip(&grads) {
            acts[l] -= g * cfg.step_size;
        }
        steps += 1;
    }
    Ok(InferenceResult { activities: acts, energies, final_grad_norm: grad_norm, steps })
}

/// Local PC directions `ΔW_l = (1/B) (ε*_l ⊙ f'_l(W_l x*_{l-1})) x*_{l-1}ᵀ`,
/// rescaled with feedforward (pre) and converged (post) activities.
pub fn nl_pc_deltas(net: &NonlinearNet, batch: &Batch, x_star: &[Matrix], cfg: &RescalingConfig) -> Result<Vec<Matrix>> {
    check_batch(net.input_dim(), net.output_dim(), batch)?;
    if x_star.len() != net.depth() + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} activity matrices for depth {}",
            x_star.len(),
            net.depth()
        )));
    }
    let b = batch.size() as f64;
    let (errs, pre) = layer_errors(net, x_star);
    let deltas = (0..net.depth())
        .map(|i| errs[i].component_mul(&net.act(i + 1).derivative(&pre[i])) * x_star[i].transpose() / b)
        .collect();
    let fwd = net.forward(&batch.x)?;
    rescale_deltas(deltas, &fwd.activities, x_star, cfg)
}

pub fn nl_pc_step(
    net: &NonlinearNet,
    batch: &Batch,
    x_star: &[Matrix],
    lr: f64,
    cfg: &RescalingConfig,
) -> Result<NonlinearNet> {
    let d = nl_pc_deltas(net, batch, x_star, cfg)?;
    net.with_deltas(&d, lr)
}

/// Per-sample alignment of the first-order prediction change of `deltas`,
/// `dŷ/dt = J(ΔW)` computed by forward-mode differentiation.
pub fn nl_alignment(net: &NonlinearNet, batch: &Batch, deltas: &[Matrix]) -> Result<Vec<Option<f64>>> {
    let fwd = net.forward(&batch.x)?;
    let mut tangent = Matrix::zeros(batch.x.nrows(), batch.size());
    for (i, w) in net.weights.iter().enumerate() {
        let da = &deltas[i] * &fwd.activities[i] + w * &tangent;
        tangent = da.component_mul(&net.act(i + 1).derivative(&fwd.preacts[i]));
    }
    let r = &batch.y - fwd.prediction();
    Ok(crate::metrics::column_alignment(&r, &tangent)?.into_iter().map(|a| a.value).collect())
}
