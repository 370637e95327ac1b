//! Linear residual networks `x_k = (I + W_k) x_{k-1}`, `k = 1..K`.
//!
//! Accumulated products `W̃_{j:i} = (I + W_j) ⋯ (I + W_i)` take the place of
//! the plain products of the deep linear case. With `T_k = W̃_{K:k+1}`
//! (`T_K = I`) the preconditioner is `S̃ = Σ_k T_k T_kᵀ`, and all updates and
//! prediction changes reuse the DLN machinery with `T_k` as the "above"
//! product.

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::linalg::{dims, spd_solve, Matrix};
use crate::rules::{assemble, check_batch, gram_sum, RescalingConfig, Rule, UpdateReport};

#[derive(Debug, Clone, PartialEq)]
pub struct ResNetStack {
    blocks: Vec<Matrix>,
}

/// Converged PC state of a residual network.
#[derive(Debug, Clone)]
pub struct ResNetEquilibrium {
    pub activities: Vec<Matrix>,
    /// `ε_1..ε_K`, `ε_k = x_k − (I + W_k) x_{k-1}`.
    pub errors: Vec<Matrix>,
    pub feedforward: Vec<Matrix>,
    pub s_tilde: Matrix,
}

impl ResNetStack {
    pub fn new(blocks: Vec<Matrix>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::InvalidNetwork("a residual network needs at least one block".into()));
        };
        let d = first.nrows();
        if d == 0 {
            return Err(Error::InvalidNetwork("zero width".into()));
        }
        for (i, w) in blocks.iter().enumerate() {
            if w.shape() != (d, d) {
                return Err(Error::Shape { layer: i + 1, expected: format!("{d}x{d}"), got: dims(w) });
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn width(&self) -> usize {
        self.blocks[0].nrows()
    }

    fn eye(&self) -> Matrix {
        Matrix::identity(self.width(), self.width())
    }

    /// `W̃_{hi:lo} = (I + W_hi) ⋯ (I + W_lo)` for 1-based `lo..=hi`; identity when `lo > hi`.
    pub fn tilde(&self, hi: usize, lo: usize) -> Matrix {
        let mut acc = self.eye();
        if lo == 0 || hi > self.num_blocks() {
            panic!("block range {lo}..={hi} outside 1..={}", self.num_blocks());
        }
        for k in lo..=hi {
            acc = (&self.blocks[k - 1] + self.eye()) * acc;
        }
        acc
    }

    /// `T_k = W̃_{K:k+1}` for `k = 1..=K`, index `k - 1`.
    pub fn above_products(&self) -> Vec<Matrix> {
        let k = self.num_blocks();
        let mut out = vec![Matrix::zeros(0, 0); k];
        out[k - 1] = self.eye();
        for i in (0..k - 1).rev() {
            out[i] = &out[i + 1] * (&self.blocks[i + 1] + self.eye());
        }
        out
    }

    pub fn forward(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        if x.nrows() != self.width() {
            return Err(Error::Shape { layer: 0, expected: format!("{} rows", self.width()), got: dims(x) });
        }
        let mut acts = Vec::with_capacity(self.num_blocks() + 1);
        acts.push(x.clone());
        for w in &self.blocks {
            let prev = acts.last().expect("non-empty");
            let next = prev + w * prev;
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn composite(&self) -> Matrix {
        self.tilde(self.num_blocks(), 1)
    }

    pub fn add_scaled(&self, deltas: &[Matrix], lr: f64) -> Result<ResNetStack> {
        if deltas.len() != self.num_blocks() {
            return Err(Error::InvalidArgument("delta count does not match block count".into()));
        }
        ResNetStack::new(self.blocks.iter().zip(deltas).map(|(w, d)| w + d * lr).collect())
    }
}

/// `S̃ = I + Σ_{k=1}^{K-1} W̃_{K:k+1} W̃_{K:k+1}ᵀ`.
pub fn tilde_s(stack: &ResNetStack) -> Matrix {
    gram_sum(&stack.above_products())
}

/// Analytic PC inference: `ε_K = S̃⁻¹ r`, `ε_k = (I + W_{k+1})ᵀ ε_{k+1}`.
pub fn resnet_equilibrium(stack: &ResNetStack, batch: &Batch) -> Result<ResNetEquilibrium> {
    check_batch(stack.width(), stack.width(), batch)?;
    let s_tilde = tilde_s(stack);
    let feedforward = stack.forward(&batch.x)?;
    let residual = &batch.y - feedforward.last().expect("non-empty");
    let k = stack.num_blocks();
    let mut errors = vec![Matrix::zeros(0, 0); k];
    errors[k - 1] = spd_solve(&s_tilde, &residual)?;
    for i in (0..k - 1).rev() {
        let up = &errors[i + 1];
        errors[i] = up + stack.blocks[i + 1].transpose() * up;
    }
    let mut activities = Vec::with_capacity(k + 1);
    activities.push(batch.x.clone());
    for i in 0..k - 1 {
        let prev = &activities[i];
        let next = prev + &stack.blocks[i] * prev + &errors[i];
        activities.push(next);
    }
    activities.push(batch.y.clone());
    Ok(ResNetEquilibrium { activities, errors, feedforward, s_tilde })
}

/// BP update `ΔW_k = (1/B) T_kᵀ R X̂_{k-1}ᵀ`.
pub fn resnet_bp_report(stack: &ResNetStack, batch: &Batch, cfg: &RescalingConfig) -> Result<UpdateReport> {
    check_batch(stack.width(), stack.width(), batch)?;
    let above = stack.above_products();
    let acts = stack.forward(&batch.x)?;
    let residual = &batch.y - acts.last().expect("non-empty");
    let signals: Vec<Matrix> = above.iter().map(|t| t.transpose() * &residual).collect();
    assemble(Rule::Bp, cfg, &above, &acts, &acts, &signals, residual)
}

/// PC update `ΔW_k = (1/B) ε_k x*_{k-1}ᵀ = (1/B) T_kᵀ S̃⁻¹ R x*_{k-1}ᵀ`.
pub fn resnet_pc_report(stack: &ResNetStack, batch: &Batch, cfg: &RescalingConfig) -> Result<UpdateReport> {
    let eq = resnet_equilibrium(stack, batch)?;
    let above = stack.above_products();
    let residual = &batch.y - eq.feedforward.last().expect("non-empty");
    assemble(Rule::Pc, cfg, &above, &eq.feedforward, &eq.activities, &eq.errors, residual)
}

pub fn resnet_report(stack: &ResNetStack, batch: &Batch, rule: Rule, cfg: &RescalingConfig) -> Result<UpdateReport> {
    match rule {
        Rule::Bp => resnet_bp_report(stack, batch, cfg),
        Rule::Pc => resnet_pc_report(stack, batch, cfg),
    }
}
