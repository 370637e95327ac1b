//! Deep linear networks: weight stacks, forward maps, partial products,
//! initialisers and spectrum control.
//!
//! Indexing follows one convention throughout the crate. Activities are
//! `x_0..x_L` (input `x_0`, output `x_L`) and there are `L` weight matrices
//! `W_1..W_L`, with `W_l` of shape `d_l × d_{l-1}`. The slice returned by
//! [`WeightStack::weights`] is 0-based, so `weights()[l - 1]` is `W_l`.
//! Layer-indexed methods such as [`WeightStack::partial`] take the 1-based `l`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dims, sorted_svd, Matrix};
use crate::seeding::{domain, rng_for};

/// Layer widths `d_0..d_L`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    layer_dims: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(layer_dims: Vec<usize>) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidNetwork(format!(
                "need at least two layer widths, got {}",
                layer_dims.len()
            )));
        }
        if let Some(i) = layer_dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidNetwork(format!("layer width d_{i} is zero")));
        }
        Ok(Self { layer_dims })
    }

    /// Square network with `hidden` hidden layers of `width` units and
    /// input/output width `width`.
    pub fn square(width: usize, hidden: usize) -> Result<Self> {
        Self::new(vec![width; hidden + 2])
    }

    pub fn dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Number of weight matrices `L`.
    pub fn depth(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn hidden_layers(&self) -> usize {
        self.depth() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("non-empty")
    }
}

/// Ordered list of weight matrices `W_1..W_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStack {
    weights: Vec<Matrix>,
}

/// Result of a forward pass: `activities[l] = W_{l:1} X` for `l = 0..=L`.
#[derive(Debug, Clone)]
pub struct Forward {
    pub activities: Vec<Matrix>,
}

impl Forward {
    pub fn prediction(&self) -> &Matrix {
        self.activities.last().expect("at least the input")
    }
}

impl WeightStack {
    /// Builds a stack, checking that consecutive shapes chain.
    pub fn new(weights: Vec<Matrix>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidNetwork("a stack needs at least one weight matrix".into()));
        }
        for (i, w) in weights.iter().enumerate() {
            if w.nrows() == 0 || w.ncols() == 0 {
                return Err(Error::InvalidNetwork(format!("W_{} has an empty dimension", i + 1)));
            }
            if i > 0 && w.ncols() != weights[i - 1].nrows() {
                return Err(Error::Shape {
                    layer: i + 1,
                    expected: format!("{} columns", weights[i - 1].nrows()),
                    got: dims(w),
                });
            }
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<Matrix> {
        self.weights
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// `W_l` for `1 <= l <= L`.
    pub fn layer(&self, l: usize) -> Result<&Matrix> {
        self.check_index(l)?;
        Ok(&self.weights[l - 1])
    }

    pub fn spec(&self) -> NetworkSpec {
        let mut d = Vec::with_capacity(self.weights.len() + 1);
        d.push(self.weights[0].ncols());
        d.extend(self.weights.iter().map(|w| w.nrows()));
        NetworkSpec { layer_dims: d }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("non-empty").nrows()
    }

    fn check_index(&self, l: usize) -> Result<()> {
        if l == 0 || l > self.depth() {
            return Err(Error::LayerIndex { index: l, depth: self.depth() });
        }
        Ok(())
    }

    /// Layer-by-layer forward pass of a `d_0 × B` input.
    pub fn forward(&self, x: &Matrix) -> Result<Forward> {
        if x.nrows() != self.input_dim() {
            return Err(Error::Shape {
                layer: 0,
                expected: format!("{} rows", self.input_dim()),
                got: dims(x),
            });
        }
        let mut activities = Vec::with_capacity(self.depth() + 1);
        activities.push(x.clone());
        for w in &self.weights {
            let next = w * activities.last().expect("non-empty");
            activities.push(next);
        }
        Ok(Forward { activities })
    }

    /// `W_{L:1} = W_L ⋯ W_1`.
    pub fn composite(&self) -> Matrix {
        let mut acc = self.weights[0].clone();
        for w in &self.weights[1..] {
            acc = w * acc;
        }
        acc
    }

    /// `W_{L:l+1} = W_L ⋯ W_{l+1}`; `partial(L)` is the `d_L` identity.
    pub fn partial(&self, l: usize) -> Result<Matrix> {
        self.check_index(l)?;
        let n = self.output_dim();
        let mut acc = Matrix::identity(n, n);
        for w in self.weights[l..].iter().rev() {
            acc *= w;
        }
        Ok(acc)
    }

    /// All partial products `[W_{L:2}, W_{L:3}, …, I]`, index `l - 1` holding `W_{L:l+1}`.
    pub fn partials(&self) -> Vec<Matrix> {
        let depth = self.depth();
        let n = self.output_dim();
        let mut out = vec![Matrix::zeros(0, 0); depth];
        out[depth - 1] = Matrix::identity(n, n);
        for l in (0..depth - 1).rev() {
            out[l] = &out[l + 1] * &self.weights[l + 1];
        }
        out
    }

    /// `W + lr · Δ` layer by layer.
    pub fn add_scaled(&self, deltas: &[Matrix], lr: f64) -> Result<WeightStack> {
        if deltas.len() != self.depth() {
            return Err(Error::InvalidArgument(format!(
                "{} deltas for a stack of depth {}",
                deltas.len(),
                self.depth()
            )));
        }
        let weights = self
            .weights
            .iter()
            .zip(deltas)
            .enumerate()
            .map(|(i, (w, d))| {
                if w.shape() != d.shape() {
                    return Err(Error::Shape { layer: i + 1, expected: dims(w), got: dims(d) });
                }
                Ok(w + d * lr)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightStack { weights })
    }
}

/// Base weight distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseInit {
    /// `U(-√(1/n), √(1/n))` with fan-in `n`.
    KaimingUniform,
    /// `N(0, 1/m)` with fan-out `m`.
    NormPreservingNormal,
    /// `N(0, 1/n)` with fan-in `n`.
    LecunNormal,
    /// Every entry equal to the given constant.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Base(BaseInit),
    /// Draw from `base`, then give every layer condition number `kappa`.
    Conditioned { kappa: f64, base: BaseInit },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitScheme {
    pub kind: InitKind,
    pub seed: u64,
}

impl InitScheme {
    pub fn kaiming(seed: u64) -> Self {
        Self { kind: InitKind::Base(BaseInit::KaimingUniform), seed }
    }

    pub fn norm_preserving(seed: u64) -> Self {
        Self { kind: InitKind::Base(BaseInit::NormPreservingNormal), seed }
    }

    pub fn conditioned(kappa: f64, base: BaseInit, seed: u64) -> Self {
        Self { kind: InitKind::Conditioned { kappa, base }, seed }
    }
}

/// Draws one `rows × cols` matrix, entries filled in row-major order.
pub fn draw_matrix<R: Rng + ?Sized>(base: BaseInit, rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    let mut fill = |sample: &mut dyn FnMut(&mut R) -> f64| {
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = sample(rng);
            }
        }
    };
    match base {
        BaseInit::KaimingUniform => {
            let bound = (1.0 / cols as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            fill(&mut |r| dist.sample(r));
        }
        BaseInit::NormPreservingNormal => {
            let dist = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("positive std");
            fill(&mut |r| dist.sample(r));
        }
        BaseInit::LecunNormal => {
            let dist = Normal::new(0.0, 1.0 / (cols as f64).sqrt()).expect("positive std");
            fill(&mut |r| dist.sample(r));
        }
        BaseInit::Constant(c) => fill(&mut |_| c),
    }
    m
}

/// Draws a weight stack; identical `(spec, scheme)` give bit-identical stacks.
///
/// Layer `l` uses its own stream `(seed, INIT, l)`, so adding layers on top
/// leaves the lower layers unchanged.
pub fn initialize(spec: &NetworkSpec, scheme: &InitScheme) -> Result<WeightStack> {
    let d = spec.dims();
    let (base, kappa) = match scheme.kind {
        InitKind::Base(b) => (b, None),
        InitKind::Conditioned { kappa, base } => (base, Some(kappa)),
    };
    let mut weights = Vec::with_capacity(spec.depth());
    for l in 1..=spec.depth() {
        let mut rng = rng_for(scheme.seed, domain::INIT, l as u64);
        let w = draw_matrix(base, d[l], d[l - 1], &mut rng);
        let w = match kappa {
            Some(k) => set_condition_number(&w, k)?,
            None => w,
        };
        weights.push(w);
    }
    WeightStack::new(weights)
}

/// Replaces the singular values of `w` by a linearly spaced spectrum with
/// ratio `kappa`, keeping the singular vectors and the Frobenius norm.
///
/// With `k = min(m, n)` singular values and original maximum `σ_max`, the new
/// values are `σ_max (1 - (i-1)/(k-1) (1 - 1/κ))`, rescaled to the original
/// Frobenius norm.
pub fn set_condition_number(w: &Matrix, kappa: f64) -> Result<Matrix> {
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!("kappa must be finite and >= 1, got {kappa}")));
    }
    let (u, s, vt) = sorted_svd(w);
    let smax = s.first().copied().unwrap_or(0.0);
    if !(smax > 0.0) {
        return Err(Error::Spectrum("matrix has rank 0".into()));
    }
    let k = s.len();
    if k == 1 {
        if kappa > 1.0 {
            return Err(Error::Spectrum(format!(
                "a {}x{} matrix has one singular value; cannot impose kappa = {kappa}",
                w.nrows(),
                w.ncols()
            )));
        }
        return Ok(w.clone());
    }
    let shrink = 1.0 - 1.0 / kappa;
    let mut target: Vec<f64> = (0..k)
        .map(|i| smax * (1.0 - (i as f64) / ((k - 1) as f64) * shrink))
        .collect();
    let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let new_norm = target.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = norm / new_norm;
    target.iter_mut().for_each(|v| *v *= scale);
    // pin the smallest value so the ratio is exact in floating point
    target[k - 1] = target[0] / kappa;
    let sigma = Matrix::from_diagonal(&DVector::from_vec(target));
    Ok(u * sigma * vt)
}
