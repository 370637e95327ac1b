//! Experiment configuration, parsed from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dlnlab::nonlinear::{Activation, InferenceConfig};
use dlnlab::rules::{InversePolicy, RescalingConfig, Rule};
use dlnlab::{BaseInit, InitKind, InitScheme};
use serde::{Deserialize, Serialize};

use crate::error::{ExpError, ExpResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    OneStepAlignment,
    ConditioningSweep,
    BatchSizeSweep,
    WholeTraining,
    LrSweep,
    Autoencoder,
    ResnetAlignment,
}

impl ExperimentKind {
    pub fn is_one_step(self) -> bool {
        matches!(self, Self::OneStepAlignment | Self::ConditioningSweep | Self::BatchSizeSweep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitName {
    KaimingUniform,
    NormPreserving,
    Lecun,
    Ones,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub scheme: InitName,
    /// Impose this condition number on every layer after drawing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { scheme: InitName::KaimingUniform, kappa: None }
    }
}

impl InitConfig {
    pub fn base(&self) -> BaseInit {
        match self.scheme {
            InitName::KaimingUniform => BaseInit::KaimingUniform,
            InitName::NormPreserving => BaseInit::NormPreservingNormal,
            InitName::Lecun => BaseInit::LecunNormal,
            InitName::Ones => BaseInit::Constant(1.0),
        }
    }

    pub fn scheme(&self, seed: u64, kappa_override: Option<f64>) -> InitScheme {
        let base = self.base();
        match kappa_override.or(self.kappa) {
            Some(kappa) => InitScheme { kind: InitKind::Conditioned { kappa, base }, seed },
            None => InitScheme { kind: InitKind::Base(base), seed },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Independent standard-normal inputs and targets.
    Gaussian,
    /// `y = W_data x` with a seeded teacher matrix.
    Synthetic,
    /// The 1-1-2 all-ones network with `x = 1`, `y = [-1, 1]`.
    Toy,
    /// MNIST IDX files from the data directory.
    Mnist,
    /// Deterministic stroke-like images in `[0, 1]`, for runs without MNIST files.
    SyntheticImages,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Number of images used from the dataset.
    #[serde(default = "default_limit")]
    pub limit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

fn default_limit() -> usize {
    1024
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { source: DataSource::Gaussian, limit: default_limit(), dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Layer widths `d_0..d_L`.
    pub dims: Vec<usize>,
    #[serde(default = "default_hidden")]
    pub hidden_activation: Activation,
    #[serde(default = "default_output")]
    pub output_activation: Activation,
}

fn default_hidden() -> Activation {
    Activation::Relu
}

fn default_output() -> Activation {
    Activation::Sigmoid
}

impl Default for Architecture {
    fn default() -> Self {
        Self { dims: vec![512, 512, 512], hidden_activation: default_hidden(), output_activation: default_output() }
    }
}

/// A learning rule together with its rescaling, written as `bp`, `pc`,
/// `pc+adaptive`, `pc+decor` or `pc+decor_spectral` (and the same for `bp`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleSpec {
    pub rule: Rule,
    pub variant: Variant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Plain,
    Adaptive,
    Decor,
    DecorSpectral,
}

impl RuleSpec {
    pub fn rescaling(&self, spectral_alpha: f64) -> RescalingConfig {
        match self.variant {
            Variant::Plain => RescalingConfig::none(),
            Variant::Adaptive => RescalingConfig::adaptive(),
            Variant::Decor => RescalingConfig::decorrelation(InversePolicy::PseudoInverse),
            Variant::DecorSpectral => {
                RescalingConfig::decorrelation(InversePolicy::SpectralRegularized { alpha: spectral_alpha })
            }
        }
    }

    pub fn rule_name(&self) -> &'static str {
        match self.rule {
            Rule::Bp => "bp",
            Rule::Pc => "pc",
        }
    }

    pub fn rescaling_name(&self) -> &'static str {
        match self.variant {
            Variant::Plain => "none",
            Variant::Adaptive => "adaptive_lr",
            Variant::Decor => "decorrelation",
            Variant::DecorSpectral => "decorrelation_spectral",
        }
    }
}

impl fmt::Display for RuleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = match self.variant {
            Variant::Plain => "",
            Variant::Adaptive => "+adaptive",
            Variant::Decor => "+decor",
            Variant::DecorSpectral => "+decor_spectral",
        };
        write!(f, "{}{}", self.rule_name(), suffix)
    }
}

impl FromStr for RuleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, tail) = s.split_once('+').unwrap_or((s, ""));
        let rule = match head.trim() {
            "bp" => Rule::Bp,
            "pc" => Rule::Pc,
            other => return Err(format!("unknown rule `{other}` (expected bp or pc)")),
        };
        let variant = match tail.trim() {
            "" => Variant::Plain,
            "adaptive" => Variant::Adaptive,
            "decor" => Variant::Decor,
            "decor_spectral" => Variant::DecorSpectral,
            other => {
                return Err(format!("unknown rescaling `{other}` (expected adaptive, decor or decor_spectral)"))
            }
        };
        Ok(Self { rule, variant })
    }
}

impl Serialize for RuleSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RuleSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `count` log-spaced learning rates `10^min_exp ..= 10^max_exp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrGrid {
    pub min_exp: f64,
    pub max_exp: f64,
    pub count: usize,
}

impl LrGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![10f64.powf(self.min_exp)];
        }
        (0..self.count)
            .map(|i| {
                let t = i as f64 / (self.count - 1) as f64;
                10f64.powf(self.min_exp + t * (self.max_exp - self.min_exp))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Number of hidden layers, all of the first hidden layer's width.
    Depth,
    /// Width of a single hidden layer.
    Width,
    /// Condition number imposed on every layer.
    Kappa,
    BatchSize,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            Self::Depth => "depth",
            Self::Width => "width",
            Self::Kappa => "kappa",
            Self::BatchSize => "batch_size",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSettings {
    #[serde(default = "default_inference_steps")]
    pub max_steps: usize,
    #[serde(default = "default_inference_step")]
    pub step_size: f64,
    #[serde(default)]
    pub early_stop_grad_norm: f64,
}

fn default_inference_steps() -> usize {
    InferenceConfig::default().max_steps
}

fn default_inference_step() -> f64 {
    InferenceConfig::default().step_size
}

impl Default for InferenceSettings {
    fn default() -> Self {
        let d = InferenceConfig::default();
        Self { max_steps: d.max_steps, step_size: d.step_size, early_stop_grad_norm: d.early_stop_grad_norm }
    }
}

impl InferenceSettings {
    pub fn to_config(self) -> InferenceConfig {
        InferenceConfig {
            max_steps: self.max_steps,
            step_size: self.step_size,
            early_stop_grad_norm: self.early_stop_grad_norm,
            ..InferenceConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub data: DataConfig,
    pub rules: Vec<RuleSpec>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_grid: Option<LrGrid>,
    #[serde(default)]
    pub steps: usize,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    /// α for `+decor_spectral` rules.
    #[serde(default = "default_alpha")]
    pub spectral_alpha: f64,
    /// Trajectory rows are written every this many steps (and at the last step).
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub inference: InferenceSettings,
}

fn default_batch() -> usize {
    1
}

fn default_lr() -> f64 {
    dlnlab::rules::DEFAULT_ONE_STEP_LR
}

fn default_alpha() -> f64 {
    1e-5
}

fn default_record_every() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> ExpResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ExpError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> ExpResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ExpError::Io { path: path.to_owned(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Learning rates to run: the grid if present, otherwise the single `lr`.
    pub fn learning_rates(&self) -> Vec<f64> {
        match &self.lr_grid {
            Some(g) => g.values(),
            None => vec![self.lr],
        }
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> ExpResult<()> {
        let mut problems: Vec<(String, String)> = Vec::new();
        let mut bad = |field: &str, msg: String| problems.push((field.to_owned(), msg));
        if self.name.trim().is_empty() {
            bad("name", "must not be empty".into());
        }
        if self.seeds.is_empty() {
            bad("seeds", "must list at least one seed".into());
        }
        if self.rules.is_empty() {
            bad("rules", "must list at least one rule".into());
        }
        if self.batch_size == 0 {
            bad("batch_size", "must be >= 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            bad("lr", format!("must be finite and >= 0, got {}", self.lr));
        }
        if let Some(g) = &self.lr_grid {
            if g.count == 0 {
                bad("lr_grid.count", "must be >= 1".into());
            }
            if !g.min_exp.is_finite() || !g.max_exp.is_finite() || g.min_exp > g.max_exp {
                bad("lr_grid", format!("bounds 10^{} .. 10^{} are not an increasing range", g.min_exp, g.max_exp));
            }
        }
        if !(self.spectral_alpha > 0.0) {
            bad("spectral_alpha", "must be > 0".into());
        }
        if self.record_every == 0 {
            bad("record_every", "must be >= 1".into());
        }
        if let Some(k) = self.init.kappa {
            if !(k >= 1.0 && k.is_finite()) {
                bad("init.kappa", format!("must be finite and >= 1, got {k}"));
            }
        }
        let dims = &self.architecture.dims;
        if self.data.source != DataSource::Toy {
            if dims.len() < 2 {
                bad("architecture.dims", "needs at least input and output widths".into());
            } else if dims.contains(&0) {
                bad("architecture.dims", "widths must be >= 1".into());
            }
        }
        if !(self.inference.step_size > 0.0) {
            bad("inference.step_size", "must be > 0".into());
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                bad("sweep.values", "must not be empty".into());
            }
            let integral = matches!(s.parameter, SweepParameter::Depth | SweepParameter::Width | SweepParameter::BatchSize);
            for &v in &s.values {
                let ok = match s.parameter {
                    SweepParameter::Kappa => v >= 1.0 && v.is_finite(),
                    SweepParameter::Depth => v >= 0.0 && v.fract() == 0.0,
                    _ => v >= 1.0 && v.fract() == 0.0,
                };
                if !ok {
                    let what = if integral { "a non-negative integer" } else { "finite and >= 1" };
                    bad("sweep.values", format!("{v} is not {what} for {}", s.parameter.name()));
                }
            }
            if s.parameter == SweepParameter::Depth && dims.len() < 3 && self.data.source != DataSource::Toy {
                bad("sweep.parameter", "a depth sweep needs a hidden width in architecture.dims".into());
            }
        }
        match self.kind {
            ExperimentKind::WholeTraining | ExperimentKind::LrSweep | ExperimentKind::Autoencoder => {
                if self.steps == 0 {
                    bad("steps", "training runs need steps >= 1".into());
                }
            }
            ExperimentKind::ResnetAlignment => {
                if dims.len() >= 2 && dims.iter().any(|&d| d != dims[0]) {
                    bad("architecture.dims", "residual networks need equal widths".into());
                }
            }
            _ => {}
        }
        if matches!(self.kind, ExperimentKind::WholeTraining | ExperimentKind::LrSweep)
            && !matches!(self.data.source, DataSource::Synthetic)
        {
            bad("data.source", "training on linear networks needs the synthetic teacher task".into());
        }
        if self.kind == ExperimentKind::Autoencoder {
            if !matches!(self.data.source, DataSource::Mnist | DataSource::SyntheticImages) {
                bad("data.source", "the autoencoder needs mnist or synthetic_images".into());
            }
            if dims.first() != dims.last() {
                bad("architecture.dims", "an autoencoder needs equal input and output widths".into());
            }
            if self.data.limit < self.batch_size {
                bad("data.limit", "must be at least the batch size".into());
            }
        }
        if self.data.source == DataSource::Toy && !self.kind.is_one_step() {
            bad("data.source", "the toy network only supports one-step alignment".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ExpError::Validation(problems))
        }
    }
}
