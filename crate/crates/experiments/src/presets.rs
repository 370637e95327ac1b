//! Named experiment configurations.
//!
//! Every preset has a desk scale (the default, sized for one CPU core) and a
//! full scale selected with `full = true`.

use crate::config::{
    Architecture, DataConfig, DataSource, ExperimentConfig, ExperimentKind, InferenceSettings, InitConfig, InitName,
    LrGrid, RuleSpec, Sweep, SweepParameter,
};
use crate::error::{ExpError, ExpResult};
use crate::runner::{BATCH_GRID, KAPPA_GRID};

pub const PRESETS: [&str; 18] = [
    "fig1_toy",
    "fig2_onestep",
    "fig2_onestep_kaiming",
    "fig2_width",
    "fig2_training",
    "fig2_training_deep",
    "fig3_conditioning",
    "fig3_online",
    "fig3_online_deep",
    "fig4_batch",
    "fig4_training",
    "fig4_training_deep",
    "lr_sweep",
    "lr_sweep_wide",
    "lr_sweep_low",
    "autoencoder",
    "autoencoder_synthetic",
    "appendix_resnet",
];

/// Learning-rate ranges as `(min_exp, max_exp)`.
pub const LR_RANGE_WHOLE_TRAINING: (f64, f64) = (-3.5, 0.3);
pub const LR_RANGE_ONLINE: (f64, f64) = (-3.5, -0.04);
pub const LR_RANGE_BATCH: (f64, f64) = (-3.5, 0.4);
pub const LR_RANGE_WIDE: (f64, f64) = (-3.5, 0.5);
pub const LR_RANGE_LOW: (f64, f64) = (-5.0, 0.0);
pub const LR_RANGE_AUTOENCODER: (f64, f64) = (-4.0, 1.0);

fn rules(names: &[&str]) -> Vec<RuleSpec> {
    names.iter().map(|n| n.parse().expect("preset rule")).collect()
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

fn base(name: &str, kind: ExperimentKind) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        kind,
        architecture: Architecture::default(),
        init: InitConfig::default(),
        data: DataConfig::default(),
        rules: rules(&["bp", "pc"]),
        batch_size: 1,
        lr: dlnlab::rules::DEFAULT_ONE_STEP_LR,
        lr_grid: None,
        steps: 0,
        seeds: seeds(10),
        sweep: None,
        spectral_alpha: 1e-5,
        record_every: 1,
        inference: InferenceSettings::default(),
    }
}

fn square(width: usize, hidden: usize) -> Architecture {
    Architecture { dims: vec![width; hidden + 2], ..Architecture::default() }
}

fn grid(range: (f64, f64), count: usize) -> Option<LrGrid> {
    Some(LrGrid { min_exp: range.0, max_exp: range.1, count })
}

fn training(name: &str, hidden: usize, batch: usize, range: (f64, f64), full: bool) -> ExperimentConfig {
    let mut c = base(name, ExperimentKind::WholeTraining);
    c.architecture = square(20, hidden);
    c.init = InitConfig { scheme: InitName::NormPreserving, kappa: None };
    c.data = DataConfig { source: DataSource::Synthetic, ..DataConfig::default() };
    c.batch_size = batch;
    c.lr_grid = grid(range, if full { 100 } else { 12 });
    c.steps = if full { 2000 } else { 500 };
    c.seeds = seeds(if full { 11 } else { 5 });
    c.record_every = if full { 10 } else { 25 };
    c
}

pub fn preset(name: &str, full: bool) -> ExpResult<ExperimentConfig> {
    let one_step_width = if full { 512 } else { 128 };
    let cfg = match name {
        "fig1_toy" => {
            let mut c = base(name, ExperimentKind::OneStepAlignment);
            c.data = DataConfig { source: DataSource::Toy, ..DataConfig::default() };
            c.architecture = Architecture { dims: vec![1, 1, 2], ..Architecture::default() };
            c.init = InitConfig { scheme: InitName::Ones, kappa: None };
            c.rules = rules(&["bp", "pc", "pc+adaptive"]);
            c.seeds = vec![0];
            c
        }
        "fig2_onestep" | "fig2_onestep_kaiming" => {
            let mut c = base(name, ExperimentKind::OneStepAlignment);
            c.architecture = square(one_step_width, 1);
            let scheme = if name == "fig2_onestep" { InitName::NormPreserving } else { InitName::KaimingUniform };
            c.init = InitConfig { scheme, kappa: None };
            c.batch_size = 128;
            c.sweep = Some(Sweep { parameter: SweepParameter::Depth, values: (1..=8).map(f64::from).collect() });
            c.seeds = seeds(if full { 11 } else { 10 });
            c
        }
        "fig2_width" => {
            let mut c = base(name, ExperimentKind::OneStepAlignment);
            c.architecture = square(one_step_width, 1);
            c.init = InitConfig { scheme: InitName::NormPreserving, kappa: None };
            c.batch_size = 128;
            let widths: &[f64] = if full { &[128.0, 256.0, 512.0, 1024.0] } else { &[128.0, 256.0, 512.0] };
            c.sweep = Some(Sweep { parameter: SweepParameter::Width, values: widths.to_vec() });
            c
        }
        "fig2_training" => training(name, 1, 64, LR_RANGE_WHOLE_TRAINING, full),
        "fig2_training_deep" => training(name, 8, 64, LR_RANGE_WHOLE_TRAINING, full),
        "fig3_conditioning" => {
            let mut c = base(name, ExperimentKind::ConditioningSweep);
            c.architecture = square(one_step_width, 1);
            c.rules = rules(&["bp", "pc", "pc+adaptive"]);
            c.sweep = Some(Sweep { parameter: SweepParameter::Kappa, values: KAPPA_GRID.to_vec() });
            c
        }
        "fig3_online" | "fig3_online_deep" => {
            let hidden = if name == "fig3_online" { 1 } else { 8 };
            let mut c = training(name, hidden, 1, LR_RANGE_ONLINE, full);
            c.rules = rules(&["bp", "pc", "pc+adaptive"]);
            c
        }
        "fig4_batch" => {
            let mut c = base(name, ExperimentKind::BatchSizeSweep);
            c.architecture = square(one_step_width, 1);
            c.rules = rules(&["bp", "pc", "pc+decor"]);
            c.sweep = Some(Sweep { parameter: SweepParameter::BatchSize, values: BATCH_GRID.to_vec() });
            c.seeds = seeds(if full { 10 } else { 5 });
            c
        }
        "fig4_training" | "fig4_training_deep" => {
            let deep = name == "fig4_training_deep";
            let mut c = training(name, if deep { 8 } else { 1 }, 64, LR_RANGE_BATCH, full);
            c.rules = rules(&["bp", "pc", "pc+decor", "pc+decor_spectral"]);
            c.spectral_alpha = if deep { 1e-4 } else { 1e-5 };
            c
        }
        "lr_sweep" | "lr_sweep_wide" | "lr_sweep_low" => {
            let range = match name {
                "lr_sweep" => LR_RANGE_ONLINE,
                "lr_sweep_wide" => LR_RANGE_WIDE,
                _ => LR_RANGE_LOW,
            };
            let mut c = training(name, 1, 1, range, full);
            c.kind = ExperimentKind::LrSweep;
            c.rules = rules(&["bp", "pc", "pc+adaptive"]);
            c
        }
        "autoencoder" | "autoencoder_synthetic" => {
            let mut c = base(name, ExperimentKind::Autoencoder);
            c.architecture = Architecture { dims: vec![784, 128, 32, 128, 784], ..Architecture::default() };
            c.init = InitConfig { scheme: InitName::Lecun, kappa: None };
            let source = if name == "autoencoder" { DataSource::Mnist } else { DataSource::SyntheticImages };
            c.data = DataConfig { source, limit: if full { 60_000 } else { 1024 }, dir: None };
            c.rules = rules(&["bp", "pc", "pc+decor_spectral"]);
            c.batch_size = 64;
            c.lr_grid = grid(LR_RANGE_AUTOENCODER, if full { 11 } else { 6 });
            c.steps = if full { 2000 } else { 30 };
            c.seeds = seeds(3);
            c.record_every = if full { 20 } else { 5 };
            c.inference = InferenceSettings {
                max_steps: if full { 10_000 } else { 50 },
                early_stop_grad_norm: 1e-6,
                ..InferenceSettings::default()
            };
            c
        }
        "appendix_resnet" => {
            let mut c = base(name, ExperimentKind::ResnetAlignment);
            c.architecture = square(one_step_width, 1);
            c.init = InitConfig { scheme: InitName::NormPreserving, kappa: None };
            c.rules = rules(&["bp", "pc", "pc+adaptive"]);
            c.sweep = Some(Sweep { parameter: SweepParameter::Depth, values: (1..=8).map(f64::from).collect() });
            c
        }
        other => return Err(ExpError::UnknownPreset(other.to_string())),
    };
    cfg.validate()?;
    Ok(cfg)
}
