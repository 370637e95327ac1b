//! Executes an [`ExperimentConfig`] and assembles its tables and panels.
//!
//! Independent cells (setting × seed, or setting × rule × lr × seed) run in
//! parallel; `collect` keeps them in input order, so outputs never depend on
//! scheduling.

use std::collections::BTreeMap;
use std::path::Path;

use dlnlab::data::{gaussian_batch, gen_synthetic};
use dlnlab::metrics::{activity_norms, layer_condition_numbers, mean_defined, mean_sd, mse_loss, weight_distance};
use dlnlab::mnist::{load_mnist, Split};
use dlnlab::network::initialize;
use dlnlab::nonlinear::{nl_alignment, nl_bp_deltas, nl_pc_deltas, nl_pc_infer, NonlinearNet};
use dlnlab::resnet::{resnet_report, ResNetStack};
use dlnlab::rules::{apply_update, update_report, Rule};
use dlnlab::seeding::{domain, rng_for};
use dlnlab::{Batch, Matrix, NetworkSpec, WeightStack};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{DataSource, ExperimentConfig, ExperimentKind, RuleSpec, SweepParameter};
use crate::error::{ExpError, ExpResult};
use crate::output::{fmt_f64, fmt_list, fmt_opt, RunOutput, Table, SCHEMA_VERSION};

/// Condition numbers swept when a conditioning experiment gives no values.
pub const KAPPA_GRID: [f64; 10] = [1.0, 2.0, 10.0, 50.0, 1e3, 1e4, 1e5, 1e7, 1e9, 1e12];

/// Batch sizes swept when a batch-size experiment gives no values.
pub const BATCH_GRID: [f64; 9] = [1.0, 32.0, 64.0, 128.0, 256.0, 480.0, 550.0, 1000.0, 2048.0];

pub const TRAJECTORY_COLUMNS: [&str; 15] = [
    "schema_version",
    "setting",
    "value",
    "seed",
    "step",
    "rule",
    "rescaling",
    "label",
    "lr",
    "loss",
    "weight_distance",
    "mean_ta",
    "layer_kappa",
    "activity_norms",
    "flagged",
];

/// One point of a sweep; `param = None` for unswept runs.
#[derive(Debug, Clone, Copy)]
pub struct Setting {
    pub param: Option<SweepParameter>,
    pub value: f64,
}

impl PartialEq for Setting {
    fn eq(&self, other: &Self) -> bool {
        self.param == other.param && self.value.to_bits() == other.value.to_bits()
    }
}

impl Setting {
    fn name(&self) -> &'static str {
        self.param.map(|p| p.name()).unwrap_or("none")
    }

    fn value_str(&self) -> String {
        if self.param.is_some() {
            fmt_f64(self.value)
        } else {
            String::new()
        }
    }

    fn suffix(&self) -> String {
        match self.param {
            Some(p) => format!("_{}{}", p.name(), fmt_f64(self.value)),
            None => String::new(),
        }
    }
}

pub fn settings(cfg: &ExperimentConfig) -> Vec<Setting> {
    if let Some(s) = &cfg.sweep {
        return s.values.iter().map(|&value| Setting { param: Some(s.parameter), value }).collect();
    }
    let grid: &[f64] = match cfg.kind {
        ExperimentKind::ConditioningSweep => &KAPPA_GRID,
        ExperimentKind::BatchSizeSweep => &BATCH_GRID,
        _ => return vec![Setting { param: None, value: f64::NAN }],
    };
    let param = if cfg.kind == ExperimentKind::ConditioningSweep { SweepParameter::Kappa } else { SweepParameter::BatchSize };
    grid.iter().map(|&value| Setting { param: Some(param), value }).collect()
}

pub fn dims_for(cfg: &ExperimentConfig, s: &Setting) -> Vec<usize> {
    let d = &cfg.architecture.dims;
    match s.param {
        Some(SweepParameter::Depth) => {
            let mut out = vec![d[0]];
            out.extend(std::iter::repeat_n(d[1], s.value as usize));
            out.push(*d.last().expect("validated"));
            out
        }
        Some(SweepParameter::Width) => vec![d[0], s.value as usize, *d.last().expect("validated")],
        _ => d.clone(),
    }
}

fn batch_for(cfg: &ExperimentConfig, s: &Setting) -> usize {
    match s.param {
        Some(SweepParameter::BatchSize) => s.value as usize,
        _ => cfg.batch_size,
    }
}

fn kappa_for(s: &Setting) -> Option<f64> {
    match s.param {
        Some(SweepParameter::Kappa) => Some(s.value),
        _ => None,
    }
}

/// Errors that mark a single cell as flagged instead of aborting the run.
fn is_numeric(e: &dlnlab::Error) -> bool {
    matches!(
        e,
        dlnlab::Error::DegenerateActivity { .. }
            | dlnlab::Error::NonFinite(_)
            | dlnlab::Error::Solver(_)
            | dlnlab::Error::InferenceDiverged { .. }
            | dlnlab::Error::Spectrum(_)
    )
}

fn all_finite(ms: &[Matrix]) -> bool {
    ms.iter().all(|m| m.iter().all(|v| v.is_finite()))
}

pub fn run(cfg: &ExperimentConfig, data_dir: Option<&Path>) -> ExpResult<RunOutput> {
    cfg.validate()?;
    let (tables, panels) = match cfg.kind {
        ExperimentKind::OneStepAlignment | ExperimentKind::ConditioningSweep | ExperimentKind::BatchSizeSweep => {
            one_step(cfg)?
        }
        ExperimentKind::ResnetAlignment => resnet_alignment(cfg)?,
        ExperimentKind::WholeTraining => linear_training(cfg, true)?,
        ExperimentKind::LrSweep => linear_training(cfg, false)?,
        ExperimentKind::Autoencoder => autoencoder(cfg, data_dir)?,
    };
    Ok(RunOutput { schema_version: SCHEMA_VERSION, config: cfg.clone(), tables, panels })
}

// ---------------------------------------------------------------- one step

fn toy_problem() -> (WeightStack, Batch) {
    let stack = WeightStack::new(vec![Matrix::from_element(1, 1, 1.0), Matrix::from_element(2, 1, 1.0)])
        .expect("valid toy network");
    let batch = Batch::new(Matrix::from_element(1, 1, 1.0), Matrix::from_column_slice(2, 1, &[-1.0, 1.0]))
        .expect("valid toy batch");
    (stack, batch)
}

fn one_step_problem(cfg: &ExperimentConfig, s: &Setting, seed: u64) -> ExpResult<(WeightStack, Batch)> {
    if cfg.data.source == DataSource::Toy {
        return Ok(toy_problem());
    }
    let dims = dims_for(cfg, s);
    let stack = initialize(&NetworkSpec::new(dims.clone())?, &cfg.init.scheme(seed, kappa_for(s)))?;
    let b = batch_for(cfg, s);
    let (d_in, d_out) = (dims[0], *dims.last().expect("validated"));
    let batch = match cfg.data.source {
        DataSource::Synthetic => gen_synthetic(seed, d_in, d_out)?.batch(0, b),
        _ => gaussian_batch(seed, 0, d_in, d_out, b)?,
    };
    Ok((stack, batch))
}

const ONE_STEP_COLUMNS: [&str; 14] = [
    "schema_version",
    "setting",
    "value",
    "seed",
    "rule",
    "rescaling",
    "label",
    "batch_size",
    "mean_ta",
    "n_defined",
    "residual_norm",
    "dydt_norm",
    "layer_kappa",
    "flagged",
];

struct AlignRow {
    setting: Setting,
    seed: u64,
    family: &'static str,
    spec: RuleSpec,
    batch_size: usize,
    ta: Option<f64>,
    n_defined: usize,
    residual_norm: f64,
    dydt_norm: f64,
    kappas: Vec<f64>,
    flagged: bool,
}

fn align_row(
    setting: Setting,
    seed: u64,
    family: &'static str,
    spec: RuleSpec,
    kappas: &[f64],
    report: dlnlab::Result<dlnlab::rules::UpdateReport>,
) -> ExpResult<AlignRow> {
    let base = AlignRow {
        setting,
        seed,
        family,
        spec,
        batch_size: 0,
        ta: None,
        n_defined: 0,
        residual_norm: f64::NAN,
        dydt_norm: f64::NAN,
        kappas: kappas.to_vec(),
        flagged: true,
    };
    match report {
        Ok(r) => Ok(AlignRow {
            batch_size: r.residual.ncols(),
            ta: r.mean_ta(),
            n_defined: r.ta_per_sample.iter().flatten().count(),
            residual_norm: r.residual.norm(),
            dydt_norm: r.predicted_dydt.norm(),
            flagged: false,
            ..base
        }),
        Err(e) if is_numeric(&e) => Ok(base),
        Err(e) => Err(e.into()),
    }
}

fn one_step(cfg: &ExperimentConfig) -> ExpResult<(Vec<Table>, Vec<Table>)> {
    let cells: Vec<(Setting, u64)> =
        settings(cfg).into_iter().flat_map(|s| cfg.seeds.iter().map(move |&seed| (s, seed))).collect();
    let rows: Vec<Vec<AlignRow>> = cells
        .par_iter()
        .map(|&(s, seed)| {
            let (stack, batch) = one_step_problem(cfg, &s, seed)?;
            let kappas = layer_condition_numbers(&stack);
            cfg.rules
                .iter()
                .map(|&spec| {
                    let rep = update_report(&stack, &batch, spec.rule, &spec.rescaling(cfg.spectral_alpha));
                    align_row(s, seed, "dln", spec, &kappas, rep)
                })
                .collect()
        })
        .collect::<ExpResult<_>>()?;
    let rows: Vec<AlignRow> = rows.into_iter().flatten().collect();

    let mut records = Table::new(format!("{}_records", cfg.name), &ONE_STEP_COLUMNS);
    for r in &rows {
        records.push(vec![
            SCHEMA_VERSION.to_string(),
            r.setting.name().into(),
            r.setting.value_str(),
            r.seed.to_string(),
            r.spec.rule_name().into(),
            r.spec.rescaling_name().into(),
            r.spec.to_string(),
            r.batch_size.to_string(),
            fmt_opt(r.ta),
            r.n_defined.to_string(),
            fmt_f64(r.residual_norm),
            fmt_f64(r.dydt_norm),
            fmt_list(&r.kappas),
            r.flagged.to_string(),
        ]);
    }
    let (summary, panel) = alignment_summary(cfg, &rows);
    Ok((vec![records, summary], vec![panel]))
}

/// Mean and SD of the per-seed mean TA for every (setting, family, rule).
fn alignment_summary(cfg: &ExperimentConfig, rows: &[AlignRow]) -> (Table, Table) {
    let settings = settings(cfg);
    let mut keys: Vec<(&'static str, RuleSpec)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.family, r.spec)) {
            keys.push((r.family, r.spec));
        }
    }
    let mut summary = Table::new(
        format!("{}_summary", cfg.name),
        &["schema_version", "setting", "value", "family", "label", "mean_ta", "sd_ta", "n"],
    );
    let x_name = settings[0].param.map(|p| p.name()).unwrap_or("setting");
    let mut columns = vec![x_name.to_string()];
    for (family, spec) in &keys {
        let tag = if keys.iter().any(|(f, _)| f != family) { format!("{family}_{spec}") } else { spec.to_string() };
        columns.push(format!("mean_ta_{tag}"));
        columns.push(format!("sd_ta_{tag}"));
    }
    let mut panel = Table::with_columns(format!("{}_{}", cfg.name, x_name), columns);
    for s in &settings {
        let mut prow = vec![if s.param.is_some() { fmt_f64(s.value) } else { "0".into() }];
        for &(family, spec) in &keys {
            let tas: Vec<f64> = rows
                .iter()
                .filter(|r| r.setting == *s)
                .filter(|r| r.family == family && r.spec == spec)
                .filter_map(|r| r.ta)
                .collect();
            let (m, sd) = mean_sd(&tas);
            summary.push(vec![
                SCHEMA_VERSION.to_string(),
                s.name().into(),
                s.value_str(),
                family.into(),
                spec.to_string(),
                fmt_f64(m),
                fmt_f64(sd),
                tas.len().to_string(),
            ]);
            prow.push(fmt_f64(m));
            prow.push(fmt_f64(sd));
        }
        panel.push(prow);
    }
    (summary, panel)
}

// ---------------------------------------------------------------- resnet

fn resnet_alignment(cfg: &ExperimentConfig) -> ExpResult<(Vec<Table>, Vec<Table>)> {
    let width = cfg.architecture.dims[0];
    let default_hidden = cfg.architecture.dims.len().saturating_sub(2) as f64;
    let mut sts = settings(cfg);
    if sts.len() == 1 && sts[0].param.is_none() {
        sts = vec![Setting { param: Some(SweepParameter::Depth), value: default_hidden }];
    }
    let cells: Vec<(Setting, u64)> =
        sts.iter().flat_map(|&s| cfg.seeds.iter().map(move |&seed| (s, seed))).collect();
    let rows: Vec<Vec<AlignRow>> = cells
        .par_iter()
        .map(|&(s, seed)| {
            let hidden = match s.param {
                Some(SweepParameter::Depth) => s.value as usize,
                _ => default_hidden as usize,
            };
            let spec = NetworkSpec::square(width, hidden)?;
            let dln = initialize(&spec, &cfg.init.scheme(seed, kappa_for(&s)))?;
            let res = ResNetStack::new(dln.weights().to_vec())?;
            let batch = gaussian_batch(seed, 0, width, width, batch_for(cfg, &s))?;
            let dln_k = layer_condition_numbers(&dln);
            let mut out = Vec::new();
            for &rule in &cfg.rules {
                let rc = rule.rescaling(cfg.spectral_alpha);
                out.push(align_row(s, seed, "dln", rule, &dln_k, update_report(&dln, &batch, rule.rule, &rc))?);
                out.push(align_row(s, seed, "resnet", rule, &dln_k, resnet_report(&res, &batch, rule.rule, &rc))?);
            }
            Ok(out)
        })
        .collect::<ExpResult<_>>()?;
    let rows: Vec<AlignRow> = rows.into_iter().flatten().collect();
    let mut cols: Vec<&str> = ONE_STEP_COLUMNS.to_vec();
    cols.insert(4, "family");
    let mut records = Table::new(format!("{}_records", cfg.name), &cols);
    for r in &rows {
        records.push(vec![
            SCHEMA_VERSION.to_string(),
            r.setting.name().into(),
            r.setting.value_str(),
            r.seed.to_string(),
            r.family.into(),
            r.spec.rule_name().into(),
            r.spec.rescaling_name().into(),
            r.spec.to_string(),
            r.batch_size.to_string(),
            fmt_opt(r.ta),
            r.n_defined.to_string(),
            fmt_f64(r.residual_norm),
            fmt_f64(r.dydt_norm),
            fmt_list(&r.kappas),
            r.flagged.to_string(),
        ]);
    }
    let mut sweep_cfg = cfg.clone();
    sweep_cfg.sweep = Some(crate::config::Sweep {
        parameter: sts[0].param.expect("depth sweep"),
        values: sts.iter().map(|s| s.value).collect(),
    });
    let (summary, panel) = alignment_summary(&sweep_cfg, &rows);
    Ok((vec![records, summary], vec![panel]))
}

// ---------------------------------------------------------------- training

/// Outcome of one (setting, rule, lr, seed) training run.
#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Selection criterion: final weight distance (linear) or final dataset loss (autoencoder).
    pub final_error: f64,
    pub flagged: bool,
    pub rows: Vec<Vec<String>>,
    /// `(step, error)` at every recorded step.
    pub curve: Vec<(usize, f64)>,
}

struct RowCtx<'a> {
    setting: &'a Setting,
    seed: u64,
    spec: RuleSpec,
    lr: f64,
}

impl RowCtx<'_> {
    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        step: usize,
        loss: f64,
        distance: Option<f64>,
        ta: Option<f64>,
        kappas: &[f64],
        norms: &[f64],
        flagged: bool,
    ) -> Vec<String> {
        vec![
            SCHEMA_VERSION.to_string(),
            self.setting.name().into(),
            self.setting.value_str(),
            self.seed.to_string(),
            step.to_string(),
            self.spec.rule_name().into(),
            self.spec.rescaling_name().into(),
            self.spec.to_string(),
            fmt_f64(self.lr),
            fmt_f64(loss),
            fmt_opt(distance),
            fmt_opt(ta),
            fmt_list(kappas),
            fmt_list(norms),
            flagged.to_string(),
        ]
    }
}

/// Trains a deep linear network on the seeded teacher task.
///
/// Every rule sees the same initial weights and batch sequence for a given
/// seed. With `diagnostics` off only the final distance is computed.
pub fn train_linear(
    cfg: &ExperimentConfig,
    setting: &Setting,
    spec: RuleSpec,
    lr: f64,
    seed: u64,
    diagnostics: bool,
) -> ExpResult<TrainResult> {
    let dims = dims_for(cfg, setting);
    let task = gen_synthetic(seed, dims[0], *dims.last().expect("validated"))?;
    let mut stack = initialize(&NetworkSpec::new(dims)?, &cfg.init.scheme(seed, kappa_for(setting)))?;
    let rescale = spec.rescaling(cfg.spectral_alpha);
    let b = batch_for(cfg, setting);
    let ctx = RowCtx { setting, seed, spec, lr };
    let mut rows = Vec::new();
    let mut curve = Vec::new();
    let mut flagged = false;
    for step in 0..=cfg.steps {
        let batch = task.batch(step as u64, b);
        let last = step == cfg.steps;
        let record = diagnostics && (step % cfg.record_every == 0 || last);
        if last && !record {
            break;
        }
        let report = match update_report(&stack, &batch, spec.rule, &rescale) {
            Ok(r) => r,
            Err(e) if is_numeric(&e) => {
                flagged = true;
                if diagnostics {
                    rows.push(ctx.row(step, f64::NAN, None, None, &[], &[], true));
                }
                break;
            }
            Err(e) => return Err(e.into()),
        };
        if record {
            let distance = weight_distance(&stack, &task.w_data)?;
            let fwd = stack.forward(&batch.x)?;
            let norms = activity_norms(&fwd.activities);
            let kappas = layer_condition_numbers(&stack);
            rows.push(ctx.row(step, mse_loss(&report.residual), Some(distance), report.mean_ta(), &kappas, &norms, false));
            curve.push((step, distance));
        }
        if last {
            break;
        }
        stack = apply_update(&stack, &report, lr)?;
        if !all_finite(stack.weights()) {
            flagged = true;
            if diagnostics {
                rows.push(ctx.row(step + 1, f64::NAN, None, None, &[], &[], true));
            }
            break;
        }
    }
    let final_error = if flagged { f64::INFINITY } else { weight_distance(&stack, &task.w_data)? };
    let final_error = if final_error.is_finite() { final_error } else { f64::INFINITY };
    Ok(TrainResult { final_error, flagged: flagged || final_error.is_infinite(), rows, curve })
}

/// Best learning rate per (setting, rule) from a grid of runs.
#[derive(Debug, Clone)]
pub struct Choice {
    pub setting: Setting,
    pub spec: RuleSpec,
    pub lr: f64,
    pub mean_error: f64,
    pub sd_error: f64,
}

/// Mean and SD over seeds; any non-finite seed makes the mean infinite.
fn seed_stats(errors: &[f64]) -> (f64, f64, usize) {
    let finite: Vec<f64> = errors.iter().copied().filter(|e| e.is_finite()).collect();
    if finite.len() < errors.len() || finite.is_empty() {
        return (f64::INFINITY, f64::NAN, finite.len());
    }
    let (m, sd) = mean_sd(&finite);
    (m, sd, finite.len())
}

type RunFn<'a> = dyn Fn(&Setting, RuleSpec, f64, u64, bool) -> ExpResult<TrainResult> + Sync + 'a;

/// Runs every (setting, rule, lr, seed) cell without diagnostics and picks
/// the lr with the lowest mean final error for each (setting, rule). Ties go
/// to the smaller lr.
fn lr_search(cfg: &ExperimentConfig, sts: &[Setting], run: &RunFn<'_>, error_name: &str) -> ExpResult<(Table, Vec<Choice>)> {
    let lrs = cfg.learning_rates();
    let mut cells = Vec::new();
    for s in sts {
        for &spec in &cfg.rules {
            for &lr in &lrs {
                for &seed in &cfg.seeds {
                    cells.push((*s, spec, lr, seed));
                }
            }
        }
    }
    let results: Vec<f64> = cells
        .par_iter()
        .map(|(s, spec, lr, seed)| run(s, *spec, *lr, *seed, false).map(|r| r.final_error))
        .collect::<ExpResult<_>>()?;
    let mut grid = Table::new(
        format!("{}_lr_grid", cfg.name),
        &[
            "schema_version",
            "setting",
            "value",
            "label",
            "lr",
            &format!("mean_final_{error_name}"),
            &format!("sd_final_{error_name}"),
            "n_finite",
            "best",
        ],
    );
    let n = cfg.seeds.len();
    let mut choices = Vec::new();
    let mut idx = 0;
    for s in sts {
        for &spec in &cfg.rules {
            let mut stats = Vec::new();
            for &lr in &lrs {
                let (m, sd, k) = seed_stats(&results[idx..idx + n]);
                idx += n;
                stats.push((lr, m, sd, k));
            }
            let best = stats
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(a.0.cmp(&b.0)))
                .map(|(i, _)| i)
                .expect("non-empty grid");
            for (i, (lr, m, sd, k)) in stats.iter().enumerate() {
                grid.push(vec![
                    SCHEMA_VERSION.to_string(),
                    s.name().into(),
                    s.value_str(),
                    spec.to_string(),
                    fmt_f64(*lr),
                    fmt_f64(*m),
                    fmt_f64(*sd),
                    k.to_string(),
                    (i == best).to_string(),
                ]);
            }
            let (lr, m, sd, _) = stats[best];
            choices.push(Choice { setting: *s, spec, lr, mean_error: m, sd_error: sd });
        }
    }
    Ok((grid, choices))
}

/// Full-diagnostic reruns at the chosen learning rates plus mean curves.
fn trajectories(
    cfg: &ExperimentConfig,
    choices: &[Choice],
    run: &RunFn<'_>,
    error_name: &str,
) -> ExpResult<(Table, Table, Vec<Table>)> {
    let cells: Vec<(usize, u64)> =
        (0..choices.len()).flat_map(|i| cfg.seeds.iter().map(move |&seed| (i, seed))).collect();
    let runs: Vec<TrainResult> = cells
        .par_iter()
        .map(|&(i, seed)| run(&choices[i].setting, choices[i].spec, choices[i].lr, seed, true))
        .collect::<ExpResult<_>>()?;
    let mut traj = Table::new(format!("{}_trajectory", cfg.name), &TRAJECTORY_COLUMNS);
    for r in &runs {
        for row in &r.rows {
            traj.push(row.clone());
        }
    }
    let mut summary = Table::new(
        format!("{}_summary", cfg.name),
        &[
            "schema_version",
            "setting",
            "value",
            "label",
            "best_lr",
            &format!("mean_final_{error_name}"),
            &format!("sd_final_{error_name}"),
            "n_flagged",
        ],
    );
    let n = cfg.seeds.len();
    // group choices by setting to build one curve panel per setting
    let mut by_setting: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let sts = settings_of(choices);
    for (i, c) in choices.iter().enumerate() {
        let si = sts.iter().position(|s| *s == c.setting).expect("setting present");
        by_setting.entry(si).or_default().push(i);
    }
    for (i, c) in choices.iter().enumerate() {
        let seeds = &runs[i * n..(i + 1) * n];
        let finals: Vec<f64> = seeds.iter().map(|r| r.final_error).collect();
        let (m, sd, _) = seed_stats(&finals);
        summary.push(vec![
            SCHEMA_VERSION.to_string(),
            c.setting.name().into(),
            c.setting.value_str(),
            c.spec.to_string(),
            fmt_f64(c.lr),
            fmt_f64(m),
            fmt_f64(sd),
            seeds.iter().filter(|r| r.flagged).count().to_string(),
        ]);
    }
    let mut panels = Vec::new();
    for (si, idxs) in by_setting {
        let mut cols = vec!["step".to_string()];
        for &i in &idxs {
            cols.push(format!("mean_{error_name}_{}", choices[i].spec));
            cols.push(format!("sd_{error_name}_{}", choices[i].spec));
        }
        let mut panel = Table::with_columns(format!("{}_curve{}", cfg.name, sts[si].suffix()), cols);
        let mut steps: Vec<usize> = idxs
            .iter()
            .flat_map(|&i| runs[i * n..(i + 1) * n].iter().flat_map(|r| r.curve.iter().map(|p| p.0)))
            .collect();
        steps.sort_unstable();
        steps.dedup();
        for step in steps {
            let mut row = vec![step.to_string()];
            for &i in &idxs {
                let vals: Vec<f64> = runs[i * n..(i + 1) * n]
                    .iter()
                    .filter_map(|r| r.curve.iter().find(|p| p.0 == step).map(|p| p.1))
                    .collect();
                let (m, sd) = if vals.len() == n { mean_sd(&vals) } else { (f64::NAN, f64::NAN) };
                row.push(fmt_f64(m));
                row.push(fmt_f64(sd));
            }
            panel.push(row);
        }
        panels.push(panel);
    }
    Ok((traj, summary, panels))
}

fn settings_of(choices: &[Choice]) -> Vec<Setting> {
    let mut out: Vec<Setting> = Vec::new();
    for c in choices {
        if !out.contains(&c.setting) {
            out.push(c.setting);
        }
    }
    out
}

/// Final error against learning rate, one column per rule.
fn lr_panel(cfg: &ExperimentConfig, grid: &Table, sts: &[Setting], error_name: &str) -> Vec<Table> {
    let lrs = cfg.learning_rates();
    let mcol = grid.column(&format!("mean_final_{error_name}")).expect("grid column");
    sts.iter()
        .map(|s| {
            let mut cols = vec!["lr".to_string()];
            cols.extend(cfg.rules.iter().map(|r| format!("mean_final_{error_name}_{r}")));
            let mut panel = Table::with_columns(format!("{}_lr{}", cfg.name, s.suffix()), cols);
            for &lr in &lrs {
                let mut row = vec![fmt_f64(lr)];
                for r in &cfg.rules {
                    let label = r.to_string();
                    let cell = grid
                        .rows
                        .iter()
                        .find(|g| g[2] == s.value_str() && g[3] == label && g[4] == fmt_f64(lr))
                        .map(|g| g[mcol].clone())
                        .unwrap_or_default();
                    row.push(cell);
                }
                panel.push(row);
            }
            panel
        })
        .collect()
}

fn training_outputs(
    cfg: &ExperimentConfig,
    with_trajectories: bool,
    run: &RunFn<'_>,
    error_name: &str,
) -> ExpResult<(Vec<Table>, Vec<Table>)> {
    let sts = settings(cfg);
    let (grid, choices) = lr_search(cfg, &sts, run, error_name)?;
    let mut panels = lr_panel(cfg, &grid, &sts, error_name);
    if !with_trajectories {
        let mut summary = Table::new(
            format!("{}_summary", cfg.name),
            &["schema_version", "setting", "value", "label", "best_lr", &format!("mean_final_{error_name}"), &format!("sd_final_{error_name}")],
        );
        for c in &choices {
            summary.push(vec![
                SCHEMA_VERSION.to_string(),
                c.setting.name().into(),
                c.setting.value_str(),
                c.spec.to_string(),
                fmt_f64(c.lr),
                fmt_f64(c.mean_error),
                fmt_f64(c.sd_error),
            ]);
        }
        return Ok((vec![grid, summary], panels));
    }
    let (traj, summary, curves) = trajectories(cfg, &choices, run, error_name)?;
    panels.extend(curves);
    Ok((vec![grid, summary, traj], panels))
}

fn linear_training(cfg: &ExperimentConfig, with_trajectories: bool) -> ExpResult<(Vec<Table>, Vec<Table>)> {
    let run = |s: &Setting, spec: RuleSpec, lr: f64, seed: u64, diag: bool| train_linear(cfg, s, spec, lr, seed, diag);
    training_outputs(cfg, with_trajectories, &run, "distance")
}

// ---------------------------------------------------------------- autoencoder

/// Deterministic images in `[0, 1]`: two Gaussian bumps per image on a
/// square grid (or a line when `pixels` is not a square).
pub fn synthetic_images(pixels: usize, count: usize) -> Matrix {
    let side = (pixels as f64).sqrt().round() as usize;
    let square = side * side == pixels;
    let mut out = Matrix::zeros(pixels, count);
    for n in 0..count {
        let mut rng = rng_for(0, domain::SAMPLE, n as u64);
        let bumps: Vec<(f64, f64, f64, f64)> = (0..2)
            .map(|_| {
                let span = if square { side as f64 } else { pixels as f64 };
                (rng.random::<f64>() * span, rng.random::<f64>() * span, 1.0 + rng.random::<f64>() * span / 8.0, 0.5 + rng.random::<f64>() * 0.5)
            })
            .collect();
        for p in 0..pixels {
            let (r, c) = if square { ((p / side) as f64, (p % side) as f64) } else { (p as f64, 0.0) };
            let v = bumps
                .iter()
                .map(|&(br, bc, w, h)| {
                    let d2 = (r - br).powi(2) + if square { (c - bc).powi(2) } else { 0.0 };
                    h * (-d2 / (2.0 * w * w)).exp()
                })
                .fold(0.0, f64::max);
            out[(p, n)] = v.clamp(0.0, 1.0);
        }
    }
    out
}

pub fn autoencoder_data(cfg: &ExperimentConfig, data_dir: Option<&Path>) -> ExpResult<Matrix> {
    let pixels = cfg.architecture.dims[0];
    match cfg.data.source {
        DataSource::Mnist => {
            let dir = cfg
                .data
                .dir
                .as_deref()
                .or(data_dir)
                .ok_or_else(|| ExpError::Usage("MNIST runs need --data-dir or data.dir".into()))?;
            let set = load_mnist(dir, Split::Train, Some(cfg.data.limit))?;
            if set.images.nrows() != pixels {
                return Err(ExpError::Usage(format!(
                    "MNIST images have {} pixels, architecture expects {pixels}",
                    set.images.nrows()
                )));
            }
            if set.len() < cfg.batch_size {
                return Err(ExpError::Usage(format!("{} images is fewer than one batch", set.len())));
            }
            Ok(set.images)
        }
        _ => Ok(synthetic_images(pixels, cfg.data.limit)),
    }
}

/// Column indices of the batch used at `step`, reshuffling once per epoch.
fn batch_columns(seed: u64, step: usize, batch: usize, total: usize) -> Vec<usize> {
    let per_epoch = total / batch;
    let epoch = step / per_epoch;
    let k = step % per_epoch;
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng_for(seed, domain::SUBSET, epoch as u64));
    order[k * batch..(k + 1) * batch].to_vec()
}

pub fn train_autoencoder(
    cfg: &ExperimentConfig,
    data: &Matrix,
    spec: RuleSpec,
    lr: f64,
    seed: u64,
    diagnostics: bool,
) -> ExpResult<TrainResult> {
    let arch = &cfg.architecture;
    let mut net = NonlinearNet::init(&NetworkSpec::new(arch.dims.clone())?, arch.hidden_activation, arch.output_activation, seed)?;
    let rescale = spec.rescaling(cfg.spectral_alpha);
    let inference = cfg.inference.to_config();
    let setting = Setting { param: None, value: f64::NAN };
    let ctx = RowCtx { setting: &setting, seed, spec, lr };
    let mut rows = Vec::new();
    let mut curve = Vec::new();
    let mut flagged = false;
    for step in 0..cfg.steps {
        let cols = batch_columns(seed, step, cfg.batch_size, data.ncols());
        let x = data.select_columns(&cols);
        let batch = Batch::new(x.clone(), x)?;
        let deltas = match spec.rule {
            Rule::Bp => nl_bp_deltas(&net, &batch, &rescale),
            Rule::Pc => nl_pc_infer(&net, &batch, &inference)
                .and_then(|inf| nl_pc_deltas(&net, &batch, &inf.activities, &rescale)),
        };
        let deltas = match deltas {
            Ok(d) => d,
            Err(e) if is_numeric(&e) => {
                flagged = true;
                if diagnostics {
                    rows.push(ctx.row(step, f64::NAN, None, None, &[], &[], true));
                }
                break;
            }
            Err(e) => return Err(e.into()),
        };
        if diagnostics && (step % cfg.record_every == 0 || step + 1 == cfg.steps) {
            let loss = net.loss(&batch)?;
            let ta = mean_defined(&nl_alignment(&net, &batch, &deltas)?);
            let norms = activity_norms(&net.forward(&batch.x)?.activities);
            rows.push(ctx.row(step, loss, None, ta, &[], &norms, false));
            curve.push((step, loss));
        }
        net = net.with_deltas(&deltas, lr)?;
        if !all_finite(net.weights()) {
            flagged = true;
            if diagnostics {
                rows.push(ctx.row(step + 1, f64::NAN, None, None, &[], &[], true));
            }
            break;
        }
    }
    let final_error = if flagged { f64::INFINITY } else { net.loss(&Batch::new(data.clone(), data.clone())?)? };
    let final_error = if final_error.is_finite() { final_error } else { f64::INFINITY };
    Ok(TrainResult { final_error, flagged: flagged || final_error.is_infinite(), rows, curve })
}

fn autoencoder(cfg: &ExperimentConfig, data_dir: Option<&Path>) -> ExpResult<(Vec<Table>, Vec<Table>)> {
    let data = autoencoder_data(cfg, data_dir)?;
    let run = |_: &Setting, spec: RuleSpec, lr: f64, seed: u64, diag: bool| train_autoencoder(cfg, &data, spec, lr, seed, diag);
    training_outputs(cfg, true, &run, "loss")
}
