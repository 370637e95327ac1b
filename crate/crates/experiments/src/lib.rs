//! Experiment configs, presets, the runner and result files for `dlnlab`.

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod runner;

use std::path::Path;

pub use config::ExperimentConfig;
pub use error::{ExpError, ExpResult};
pub use output::{RunOutput, Table};
pub use runner::run;

/// Parses `--seeds` values: `3`, `0,1,5` or the half-open range `0..10`.
pub fn parse_seeds(text: &str) -> ExpResult<Vec<u64>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let bad = |s: &str| ExpError::Usage(format!("cannot parse seeds `{s}` (use 3, 0,1,5 or 0..10)"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad(text))?;
        let b: u64 = b.trim().parse().map_err(|_| bad(text))?;
        return Ok((a..b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad(text))).collect()
}

/// Loads a config from a file or preset name and applies the seed override.
pub fn resolve_config(
    config: Option<&Path>,
    preset: Option<&str>,
    full: bool,
    seeds: Option<&str>,
) -> ExpResult<ExperimentConfig> {
    let mut cfg = match (config, preset) {
        (Some(path), None) => ExperimentConfig::from_path(path)?,
        (None, Some(name)) => presets::preset(name, full)?,
        (Some(_), Some(_)) => return Err(ExpError::Usage("give either --config or --preset, not both".into())),
        (None, None) => return Err(ExpError::Usage("one of --config or --preset is required".into())),
    };
    if let Some(s) = seeds {
        cfg.seeds = parse_seeds(s)?;
        cfg.validate()?;
    }
    Ok(cfg)
}
