//! Result tables, CSV/JSON files and plot-data emission.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{ExpError, ExpResult};

/// Version of the CSV column layout; bumped whenever columns change.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_columns(name: impl Into<String>, columns: Vec<String>) -> Self {
        Self { name: name.into(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of one column parsed as floats (unparseable cells become NaN).
    pub fn floats(&self, name: &str) -> Vec<f64> {
        let Some(i) = self.column(name) else { return Vec::new() };
        self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

/// Everything a run produces. `tables` become CSV files; `panels` are the
/// per-panel summaries written by [`emit_plots`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutput {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub tables: Vec<Table>,
    pub panels: Vec<Table>,
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn panel(&self, name: &str) -> Option<&Table> {
        self.panels.iter().find(|t| t.name == name)
    }
}

/// Shortest round-trip text; exponent form outside `[1e-4, 1e7)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e7).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn fmt_list(vs: &[f64]) -> String {
    vs.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";")
}

fn write_file(path: &Path, contents: &str) -> ExpResult<()> {
    fs::write(path, contents).map_err(|source| ExpError::Io { path: path.to_owned(), source })
}

fn create_dir(path: &Path) -> ExpResult<()> {
    fs::create_dir_all(path).map_err(|source| ExpError::Io { path: path.to_owned(), source })
}

/// Writes `<table>.csv` for every table, `results.json`, and the
/// run-specific `metadata.json` (timestamps live only there).
pub fn write_outputs(out: &Path, result: &RunOutput, elapsed: Duration, command: &str) -> ExpResult<Vec<PathBuf>> {
    create_dir(out)?;
    let mut written = Vec::new();
    for t in &result.tables {
        let path = out.join(format!("{}.csv", t.name));
        write_file(&path, &t.to_csv())?;
        written.push(path);
    }
    let results = out.join("results.json");
    let text = serde_json::to_string_pretty(result).expect("results serialize");
    write_file(&results, &text)?;
    written.push(results);
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = json!({
        "created_unix": created,
        "elapsed_secs": elapsed.as_secs_f64(),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
    });
    let meta_path = out.join("metadata.json");
    write_file(&meta_path, &serde_json::to_string_pretty(&meta).expect("metadata serializes"))?;
    written.push(meta_path);
    Ok(written)
}

pub fn read_results(out: &Path) -> ExpResult<RunOutput> {
    let path = out.join("results.json");
    let text = fs::read_to_string(&path).map_err(|source| ExpError::Io { path: path.clone(), source })?;
    serde_json::from_str(&text).map_err(|e| ExpError::Output { path, reason: e.to_string() })
}

/// Writes one whitespace-delimited `plots/<panel>.dat` file per panel, with a
/// `#`-prefixed header line naming the columns.
pub fn emit_plots(out: &Path) -> ExpResult<Vec<PathBuf>> {
    let result = read_results(out)?;
    let dir = out.join("plots");
    create_dir(&dir)?;
    let mut written = Vec::new();
    for p in &result.panels {
        let mut text = format!("# {}\n", p.columns.join(" "));
        for r in &p.rows {
            let cells: Vec<&str> = r.iter().map(|c| if c.is_empty() { "nan" } else { c.as_str() }).collect();
            text.push_str(&cells.join(" "));
            text.push('\n');
        }
        let path = dir.join(format!("{}.dat", p.name));
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}
