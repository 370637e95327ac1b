use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ExpError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config validation failed: {}", .0.iter().map(|(f, m)| format!("{f}: {m}")).collect::<Vec<_>>().join("; "))]
    Validation(Vec<(String, String)>),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Output { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] dlnlab::Error),
}

pub type ExpResult<T> = std::result::Result<T, ExpError>;

impl ExpError {
    pub fn kind(&self) -> &'static str {
        match self {
            ExpError::Config(_) => "config",
            ExpError::Validation(_) => "validation",
            ExpError::UnknownPreset(_) => "unknown_preset",
            ExpError::Usage(_) => "usage",
            ExpError::Io { .. } => "io",
            ExpError::Output { .. } => "output",
            ExpError::Core(_) => "numeric",
        }
    }

    /// Machine-readable form written to stderr by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            ExpError::Validation(fields) => {
                v["fields"] = fields.iter().map(|(f, m)| json!({ "field": f, "problem": m })).collect();
            }
            ExpError::Io { path, .. } | ExpError::Output { path, .. } => {
                v["path"] = json!(path.display().to_string());
            }
            _ => {}
        }
        v
    }
}
