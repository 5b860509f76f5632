//! Library side of the command-line front end: configuration loading,
//! CSV ingestion, and artifact writers. The binary in `main.rs` wires
//! these into the fit / simulate / diagnose workflows.

pub mod artifacts;
pub mod config;
pub mod ingest;

use std::fmt;

/// CLI-level error with an exit code and a machine-readable rendering.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, missing columns, malformed input (exit 2).
    Config(String),
    /// Model or numeric failure propagated from the library (exit 1).
    Model(symheck::Error),
    /// Filesystem problems, including lock contention (exit 1).
    Io(String),
    /// The fit did not converge and --allow-nonconverged was absent (exit 3).
    NotConverged(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "{m}"),
            CliError::NotConverged(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<symheck::Error> for CliError {
    fn from(e: symheck::Error) -> Self {
        CliError::Model(e)
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Model(_) => "model",
            CliError::Io(_) => "io",
            CliError::NotConverged(_) => "not_converged",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NotConverged(_) => 3,
            _ => 1,
        }
    }

    /// One-object JSON rendering for machine consumption.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind(), "message": self.to_string() }
        })
        .to_string()
    }
}
