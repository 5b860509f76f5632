//! Artifact writers. Every file embeds the tool version, the seed, and
//! the resolved-config hash; CSV files carry them as `#` comment lines,
//! JSON files as fields.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use symheck::diagnose::{ComparisonRow, QqPoint, ResidualSet};
use symheck::{FitResult, MonteCarloSummary, SelectionDataset};

use crate::config::RunConfig;
use crate::CliError;

pub const TOOL: &str = "symheck";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Meta {
    pub fn new(command: &str, seed: u64, config_hash: String) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            seed,
            config_hash,
        }
    }

    fn comment_line(&self) -> String {
        format!(
            "# {} version={} command={} seed={} config_hash={}\n",
            self.tool, self.version, self.command, self.seed, self.config_hash
        )
    }
}

/// Exclusive lock on an output directory for the duration of a run.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(".symheck.lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Io(format!(
                "output directory {} is locked by another run (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::Io(format!(
                "cannot create lock {}: {e}",
                path.display()
            ))),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_csv(
    path: &Path,
    meta: &Meta,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&meta.comment_line());
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Simulated dataset in the scenario column layout (x1..x3 drive all
/// four blocks); outcome empty on censored rows.
pub fn write_dataset_csv(
    path: &Path,
    data: &SelectionDataset,
    meta: &Meta,
) -> Result<(), CliError> {
    let rows = (0..data.n()).map(|i| {
        vec![
            fmt_opt(data.outcome(i)),
            if data.selected(i) { "1" } else { "0" }.to_string(),
            format!("{}", data.w()[(i, 1)]),
            format!("{}", data.w()[(i, 2)]),
            format!("{}", data.w()[(i, 3)]),
        ]
    });
    write_csv(path, meta, &["y", "u", "x1", "x2", "x3"], rows)
}

pub fn write_mc_summary_csv(
    path: &Path,
    summary: &MonteCarloSummary,
    meta: &Meta,
) -> Result<(), CliError> {
    let rows = summary.rows.iter().map(|r| {
        vec![
            r.name.clone(),
            format!("{}", r.true_value),
            format!("{}", r.bias),
            format!("{}", r.mse),
        ]
    });
    write_csv(path, meta, &["parameter", "true_value", "bias", "mse"], rows)
}

#[derive(Serialize)]
pub struct McMeta<'a> {
    #[serde(flatten)]
    pub meta: &'a Meta,
    pub n: usize,
    pub nrep: usize,
    pub threshold: f64,
    pub mean_censoring_pct: f64,
    pub failures: usize,
    pub resolved_config: &'a RunConfig,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize)]
pub struct EstimateRow {
    pub name: String,
    pub estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

#[derive(Serialize)]
pub struct FitReport<'a> {
    #[serde(flatten)]
    pub meta: &'a Meta,
    pub generator: String,
    pub n: usize,
    pub n_observed: usize,
    pub censoring_fraction: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub estimates: Vec<EstimateRow>,
    pub warnings: Vec<String>,
    pub resolved_config: &'a RunConfig,
}

impl<'a> FitReport<'a> {
    pub fn from_fit(
        fit: &FitResult,
        generator: String,
        meta: &'a Meta,
        warnings: Vec<String>,
        config: &'a RunConfig,
    ) -> Self {
        let mut all_warnings = warnings;
        all_warnings.extend(fit.warnings.iter().cloned());
        Self {
            meta,
            generator,
            n: fit.n,
            n_observed: fit.n_observed,
            censoring_fraction: 1.0 - fit.n_observed as f64 / fit.n as f64,
            converged: fit.converged,
            iterations: fit.iterations,
            gradient_norm: fit.gradient_norm,
            loglik: fit.loglik,
            aic: fit.aic,
            bic: fit.bic,
            estimates: fit
                .estimates
                .iter()
                .map(|e| EstimateRow {
                    name: e.name.clone(),
                    estimate: e.estimate,
                    std_error: e.std_error,
                    z_value: e.z_value,
                    p_value: e.p_value,
                })
                .collect(),
            warnings: all_warnings,
            resolved_config: config,
        }
    }
}

pub fn write_residuals_csv(
    path: &Path,
    residuals: &ResidualSet,
    meta: &Meta,
) -> Result<(), CliError> {
    let rows = residuals.rows.iter().map(|r| {
        vec![
            format!("{}", r.index),
            if r.censored { "0" } else { "1" }.to_string(),
            format!("{}", r.survival),
            format!("{}", r.value),
        ]
    });
    write_csv(path, meta, &["row", "u", "survival", "residual"], rows)
}

pub fn write_qq_csv(path: &Path, qq: &[QqPoint], meta: &Meta) -> Result<(), CliError> {
    let rows = qq.iter().map(|p| {
        vec![
            format!("{}", p.index),
            if p.censored { "0" } else { "1" }.to_string(),
            format!("{}", p.residual),
            format!("{}", p.theoretical),
        ]
    });
    write_csv(path, meta, &["row", "u", "residual", "theoretical_quantile"], rows)
}

pub fn write_comparison_csv(
    path: &Path,
    rows: &[ComparisonRow],
    meta: &Meta,
) -> Result<(), CliError> {
    let body = rows.iter().map(|r| {
        vec![
            r.label.clone(),
            format!("{}", r.loglik),
            format!("{}", r.dim),
            format!("{}", r.aic),
            format!("{}", r.bic),
        ]
    });
    write_csv(path, meta, &["model", "loglik", "dim", "aic", "bic"], body)
}

/// Human-readable estimates table; p-values below 1e-300 are truncated
/// for display only (the JSON keeps full precision).
pub fn estimates_table(fit: &FitResult) -> String {
    let mut out = String::from(
        "parameter                      estimate    std.error      z-value      p-value\n",
    );
    for e in &fit.estimates {
        let fmt_num =
            |v: Option<f64>| v.map(|x| format!("{x:>12.4}")).unwrap_or_else(|| format!("{:>12}", "-"));
        let p = match e.p_value {
            None => format!("{:>12}", "-"),
            Some(p) if p < 1e-300 => format!("{:>12}", "<1e-300"),
            Some(p) if p < 1e-4 => format!("{p:>12.3e}"),
            Some(p) => format!("{p:>12.4}"),
        };
        out.push_str(&format!(
            "{:<28} {:>12.4} {} {} {}\n",
            e.name,
            e.estimate,
            fmt_num(e.std_error),
            fmt_num(e.z_value),
            p
        ));
    }
    out
}
