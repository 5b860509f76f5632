//! JSON run configuration: schema, validation, flag overrides, and the
//! resolved-config hash embedded in every artifact.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Column roles for one model block.
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Outcome column (may be empty on censored rows).
    pub outcome: String,
    /// Selection indicator column; values must be 0 or 1.
    pub selection: String,
    #[serde(default)]
    pub outcome_covariates: Vec<String>,
    #[serde(default)]
    pub selection_covariates: Vec<String>,
    #[serde(default)]
    pub dispersion_covariates: Vec<String>,
    #[serde(default)]
    pub correlation_covariates: Vec<String>,
    #[serde(default = "default_true")]
    pub outcome_intercept: bool,
    #[serde(default = "default_true")]
    pub selection_intercept: bool,
    #[serde(default = "default_true")]
    pub dispersion_intercept: bool,
    #[serde(default = "default_true")]
    pub correlation_intercept: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// "normal" or "t".
    pub kind: String,
    /// Starting value (free nu) or the fixed value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Hold nu fixed at `nu` instead of estimating it.
    #[serde(default)]
    pub fixed: bool,
}

impl GeneratorConfig {
    pub fn normal() -> Self {
        Self {
            kind: "normal".into(),
            nu: None,
            fixed: false,
        }
    }

    pub fn student() -> Self {
        Self {
            kind: "t".into(),
            nu: None,
            fixed: false,
        }
    }

    pub fn family(&self) -> Result<symheck::GeneratorFamily, CliError> {
        match self.kind.as_str() {
            "normal" | "gaussian" => Ok(symheck::GeneratorFamily::Gaussian),
            "t" | "student" | "student-t" => Ok(symheck::GeneratorFamily::StudentT(
                match (self.fixed, self.nu) {
                    (true, Some(nu)) => symheck::NuMode::Fixed(nu),
                    (true, None) => {
                        return Err(CliError::Config(
                            "generator.fixed requires generator.nu".into(),
                        ))
                    }
                    (false, Some(start)) => symheck::NuMode::Free { start },
                    (false, None) => symheck::NuMode::free_default(),
                },
            )),
            other => Err(CliError::Config(format!(
                "unknown generator kind `{other}` (expected normal or t)"
            ))),
        }
    }

    pub fn label(&self) -> String {
        match (self.kind.as_str(), self.fixed, self.nu) {
            ("normal" | "gaussian", _, _) => "normal".into(),
            (_, true, Some(nu)) => format!("t_fixed({nu})"),
            _ => "t".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledGenerator {
    pub label: String,
    pub generator: GeneratorConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomScenario {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub kappa: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Preset 1, 2, or 3; ignored when `custom` is present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<u8>,
    /// Second correlation variant of scenarios 2 and 3.
    #[serde(default)]
    pub variant: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomScenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nrep: Option<usize>,
    /// Fixed selection threshold a (u = 1 when U* > a); default 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Calibrate the threshold to this censoring fraction instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub censoring_target: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(default)]
    pub allow_nonconverged: bool,
}

impl Default for OptionsConfig {
    fn default() -> Self {
        Self {
            max_iter: None,
            grad_tol: None,
            allow_nonconverged: false,
        }
    }
}

/// The full configuration document, after flag overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    /// Models fit side by side by `diagnose`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<LabeledGenerator>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub options: OptionsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            model: None,
            generator: None,
            models: None,
            simulate: None,
            options: OptionsConfig::default(),
            seed: None,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn fit_options(&self) -> symheck::FitOptions {
        let mut opts = symheck::FitOptions::default();
        if let Some(m) = self.options.max_iter {
            opts.max_iter = m;
        }
        if let Some(g) = self.options.grad_tol {
            opts.grad_tol = g;
        }
        opts
    }

    /// Canonical serialization of the resolved config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Short hash identifying the resolved config in artifacts.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        let mut out = String::with_capacity(16);
        for b in digest.iter().take(8) {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}
