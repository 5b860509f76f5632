//! CSV ingestion: header-driven column lookup, strict numeric parsing,
//! and assembly of the four design blocks.

use std::path::Path;

use nalgebra::DMatrix;
use symheck::{ParamNames, SelectionDataset};

use crate::config::ModelConfig;
use crate::CliError;

pub struct IngestedData {
    pub dataset: SelectionDataset,
    pub names: ParamNames,
    pub warnings: Vec<String>,
}

fn column_index(headers: &[String], name: &str, path: &Path) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| {
            CliError::Config(format!(
                "column `{name}` not found in {} (header has: {})",
                path.display(),
                headers.join(", ")
            ))
        })
}

fn block_names(prefix: &str, intercept: bool, cols: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(cols.len() + usize::from(intercept));
    if intercept {
        out.push(format!("{prefix}:(Intercept)"));
    }
    out.extend(cols.iter().map(|c| format!("{prefix}:{c}")));
    out
}

/// Read a CSV file into a selection dataset following the model block
/// configuration. Lines starting with `#` are treated as comments.
pub fn ingest_csv(path: &Path, model: &ModelConfig) -> Result<IngestedData, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Config(format!("bad CSV header in {}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();

    let outcome_idx = column_index(&headers, &model.outcome, path)?;
    let selection_idx = column_index(&headers, &model.selection, path)?;
    let block_idx = |cols: &[String]| -> Result<Vec<usize>, CliError> {
        cols.iter().map(|c| column_index(&headers, c, path)).collect()
    };
    let x_idx = block_idx(&model.outcome_covariates)?;
    let w_idx = block_idx(&model.selection_covariates)?;
    let z_idx = block_idx(&model.dispersion_covariates)?;
    let v_idx = block_idx(&model.correlation_covariates)?;

    let mut y: Vec<Option<f64>> = Vec::new();
    let mut u: Vec<bool> = Vec::new();
    let mut raw: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    let mut bad_rows: Vec<(usize, String)> = Vec::new();
    let mut ignored_outcomes = 0usize;

    // Union of covariate columns that must be present and numeric.
    let mut needed: Vec<usize> = x_idx
        .iter()
        .chain(&w_idx)
        .chain(&z_idx)
        .chain(&v_idx)
        .copied()
        .collect();
    needed.sort_unstable();
    needed.dedup();

    for (row_no, record) in reader.records().enumerate() {
        let line = row_no + 2; // header is line 1
        let record =
            record.map_err(|e| CliError::Config(format!("CSV parse error at line {line}: {e}")))?;
        let field = |idx: usize| record.get(idx).unwrap_or("");

        let sel = match field(selection_idx) {
            "0" => false,
            "1" => true,
            other => match other.parse::<f64>() {
                Ok(v) if v == 0.0 => false,
                Ok(v) if v == 1.0 => true,
                _ => {
                    bad_rows.push((
                        line,
                        format!("selection column must be 0 or 1, got `{other}`"),
                    ));
                    continue;
                }
            },
        };

        let outcome_raw = field(outcome_idx);
        let outcome = if outcome_raw.is_empty() {
            None
        } else {
            match outcome_raw.parse::<f64>() {
                Ok(v) => Some(v),
                Err(_) => {
                    bad_rows.push((line, format!("non-numeric outcome `{outcome_raw}`")));
                    continue;
                }
            }
        };
        if sel && outcome.is_none() {
            bad_rows.push((line, "selected row has empty outcome".into()));
            continue;
        }
        if !sel && outcome.is_some() {
            ignored_outcomes += 1;
        }

        let mut covs: Vec<(usize, f64)> = Vec::with_capacity(needed.len());
        let mut row_ok = true;
        for &idx in &needed {
            match field(idx).parse::<f64>() {
                Ok(v) if v.is_finite() => covs.push((idx, v)),
                _ => {
                    bad_rows.push((
                        line,
                        format!("missing or non-numeric covariate `{}`", headers[idx]),
                    ));
                    row_ok = false;
                    break;
                }
            }
        }
        if !row_ok {
            continue;
        }
        y.push(outcome);
        u.push(sel);
        for (idx, v) in covs {
            raw[idx].push(v);
        }
    }

    if !bad_rows.is_empty() {
        let shown: Vec<String> = bad_rows
            .iter()
            .take(10)
            .map(|(line, why)| format!("line {line}: {why}"))
            .collect();
        return Err(CliError::Config(format!(
            "{} rejected row(s) in {}: {}{}",
            bad_rows.len(),
            path.display(),
            shown.join("; "),
            if bad_rows.len() > 10 { "; ..." } else { "" }
        )));
    }
    let n = u.len();
    if n == 0 {
        return Err(CliError::Config(format!("{} has no data rows", path.display())));
    }

    let build = |idx: &[usize], intercept: bool| -> DMatrix<f64> {
        let ncols = idx.len() + usize::from(intercept);
        DMatrix::from_fn(n, ncols, |i, j| {
            if intercept && j == 0 {
                1.0
            } else {
                let col = idx[j - usize::from(intercept)];
                raw[col][i]
            }
        })
    };
    let dataset = SelectionDataset::new(
        y,
        u,
        build(&x_idx, model.outcome_intercept),
        build(&w_idx, model.selection_intercept),
        build(&z_idx, model.dispersion_intercept),
        build(&v_idx, model.correlation_intercept),
    )
    .map_err(CliError::Model)?;

    let names = ParamNames {
        beta: block_names("outcome", model.outcome_intercept, &model.outcome_covariates),
        gamma: block_names(
            "selection",
            model.selection_intercept,
            &model.selection_covariates,
        ),
        lambda: block_names(
            "dispersion",
            model.dispersion_intercept,
            &model.dispersion_covariates,
        ),
        kappa: block_names(
            "correlation",
            model.correlation_intercept,
            &model.correlation_covariates,
        ),
    };
    let mut warnings = Vec::new();
    if ignored_outcomes > 0 {
        warnings.push(format!(
            "{ignored_outcomes} censored row(s) carry an outcome value; those values are ignored"
        ));
    }
    Ok(IngestedData {
        dataset,
        names,
        warnings,
    })
}
