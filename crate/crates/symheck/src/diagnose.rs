//! Martingale-type residuals, QQ-plot data against the standard normal
//! reference, and side-by-side model comparison.

use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::selmodel::{cond_cdf, predictors, ModelSpec, SelectionDataset};
use crate::symdist::special;

/// One residual row. `survival` is the fitted survival of the observed
/// outcome (selected rows) or of the selection event (censored rows).
#[derive(Debug, Clone, Copy)]
pub struct ResidualRow {
    pub index: usize,
    pub censored: bool,
    pub survival: f64,
    /// Martingale residual u + log S.
    pub martingale: f64,
    /// Martingale-type residual (asymptotically standard normal).
    pub value: f64,
}

impl ResidualRow {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct ResidualSet {
    pub rows: Vec<ResidualRow>,
}

impl ResidualSet {
    pub fn finite_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().filter(|r| r.is_finite()).map(|r| r.value)
    }
}

/// The martingale-type transform of one (indicator, survival) pair:
/// r_M = u + log S, r_MT = sign(r_M) sqrt(-2 (r_M + u log(u - r_M))).
///
/// S = 0, or S = 1 on an observed row, maps to a signed infinity
/// sentinel rather than silently dropping the row.
pub fn mt_residual_from_survival(selected: bool, survival: f64) -> (f64, f64) {
    if survival <= 0.0 {
        return (f64::NEG_INFINITY, f64::NEG_INFINITY);
    }
    if selected && survival >= 1.0 {
        return (1.0, f64::INFINITY);
    }
    let u = f64::from(selected);
    let rm = u + survival.ln();
    if rm == 0.0 {
        return (0.0, 0.0);
    }
    let inner = rm + if selected { (u - rm).ln() } else { 0.0 };
    (rm, rm.signum() * (-2.0 * inner).sqrt())
}

/// Martingale-type residuals for every row of a converged fit.
///
/// Selected rows use the conditional-outcome survival 1 - F(y | U* > 0)
/// (by quadrature of the conditional density); censored rows use the
/// selection survival P(U* <= 0) = 1 - H(mu2).
pub fn mt_residuals(
    fit: &FitResult,
    spec: &ModelSpec,
    data: &SelectionDataset,
) -> Result<ResidualSet> {
    if !fit.converged {
        return Err(Error::Diagnostics(
            "residuals require a converged fit".into(),
        ));
    }
    let pred = predictors(spec, &fit.theta, data)?;
    let gen = spec.family.generator_at(fit.theta.log_nu)?;
    let mut rows = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let row = pred.row(i);
        let survival = if data.selected(i) {
            let y = data.outcome(i).ok_or_else(|| {
                Error::Data(format!("row {i} selected but outcome missing"))
            })?;
            1.0 - cond_cdf(y, row, &gen)?
        } else {
            // 1 - H(mu2), stable through the log-CDF.
            match gen.kind() {
                crate::symdist::GeneratorKind::Gaussian => special::normal_cdf(-row.mu2),
                crate::symdist::GeneratorKind::StudentT { nu } => {
                    crate::symdist::TDist::new(*nu)?.cdf(-row.mu2)
                }
                crate::symdist::GeneratorKind::Generic(_) => {
                    1.0 - crate::symdist::h_function(row.mu2, row.rho, &gen)?
                }
            }
        };
        let (martingale, value) = mt_residual_from_survival(data.selected(i), survival);
        rows.push(ResidualRow {
            index: i,
            censored: !data.selected(i),
            survival,
            martingale,
            value,
        });
    }
    Ok(ResidualSet { rows })
}

/// One QQ point: a residual paired with its standard-normal plotting
/// position.
#[derive(Debug, Clone, Copy)]
pub struct QqPoint {
    pub index: usize,
    pub censored: bool,
    pub residual: f64,
    pub theoretical: f64,
}

/// Sorted finite residuals against Phi^-1((i - 1/2)/m) positions.
pub fn qq_data(residuals: &ResidualSet) -> Result<Vec<QqPoint>> {
    let mut finite: Vec<&ResidualRow> =
        residuals.rows.iter().filter(|r| r.is_finite()).collect();
    let m = finite.len();
    if m < 10 {
        return Err(Error::Diagnostics(format!(
            "QQ data needs at least 10 finite residuals, have {m}"
        )));
    }
    finite.sort_by(|a, b| a.value.total_cmp(&b.value));
    finite
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(QqPoint {
                index: r.index,
                censored: r.censored,
                residual: r.value,
                theoretical: special::normal_quantile((i as f64 + 0.5) / m as f64)?,
            })
        })
        .collect()
}

/// One line of the model-comparison table.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub label: String,
    pub loglik: f64,
    pub dim: usize,
    pub aic: f64,
    pub bic: f64,
}

/// Comparison of fits of the same dataset, best AIC first (BIC breaks
/// ties; input order breaks exact ties).
pub fn compare_models(fits: &[&FitResult], labels: &[&str]) -> Result<Vec<ComparisonRow>> {
    if fits.len() != labels.len() {
        return Err(Error::Comparison("one label per fit is required".into()));
    }
    if fits.is_empty() {
        return Err(Error::Comparison("nothing to compare".into()));
    }
    let n0 = fits[0].n;
    if fits.iter().any(|f| f.n != n0) {
        return Err(Error::Comparison(
            "fits were computed on datasets of different sizes".into(),
        ));
    }
    let mut rows: Vec<ComparisonRow> = fits
        .iter()
        .zip(labels)
        .map(|(f, label)| ComparisonRow {
            label: (*label).to_string(),
            loglik: f.loglik,
            dim: f.dim,
            aic: f.aic,
            bic: f.bic,
        })
        .collect();
    // Stable sort preserves input order on exact ties.
    rows.sort_by(|a, b| a.aic.total_cmp(&b.aic).then(a.bic.total_cmp(&b.bic)));
    Ok(rows)
}

/// Plain-text rendering of a comparison table.
pub fn comparison_text(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("model          loglik          dim      AIC           BIC\n");
    for r in rows {
        out.push_str(&format!(
            "{:<12} {:>14.4} {:>6} {:>12.4} {:>12.4}\n",
            r.label, r.loglik, r.dim, r.aic, r.bic
        ));
    }
    out
}
