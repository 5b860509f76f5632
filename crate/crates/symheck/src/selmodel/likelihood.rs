//! Conditional density of the outcome given selection, the mixed
//! discrete/continuous observation density, the log-likelihood, and the
//! analytic score.
//!
//! Everything is computed in log space. For an observed row the
//! selection probability H cancels against the conditioning, so the
//! contribution is -log sigma + log f_Z1(r) + log G(tau + alpha r)
//! with r = (y - mu1)/sigma; a censored row contributes log(1 - H(mu2)).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::selmodel::model::{
    predictors, GeneratorFamily, ModelSpec, ParamVector, Predictors, RowParams, SelectionDataset,
};
use crate::symdist::generator::{combination_tail_unnorm, slice_integral};
use crate::symdist::quad::{self, QuadOptions};
use crate::symdist::special::{self, TDist};
use crate::symdist::{DensityGenerator, GeneratorKind};

/// Evaluation kernel for one (generator, theta) pair. Student-t keeps
/// its two normalizing constants so per-row loops stay cheap.
pub(crate) enum Kernel {
    Gaussian,
    Student { t: TDist, t1: TDist },
    Generic(DensityGenerator),
}

impl Kernel {
    pub(crate) fn from_generator(gen: &DensityGenerator) -> Result<Self> {
        Ok(match gen.kind() {
            GeneratorKind::Gaussian => Kernel::Gaussian,
            GeneratorKind::StudentT { nu } => Kernel::Student {
                t: TDist::new(*nu)?,
                t1: TDist::new(*nu + 1.0)?,
            },
            GeneratorKind::Generic(_) => Kernel::Generic(gen.clone()),
        })
    }

    fn for_model(spec: &ModelSpec, theta: &ParamVector) -> Result<Self> {
        Self::from_generator(&spec.family.generator_at(theta.log_nu)?)
    }

    /// log f_Z1(r) + log G(q; r): the continuous part of an observed row
    /// before the -log sigma term.
    fn log_f_g(&self, r: f64, q: f64) -> Result<f64> {
        match self {
            Kernel::Gaussian => Ok(special::normal_logpdf(r) + special::normal_logcdf(q)),
            Kernel::Student { t, t1 } => {
                let scale = ((t.nu() + 1.0) / (t.nu() + r * r)).sqrt();
                Ok(t.logpdf(r) + t1.logcdf(scale * q))
            }
            Kernel::Generic(gen) => {
                let num = slice_integral(gen, r, Some(q))?;
                Ok(num.ln() - gen.normalizer().ln())
            }
        }
    }

    /// log P(U* <= 0) = log(1 - H(mu2)) = log H(-mu2).
    fn log_one_minus_h(&self, mu2: f64, rho: f64) -> Result<f64> {
        match self {
            Kernel::Gaussian => Ok(special::normal_logcdf(-mu2)),
            Kernel::Student { t, .. } => Ok(t.logcdf(-mu2)),
            Kernel::Generic(gen) => {
                let tail = combination_tail_unnorm(gen, rho, mu2)?;
                Ok(tail.ln() - gen.normalizer().ln())
            }
        }
    }

    /// log H(mu2) = log P(U* > 0).
    fn log_h(&self, mu2: f64, rho: f64) -> Result<f64> {
        match self {
            Kernel::Gaussian => Ok(special::normal_logcdf(mu2)),
            Kernel::Student { t, .. } => Ok(t.logcdf(mu2)),
            Kernel::Generic(gen) => {
                let tail = combination_tail_unnorm(gen, rho, -mu2)?;
                Ok(tail.ln() - gen.normalizer().ln())
            }
        }
    }
}

/// log of the conditional outcome density f_{Y*|U*>0}(y).
///
/// Built-in generators use their closed forms; a generic generator goes
/// through the quadrature kernels (slice integral for the numerator,
/// double-integral tail for the denominator).
pub fn cond_logdensity(y: f64, row: RowParams, gen: &DensityGenerator) -> Result<f64> {
    let kernel = Kernel::from_generator(gen)?;
    cond_logdensity_kernel(&kernel, y, row)
}

fn cond_logdensity_kernel(kernel: &Kernel, y: f64, row: RowParams) -> Result<f64> {
    let r = (y - row.mu1) / row.sigma;
    let q = row.tau + row.alpha * r;
    Ok(-row.sigma.ln() + kernel.log_f_g(r, q)? - kernel.log_h(row.mu2, row.rho)?)
}

/// Conditional outcome density f_{Y*|U*>0}(y); see `cond_logdensity`.
pub fn cond_density(y: f64, row: RowParams, gen: &DensityGenerator) -> Result<f64> {
    Ok(cond_logdensity(y, row, gen)?.exp())
}

/// CDF of the conditional outcome distribution, by adaptive quadrature
/// of `cond_density` from below.
pub fn cond_cdf(y: f64, row: RowParams, gen: &DensityGenerator) -> Result<f64> {
    let kernel = Kernel::from_generator(gen)?;
    let poisoned = std::cell::Cell::new(false);
    let f = |t: f64| match cond_logdensity_kernel(&kernel, t, row) {
        Ok(l) => l.exp(),
        Err(_) => {
            poisoned.set(true);
            f64::NAN
        }
    };
    let opts = QuadOptions {
        abs_tol: 1e-10,
        rel_tol: 1e-8,
        max_subdivisions: 512,
    };
    let res = quad::integrate_below(f, y, &opts, "conditional outcome CDF")?;
    if poisoned.get() {
        return Err(Error::QuadratureNonConvergence {
            context: "conditional outcome CDF (density evaluation failed)".into(),
            estimate: res.value,
            error_bound: res.error_bound,
            subdivisions: res.subdivisions,
        });
    }
    Ok(res.value.clamp(0.0, 1.0))
}

/// Log density of one observation of the mixed pair (Y, U).
///
/// A censored row (u = 0) contributes log(1 - H(mu2)); an observed row
/// contributes the expanded form -log sigma + log f_Z1(r) + log G(q; r),
/// in which the H factors have cancelled analytically.
pub fn obs_logdensity(
    y: Option<f64>,
    u: bool,
    row: RowParams,
    gen: &DensityGenerator,
) -> Result<f64> {
    let kernel = Kernel::from_generator(gen)?;
    obs_logdensity_kernel(&kernel, y, u, row)
}

fn obs_logdensity_kernel(
    kernel: &Kernel,
    y: Option<f64>,
    u: bool,
    row: RowParams,
) -> Result<f64> {
    if u {
        let y = y.ok_or_else(|| Error::Data("observed row without outcome value".into()))?;
        let r = (y - row.mu1) / row.sigma;
        let q = row.tau + row.alpha * r;
        Ok(-row.sigma.ln() + kernel.log_f_g(r, q)?)
    } else {
        kernel.log_one_minus_h(row.mu2, row.rho)
    }
}

/// Log-likelihood of theta over the full dataset.
pub fn loglik(spec: &ModelSpec, theta: &ParamVector, data: &SelectionDataset) -> Result<f64> {
    let pred = predictors(spec, theta, data)?;
    let kernel = Kernel::for_model(spec, theta)?;
    loglik_inner(&kernel, &pred, data)
}

fn loglik_inner(kernel: &Kernel, pred: &Predictors, data: &SelectionDataset) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.n() {
        let term = obs_logdensity_kernel(kernel, data.outcome(i), data.selected(i), pred.row(i))?;
        if !term.is_finite() {
            return Err(Error::NonFinite {
                row: i,
                what: "log-likelihood term",
            });
        }
        total += term;
    }
    Ok(total)
}

/// Per-row derivatives of the log density with respect to the four
/// distribution parameters, before the chain rule through the links.
struct RowGrad {
    dmu1: f64,
    dmu2: f64,
    dsigma: f64,
    drho: f64,
}

fn row_grad(kernel: &Kernel, y: Option<f64>, u: bool, row: RowParams) -> Result<RowGrad> {
    if !u {
        // d/dmu2 log(1 - H(mu2)) = -h(-mu2) / H(-mu2), h the marginal pdf.
        let dmu2 = match kernel {
            Kernel::Gaussian => -special::normal_mills_ratio(-row.mu2),
            Kernel::Student { t, .. } => -t.hazard_ratio(-row.mu2),
            Kernel::Generic(_) => unreachable!("analytic score is closed-form only"),
        };
        return Ok(RowGrad {
            dmu1: 0.0,
            dmu2,
            dsigma: 0.0,
            drho: 0.0,
        });
    }
    let y = y.ok_or_else(|| Error::Data("observed row without outcome value".into()))?;
    let r = (y - row.mu1) / row.sigma;
    let q = row.tau + row.alpha * r;
    // lf: d log f_Z1 / dr. ratio: conditional density over G at q.
    // dlogg_dr: the explicit r-dependence of G (zero for the Gaussian,
    // whose conditional law does not move with r).
    let (lf, ratio, dlogg_dr) = match kernel {
        Kernel::Gaussian => (-r, special::normal_mills_ratio(q), 0.0),
        Kernel::Student { t, t1 } => {
            let nu = t.nu();
            let scale = ((nu + 1.0) / (nu + r * r)).sqrt();
            let tail = (t1.logpdf(scale * q) - t1.logcdf(scale * q)).exp();
            let ratio = scale * tail;
            // dA/dr = -r A/(nu + r^2)  =>  dlogG/dr = tail * q * dA/dr.
            let dlogg_dr = -ratio * q * r / (nu + r * r);
            (t.logpdf_derivative(r), ratio, dlogg_dr)
        }
        Kernel::Generic(_) => unreachable!("analytic score is closed-form only"),
    };
    let s2 = 1.0 - row.rho * row.rho;
    let core = lf + row.alpha * ratio + dlogg_dr;
    Ok(RowGrad {
        dmu1: -core / row.sigma,
        dsigma: -(1.0 + r * core) / row.sigma,
        dmu2: ratio / s2.sqrt(),
        drho: ratio * (r + row.mu2 * row.rho) / (s2 * s2.sqrt()),
    })
}

/// Analytic score (gradient of `loglik`) in the flat layout.
///
/// Gaussian and Student-t use the closed-form blocks; the free
/// degrees-of-freedom coordinate and generic-generator models fall back
/// to central finite differences of the log-likelihood.
pub fn score(
    spec: &ModelSpec,
    theta: &ParamVector,
    data: &SelectionDataset,
) -> Result<DVector<f64>> {
    if matches!(spec.family, GeneratorFamily::Generic(_)) {
        return fd_score_full(spec, theta, data);
    }
    let pred = predictors(spec, theta, data)?;
    let kernel = Kernel::for_model(spec, theta)?;
    let (k, l, p, q) = (spec.k(), spec.l(), spec.p(), spec.q());
    let mut out = DVector::zeros(spec.dim());
    for i in 0..data.n() {
        let row = pred.row(i);
        let g = row_grad(&kernel, data.outcome(i), data.selected(i), row)?;
        if !(g.dmu1.is_finite() && g.dmu2.is_finite() && g.dsigma.is_finite() && g.drho.is_finite())
        {
            return Err(Error::NonFinite {
                row: i,
                what: "score term",
            });
        }
        // Chain rule through the links: d(param)/d(coef) = covariate / link'.
        let c1 = g.dmu1 / spec.links.g1.derivative(row.mu1);
        let c2 = g.dmu2 / spec.links.g2.derivative(row.mu2);
        let c3 = g.dsigma / spec.links.h1.derivative(row.sigma);
        let c4 = g.drho / spec.links.h2.derivative(row.rho);
        for j in 0..k {
            out[j] += c1 * data.x()[(i, j)];
        }
        for j in 0..l {
            out[k + j] += c2 * data.w()[(i, j)];
        }
        for j in 0..p {
            out[k + l + j] += c3 * data.z()[(i, j)];
        }
        for j in 0..q {
            out[k + l + p + j] += c4 * data.v()[(i, j)];
        }
    }
    if spec.family.has_free_nu() {
        let idx = k + l + p + q;
        out[idx] = fd_partial(spec, theta, data, idx)?;
    }
    Ok(out)
}

/// Central finite difference of `loglik` along flat coordinate `idx`.
fn fd_partial(
    spec: &ModelSpec,
    theta: &ParamVector,
    data: &SelectionDataset,
    idx: usize,
) -> Result<f64> {
    let flat = theta.to_flat();
    let h = 1e-6 * flat[idx].abs().max(1.0);
    let mut hi = flat.clone();
    hi[idx] += h;
    let mut lo = flat;
    lo[idx] -= h;
    let f_hi = loglik(spec, &ParamVector::from_flat(spec, &hi)?, data)?;
    let f_lo = loglik(spec, &ParamVector::from_flat(spec, &lo)?, data)?;
    Ok((f_hi - f_lo) / (2.0 * h))
}

fn fd_score_full(
    spec: &ModelSpec,
    theta: &ParamVector,
    data: &SelectionDataset,
) -> Result<DVector<f64>> {
    let dim = spec.dim();
    let mut out = DVector::zeros(dim);
    for idx in 0..dim {
        out[idx] = fd_partial(spec, theta, data, idx)?;
    }
    Ok(out)
}
