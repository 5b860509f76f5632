//! Density generators for bivariate symmetric distributions and the
//! quadrature kernels built on them: the marginal of one coordinate, the
//! conditional CDF `G`, and the selection tail probability `H`.
//!
//! Gaussian and Student-t generators dispatch to closed forms; generic
//! generators go through adaptive quadrature. The two routes are kept
//! independent so each can serve as an oracle for the other.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::symdist::quad::{self, QuadOptions};
use crate::symdist::special::{self, TDist};

/// Tolerances for the outer (user-facing) quadratures.
fn outer_opts() -> QuadOptions {
    QuadOptions::default()
}

/// Tighter tolerances for integrals nested inside another quadrature.
fn inner_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-10,
        max_subdivisions: 512,
    }
}

/// A user-supplied density generator: a nonnegative, nonincreasing
/// function on [0, inf) with an integrable tail.
#[derive(Clone)]
pub struct GenericGenerator {
    g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Arguments beyond this are treated as zero so quadrature can
    /// truncate tails it cannot otherwise bound. Use `f64::INFINITY`
    /// when the function is cheap and decays on its own.
    support_cutoff: f64,
}

impl GenericGenerator {
    pub fn new(g: impl Fn(f64) -> f64 + Send + Sync + 'static, support_cutoff: f64) -> Self {
        Self {
            g: Arc::new(g),
            support_cutoff,
        }
    }

    #[inline]
    fn eval(&self, u: f64) -> f64 {
        if u > self.support_cutoff {
            0.0
        } else {
            (self.g)(u)
        }
    }
}

impl fmt::Debug for GenericGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericGenerator")
            .field("support_cutoff", &self.support_cutoff)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum GeneratorKind {
    Gaussian,
    StudentT { nu: f64 },
    Generic(GenericGenerator),
}

/// A density generator together with its normalization constant
/// Z = pi * integral of g over [0, inf).
#[derive(Debug, Clone)]
pub struct DensityGenerator {
    kind: GeneratorKind,
    normalizer: f64,
}

impl DensityGenerator {
    pub fn gaussian() -> Self {
        Self {
            kind: GeneratorKind::Gaussian,
            normalizer: 2.0 * std::f64::consts::PI,
        }
    }

    pub fn student_t(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::Domain(format!(
                "Student-t generator needs nu > 0, got {nu}"
            )));
        }
        // nu * pi * Gamma(nu/2) / Gamma((nu+2)/2); algebraically 2*pi for
        // every nu, evaluated through the gamma form it is defined by.
        let ln_ratio = statrs::function::gamma::ln_gamma(0.5 * nu)
            - statrs::function::gamma::ln_gamma(0.5 * nu + 1.0);
        let normalizer = nu * std::f64::consts::PI * ln_ratio.exp();
        Ok(Self {
            kind: GeneratorKind::StudentT { nu },
            normalizer,
        })
    }

    /// Build a generic generator, computing its normalizer by quadrature.
    pub fn generic(gen: GenericGenerator) -> Result<Self> {
        let tail = quad::integrate_above(
            |u| gen.eval(u),
            0.0,
            &outer_opts(),
            "generator normalizer",
        )
        .map_err(|e| Error::NonNormalizableGenerator(e.to_string()))?;
        let normalizer = std::f64::consts::PI * tail.value;
        if !normalizer.is_finite() || normalizer <= 0.0 {
            return Err(Error::NonNormalizableGenerator(format!(
                "normalizer evaluated to {normalizer}"
            )));
        }
        Ok(Self {
            kind: GeneratorKind::Generic(gen),
            normalizer,
        })
    }

    #[inline]
    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    /// Z = pi * integral of g_c over [0, inf).
    #[inline]
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Evaluate the generator function itself.
    pub fn g(&self, u: f64) -> f64 {
        match &self.kind {
            GeneratorKind::Gaussian => (-0.5 * u).exp(),
            GeneratorKind::StudentT { nu } => (-(0.5 * (nu + 2.0)) * (u / nu).ln_1p()).exp(),
            GeneratorKind::Generic(g) => g.eval(u),
        }
    }
}

/// Integral of g(r^2 + w^2) over w in (-inf, upto] (whole line when
/// `upto` is `None`). Unnormalized building block for the marginal and G.
pub(crate) fn slice_integral(gen: &DensityGenerator, r: f64, upto: Option<f64>) -> Result<f64> {
    let f = |w: f64| gen.g(r * r + w * w);
    let res = match upto {
        None => quad::integrate_real_line(f, 0.0, &inner_opts(), "generator slice")?,
        Some(x) => quad::integrate_below(f, x, &inner_opts(), "generator slice")?,
    };
    Ok(res.value)
}

/// Unnormalized density of rho*Z1 + sqrt(1-rho^2)*Z2 at `t`: the
/// convolution integral of the final-corollary form (marginal slice when
/// rho = 0).
fn combination_density_unnorm(gen: &DensityGenerator, rho: f64, t: f64) -> Result<f64> {
    let ar = rho.abs();
    if ar < 1e-12 {
        return slice_integral(gen, t, None);
    }
    let s = (1.0 - rho * rho).sqrt();
    let f = |zeta: f64| {
        let a = zeta / ar;
        let b = (t - zeta) / s;
        gen.g(a * a + b * b)
    };
    // The quadratic form is minimized at zeta = t * rho^2.
    let center = t * rho * rho;
    let res = quad::integrate_real_line(f, center, &inner_opts(), "combination density")?;
    Ok(res.value / (ar * s))
}

/// Integral of the unnormalized combination density over [lower, inf).
/// Dividing by the normalizer yields H(-lower).
pub(crate) fn combination_tail_unnorm(gen: &DensityGenerator, rho: f64, lower: f64) -> Result<f64> {
    let poisoned = std::cell::Cell::new(false);
    let f = |t: f64| match combination_density_unnorm(gen, rho, t) {
        Ok(v) => v,
        Err(_) => {
            poisoned.set(true);
            f64::NAN
        }
    };
    let opts = QuadOptions {
        abs_tol: 1e-9,
        rel_tol: 1e-7,
        max_subdivisions: 256,
    };
    // Split at zero so the mass near the mode is always resolved.
    let res = if lower < 0.0 {
        let head = quad::integrate(&f, lower, 0.0, &opts, "combination tail")?;
        let tail = quad::integrate_above(&f, 0.0, &opts, "combination tail")?;
        head.value + tail.value
    } else {
        quad::integrate_above(&f, lower, &opts, "combination tail")?.value
    };
    if poisoned.get() {
        return Err(Error::QuadratureNonConvergence {
            context: "combination tail (inner integral failed)".into(),
            estimate: res,
            error_bound: f64::NAN,
            subdivisions: 0,
        });
    }
    Ok(res)
}

/// Marginal density of Z1 (equivalently Z2) at `z`.
pub fn marginal_z_pdf(z: f64, gen: &DensityGenerator) -> Result<f64> {
    match gen.kind() {
        GeneratorKind::Gaussian => Ok(special::normal_pdf(z)),
        GeneratorKind::StudentT { nu } => Ok(TDist::new(*nu)?.pdf(z)),
        GeneratorKind::Generic(_) => Ok(slice_integral(gen, z, None)? / gen.normalizer()),
    }
}

/// Conditional CDF of Z2 given Z1 = r, evaluated at `x`.
///
/// Closed forms: Gaussian -> Phi(x); Student-t -> F_{nu+1} of the
/// rescaled argument. The generic route takes the ratio of two slice
/// integrals.
pub fn g_function(x: f64, r: f64, gen: &DensityGenerator) -> Result<f64> {
    match gen.kind() {
        GeneratorKind::Gaussian => Ok(special::normal_cdf(x)),
        GeneratorKind::StudentT { nu } => {
            let scale = ((nu + 1.0) / (nu + r * r)).sqrt();
            Ok(TDist::new(nu + 1.0)?.cdf(scale * x))
        }
        GeneratorKind::Generic(_) => {
            let num = slice_integral(gen, r, Some(x))?;
            let den = slice_integral(gen, r, None)?;
            if den <= 0.0 || !den.is_finite() {
                return Err(Error::QuadratureNonConvergence {
                    context: format!("conditional CDF denominator at r={r}"),
                    estimate: den,
                    error_bound: f64::NAN,
                    subdivisions: 0,
                });
            }
            Ok((num / den).clamp(0.0, 1.0))
        }
    }
}

/// P(rho*Z1 + sqrt(1-rho^2)*Z2 > -x).
///
/// Closed forms are free of rho (any unit-norm combination of a
/// spherical vector has the marginal law); the generic route evaluates
/// the double-integral form.
pub fn h_function(x: f64, rho: f64, gen: &DensityGenerator) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("correlation must lie in (-1,1), got {rho}")));
    }
    match gen.kind() {
        GeneratorKind::Gaussian => Ok(special::normal_cdf(x)),
        GeneratorKind::StudentT { nu } => Ok(TDist::new(*nu)?.cdf(x)),
        GeneratorKind::Generic(_) => {
            let tail = combination_tail_unnorm(gen, rho, -x)?;
            Ok((tail / gen.normalizer()).clamp(0.0, 1.0))
        }
    }
}
