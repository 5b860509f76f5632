//! Model specification: design matrices, links, generator family,
//! parameter layout, and the linear predictors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::symdist::{DensityGenerator, Link};

/// The four link functions (outcome mean, selection mean, dispersion,
/// correlation). Defaults are identity, identity, log, arctanh.
#[derive(Debug, Clone, Copy)]
pub struct Links {
    pub g1: Link,
    pub g2: Link,
    pub h1: Link,
    pub h2: Link,
}

impl Default for Links {
    fn default() -> Self {
        Self {
            g1: Link::Identity,
            g2: Link::Identity,
            h1: Link::Log,
            h2: Link::ArcTanh,
        }
    }
}

/// Whether the Student-t degrees of freedom are estimated or held fixed.
#[derive(Debug, Clone, Copy)]
pub enum NuMode {
    Fixed(f64),
    Free { start: f64 },
}

impl NuMode {
    pub fn free_default() -> Self {
        NuMode::Free { start: 8.0 }
    }
}

/// Error-distribution family of the model.
#[derive(Debug, Clone)]
pub enum GeneratorFamily {
    Gaussian,
    StudentT(NuMode),
    /// A prebuilt generic generator (normalizer already computed).
    Generic(DensityGenerator),
}

impl GeneratorFamily {
    pub fn has_free_nu(&self) -> bool {
        matches!(self, GeneratorFamily::StudentT(NuMode::Free { .. }))
    }

    /// Concrete generator at the given parameter value.
    pub fn generator_at(&self, log_nu: Option<f64>) -> Result<DensityGenerator> {
        match self {
            GeneratorFamily::Gaussian => Ok(DensityGenerator::gaussian()),
            GeneratorFamily::StudentT(NuMode::Fixed(nu)) => DensityGenerator::student_t(*nu),
            GeneratorFamily::StudentT(NuMode::Free { start }) => match log_nu {
                Some(l) => DensityGenerator::student_t(l.exp()),
                None => DensityGenerator::student_t(*start),
            },
            GeneratorFamily::Generic(gen) => Ok(gen.clone()),
        }
    }
}

/// Outcome, selection indicator, and the four covariate blocks.
///
/// The outcome is stored per row as an `Option` and is `None` on every
/// censored row, so a placeholder value can never leak into the
/// likelihood.
#[derive(Debug, Clone)]
pub struct SelectionDataset {
    y: Vec<Option<f64>>,
    u: Vec<bool>,
    x: DMatrix<f64>,
    w: DMatrix<f64>,
    z: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl SelectionDataset {
    pub fn new(
        y: Vec<Option<f64>>,
        u: Vec<bool>,
        x: DMatrix<f64>,
        w: DMatrix<f64>,
        z: DMatrix<f64>,
        v: DMatrix<f64>,
    ) -> Result<Self> {
        let n = u.len();
        if y.len() != n {
            return Err(Error::Data(format!(
                "outcome has {} rows but selection indicator has {n}",
                y.len()
            )));
        }
        for (name, m) in [("X", &x), ("W", &w), ("Z", &z), ("V", &v)] {
            if m.nrows() != n {
                return Err(Error::Data(format!(
                    "design {name} has {} rows, expected {n}",
                    m.nrows()
                )));
            }
            if m.ncols() == 0 {
                return Err(Error::Data(format!("design {name} has no columns")));
            }
        }
        let mut y = y;
        for i in 0..n {
            if u[i] {
                match y[i] {
                    Some(v) if v.is_finite() => {}
                    _ => {
                        return Err(Error::Data(format!(
                            "row {i} is selected but has no finite outcome"
                        )))
                    }
                }
            } else {
                // Placeholder outcomes on censored rows are discarded.
                y[i] = None;
            }
        }
        Ok(Self { y, u, x, w, z, v })
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn n_observed(&self) -> usize {
        self.u.iter().filter(|&&s| s).count()
    }

    pub fn censoring_fraction(&self) -> f64 {
        1.0 - self.n_observed() as f64 / self.n() as f64
    }

    #[inline]
    pub fn selected(&self, i: usize) -> bool {
        self.u[i]
    }

    #[inline]
    pub fn outcome(&self, i: usize) -> Option<f64> {
        self.y[i]
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// The same dataset with rows rearranged by `order` (a permutation).
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n() {
            return Err(Error::Data("permutation length mismatch".into()));
        }
        let pick_rows =
            |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(order[i], j)]);
        Ok(Self {
            y: order.iter().map(|&i| self.y[i]).collect(),
            u: order.iter().map(|&i| self.u[i]).collect(),
            x: pick_rows(&self.x),
            w: pick_rows(&self.w),
            z: pick_rows(&self.z),
            v: pick_rows(&self.v),
        })
    }

    /// Stack this dataset on top of `other` (same column layout).
    pub fn stacked(&self, other: &Self) -> Result<Self> {
        for (name, a, b) in [
            ("X", &self.x, &other.x),
            ("W", &self.w, &other.w),
            ("Z", &self.z, &other.z),
            ("V", &self.v, &other.v),
        ] {
            if a.ncols() != b.ncols() {
                return Err(Error::Data(format!("column mismatch stacking {name}")));
            }
        }
        let stack = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            let mut m = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
            m.rows_mut(0, a.nrows()).copy_from(a);
            m.rows_mut(a.nrows(), b.nrows()).copy_from(b);
            m
        };
        Ok(Self {
            y: self.y.iter().chain(&other.y).copied().collect(),
            u: self.u.iter().chain(&other.u).copied().collect(),
            x: stack(&self.x, &other.x),
            w: stack(&self.w, &other.w),
            z: stack(&self.z, &other.z),
            v: stack(&self.v, &other.v),
        })
    }
}

fn full_column_rank(m: &DMatrix<f64>) -> bool {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return false;
    }
    let tol = smax * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    svd.singular_values.iter().filter(|&&s| s > tol).count() == m.ncols()
}

/// Parameter names for reporting, one entry per coefficient.
#[derive(Debug, Clone)]
pub struct ParamNames {
    pub beta: Vec<String>,
    pub gamma: Vec<String>,
    pub lambda: Vec<String>,
    pub kappa: Vec<String>,
}

impl ParamNames {
    fn numbered(prefix: &str, count: usize) -> Vec<String> {
        (1..=count).map(|i| format!("{prefix}{i}")).collect()
    }

    pub fn default_for(k: usize, l: usize, p: usize, q: usize) -> Self {
        Self {
            beta: Self::numbered("beta", k),
            gamma: Self::numbered("gamma", l),
            lambda: Self::numbered("lambda", p),
            kappa: Self::numbered("kappa", q),
        }
    }
}

/// Model specification: links, generator family, and the block
/// dimensions validated against a dataset.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub links: Links,
    pub family: GeneratorFamily,
    k: usize,
    l: usize,
    p: usize,
    q: usize,
    n: usize,
    names: ParamNames,
}

impl ModelSpec {
    pub fn new(data: &SelectionDataset, links: Links, family: GeneratorFamily) -> Result<Self> {
        let (k, l, p, q) = (
            data.x().ncols(),
            data.w().ncols(),
            data.z().ncols(),
            data.v().ncols(),
        );
        let n = data.n();
        if k + l + p + q >= n {
            return Err(Error::Spec(format!(
                "identifiability requires k+l+p+q < n, got {k}+{l}+{p}+{q} >= {n}"
            )));
        }
        for (name, m) in [("X", data.x()), ("W", data.w()), ("Z", data.z()), ("V", data.v())] {
            if !full_column_rank(m) {
                return Err(Error::Spec(format!("design {name} is rank-deficient")));
            }
        }
        Ok(Self {
            links,
            family,
            k,
            l,
            p,
            q,
            n,
            names: ParamNames::default_for(k, l, p, q),
        })
    }

    pub fn with_names(mut self, names: ParamNames) -> Result<Self> {
        if names.beta.len() != self.k
            || names.gamma.len() != self.l
            || names.lambda.len() != self.p
            || names.kappa.len() != self.q
        {
            return Err(Error::Spec("parameter name lengths do not match blocks".into()));
        }
        self.names = names;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn l(&self) -> usize {
        self.l
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of free parameters, counting nu when it is estimated.
    pub fn dim(&self) -> usize {
        self.k + self.l + self.p + self.q + usize::from(self.family.has_free_nu())
    }

    /// Reporting names in the fixed concatenation order.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend(self.names.beta.iter().cloned());
        out.extend(self.names.gamma.iter().cloned());
        out.extend(self.names.lambda.iter().cloned());
        out.extend(self.names.kappa.iter().cloned());
        if self.family.has_free_nu() {
            out.push("nu".to_string());
        }
        out
    }
}

/// Coefficients in the fixed order (beta, gamma, lambda, kappa, log nu).
///
/// The degrees of freedom ride along as log nu so the optimizer works on
/// an unconstrained scale; `None` when the family has no free nu.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub lambda: DVector<f64>,
    pub kappa: DVector<f64>,
    pub log_nu: Option<f64>,
}

impl ParamVector {
    pub fn new(
        beta: Vec<f64>,
        gamma: Vec<f64>,
        lambda: Vec<f64>,
        kappa: Vec<f64>,
        log_nu: Option<f64>,
    ) -> Self {
        Self {
            beta: DVector::from_vec(beta),
            gamma: DVector::from_vec(gamma),
            lambda: DVector::from_vec(lambda),
            kappa: DVector::from_vec(kappa),
            log_nu,
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
            + self.gamma.len()
            + self.lambda.len()
            + self.kappa.len()
            + usize::from(self.log_nu.is_some())
    }

    pub fn matches(&self, spec: &ModelSpec) -> bool {
        self.beta.len() == spec.k()
            && self.gamma.len() == spec.l()
            && self.lambda.len() == spec.p()
            && self.kappa.len() == spec.q()
            && self.log_nu.is_some() == spec.family.has_free_nu()
    }

    /// Flatten into the optimizer layout.
    pub fn to_flat(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend(self.beta.iter());
        out.extend(self.gamma.iter());
        out.extend(self.lambda.iter());
        out.extend(self.kappa.iter());
        if let Some(l) = self.log_nu {
            out.push(l);
        }
        DVector::from_vec(out)
    }

    /// Rebuild from the optimizer layout.
    pub fn from_flat(spec: &ModelSpec, flat: &DVector<f64>) -> Result<Self> {
        if flat.len() != spec.dim() {
            return Err(Error::Spec(format!(
                "flat parameter vector has length {}, expected {}",
                flat.len(),
                spec.dim()
            )));
        }
        let (k, l, p, q) = (spec.k(), spec.l(), spec.p(), spec.q());
        let s = flat.as_slice();
        Ok(Self {
            beta: DVector::from_row_slice(&s[0..k]),
            gamma: DVector::from_row_slice(&s[k..k + l]),
            lambda: DVector::from_row_slice(&s[k + l..k + l + p]),
            kappa: DVector::from_row_slice(&s[k + l + p..k + l + p + q]),
            log_nu: spec.family.has_free_nu().then(|| s[k + l + p + q]),
        })
    }
}

/// Per-observation model parameters implied by theta.
#[derive(Debug, Clone, Copy)]
pub struct RowParams {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
    pub rho: f64,
    pub alpha: f64,
    pub tau: f64,
}

impl RowParams {
    /// Derived quantities alpha = rho/sqrt(1-rho^2) and
    /// tau = mu2/sqrt(1-rho^2) are always recomputed here.
    pub fn new(mu1: f64, mu2: f64, sigma: f64, rho: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!("dispersion must be positive, got {sigma}")));
        }
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::Domain(format!("correlation must lie in (-1,1), got {rho}")));
        }
        let s = (1.0 - rho * rho).sqrt();
        Ok(Self {
            mu1,
            mu2,
            sigma,
            rho,
            alpha: rho / s,
            tau: mu2 / s,
        })
    }
}

/// Linear predictors mapped through the inverse links, for every row.
#[derive(Debug, Clone)]
pub struct Predictors {
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rho: Vec<f64>,
    pub alpha: Vec<f64>,
    pub tau: Vec<f64>,
}

impl Predictors {
    pub fn n(&self) -> usize {
        self.mu1.len()
    }

    pub fn row(&self, i: usize) -> RowParams {
        RowParams {
            mu1: self.mu1[i],
            mu2: self.mu2[i],
            sigma: self.sigma[i],
            rho: self.rho[i],
            alpha: self.alpha[i],
            tau: self.tau[i],
        }
    }
}

/// mu1 = g1^-1(X beta), mu2 = g2^-1(W gamma), sigma = h1^-1(Z lambda),
/// rho = h2^-1(V kappa), plus the derived alpha and tau.
pub fn predictors(
    spec: &ModelSpec,
    theta: &ParamVector,
    data: &SelectionDataset,
) -> Result<Predictors> {
    if !theta.matches(spec) {
        return Err(Error::Spec(
            "parameter vector dimensions do not match the model specification".into(),
        ));
    }
    if data.n() != spec.n() {
        return Err(Error::Spec(format!(
            "dataset has {} rows but the specification was built for {}",
            data.n(),
            spec.n()
        )));
    }
    let eta1 = data.x() * &theta.beta;
    let eta2 = data.w() * &theta.gamma;
    let eta3 = data.z() * &theta.lambda;
    let eta4 = data.v() * &theta.kappa;

    let n = data.n();
    let mut out = Predictors {
        mu1: Vec::with_capacity(n),
        mu2: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        rho: Vec::with_capacity(n),
        alpha: Vec::with_capacity(n),
        tau: Vec::with_capacity(n),
    };
    for i in 0..n {
        let mu1 = spec.links.g1.inverse(eta1[i]);
        let mu2 = spec.links.g2.inverse(eta2[i]);
        let sigma = spec.links.h1.inverse(eta3[i]);
        let rho = spec.links.h2.inverse(eta4[i]);
        let s = (1.0 - rho * rho).sqrt();
        out.mu1.push(mu1);
        out.mu2.push(mu2);
        out.sigma.push(sigma);
        out.rho.push(rho);
        out.alpha.push(rho / s);
        out.tau.push(mu2 / s);
    }
    Ok(out)
}
