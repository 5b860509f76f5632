//! Symmetric bivariate distribution machinery: density generators,
//! univariate normal/Student-t functions, link functions, and the
//! quadrature kernels used by the generic-generator path.
//!
//! Everything here is a pure function of its inputs; values are
//! immutable after construction and safe to share across threads.

pub mod generator;
pub mod link;
pub mod quad;
pub mod special;

pub use generator::{
    g_function, h_function, marginal_z_pdf, DensityGenerator, GenericGenerator, GeneratorKind,
};
pub use link::{Link, RHO_MAX};
pub use special::{
    normal_cdf, normal_logcdf, normal_logpdf, normal_mills_ratio, normal_pdf, normal_quantile,
    t_cdf, t_pdf, TDist,
};
