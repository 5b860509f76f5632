//! Generalized Heckman sample-selection models with symmetric bivariate
//! errors.
//!
//! The model couples an outcome equation and a selection equation whose
//! error vector follows a bivariate symmetric distribution (Gaussian,
//! Student-t, or a user-supplied density generator), with regression
//! structures on all four parameters: outcome mean, selection mean,
//! dispersion (log link), and correlation (arctanh link). The crate
//! provides maximum-likelihood estimation with an analytic score,
//! exact simulation through the stochastic representation, a Monte
//! Carlo study harness, and martingale-type residual diagnostics.

pub mod diagnose;
pub mod error;
pub mod estimate;
pub mod selmodel;
pub mod simulate;
pub mod symdist;

pub use error::{Error, Result};
pub use estimate::{fit, fit_from, initialize, FitOptions, FitResult, ParameterEstimate};
pub use selmodel::{
    cond_cdf, cond_density, cond_logdensity, loglik, obs_logdensity, predictors, score,
    GeneratorFamily, Links, ModelSpec, NuMode, ParamNames, ParamVector, RowParams,
    SelectionDataset,
};
pub use simulate::{
    calibrate_threshold, generate_dataset, run_study, run_study_with, MonteCarloSummary,
    ScenarioConfig, SimKind, Threshold, TrueParams,
};
pub use symdist::{DensityGenerator, GenericGenerator, GeneratorKind, Link};
