//! Selection-model specification and likelihood: design matrices with
//! the four link structures, the conditional outcome density, the mixed
//! observation density, the log-likelihood, and the analytic score.

pub mod likelihood;
pub mod model;

pub use likelihood::{cond_cdf, cond_density, cond_logdensity, loglik, obs_logdensity, score};
pub use model::{
    predictors, GeneratorFamily, Links, ModelSpec, NuMode, ParamNames, ParamVector, Predictors,
    RowParams, SelectionDataset,
};
