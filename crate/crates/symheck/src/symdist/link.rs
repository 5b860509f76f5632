//! Link functions for the four regression structures.

use crate::error::{Error, Result};

/// Largest correlation magnitude the arctanh inverse will produce.
/// Keeps 1 - rho^2 well away from zero in downstream arithmetic.
pub const RHO_MAX: f64 = 1.0 - 1e-15;

/// Clamp for the arctanh linear predictor before exponentiation.
const ATANH_ETA_MAX: f64 = 18.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    Log,
    ArcTanh,
}

impl Link {
    /// Map from the parameter domain to the linear-predictor scale.
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Link::Identity => x,
            Link::Log => x.ln(),
            Link::ArcTanh => x.atanh(),
        }
    }

    /// Map from the linear-predictor scale back to the parameter domain.
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Log => eta.exp(),
            Link::ArcTanh => eta
                .clamp(-ATANH_ETA_MAX, ATANH_ETA_MAX)
                .tanh()
                .clamp(-RHO_MAX, RHO_MAX),
        }
    }

    /// Derivative of `forward` at x; strictly positive on the domain interior.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Log => 1.0 / x,
            Link::ArcTanh => 1.0 / (1.0 - x * x),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Link::Identity),
            "log" => Ok(Link::Log),
            "arctanh" | "atanh" => Ok(Link::ArcTanh),
            other => Err(Error::Spec(format!("unknown link function `{other}`"))),
        }
    }
}
