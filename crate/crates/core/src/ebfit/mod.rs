//! Empirical-Bayes fitting of the bias prior `(mu, gamma2)`.
//!
//! Three families of fitters are provided:
//!
//! * maximum marginal likelihood ([`fit_mle_calibration`],
//!   [`fit_mle_zero_mean`], [`fit_mle_illusion`]), where `mu` is profiled
//!   out in closed form and `gamma2` is searched over `[0, B]`;
//! * moment matching ([`fit_mm_calibration`], [`fit_mm_zero_mean`]);
//! * Stein's unbiased risk estimate for the heteroskedastic normal-means
//!   problem ([`fit_sure`]), used with paired ("internal") calibration
//!   studies through [`shrink_biases`] and [`internal_eb_theta`].
//!
//! Fitting `mu` and `gamma2` on the observational studies themselves
//! ([`fit_mle_illusion`]) always leaves the posterior mean at the
//! experimental estimate; only the calibration-based fits move it.

mod likelihood;
mod mle;
mod mm;
mod sure;

pub use likelihood::{calibration_loglik, marginal_loglik, marginal_loglik_score, profiled_mu};
pub use mle::{fit_eb0, fit_mle_calibration, fit_mle_illusion, fit_mle_zero_mean, split_observational, ZeroMeanFitter, ZeroMeanSplit};
pub use mm::{fit_mm_calibration, fit_mm_zero_mean, mm_raw_gamma2, mm_zero_mean_raw_gamma2};
pub use sure::{fit_sure, internal_eb_theta, shrink_biases, sure_objective, sure_profiled_mu};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::sample_variance;
use crate::optimize::OptimizeError;
use crate::study::{BiasPrior, StudySummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("no calibration studies supplied")]
    EmptyCalibrationSet,
    #[error("need at least {need} calibration studies, got {got}")]
    TooFewCalibrationStudies { need: usize, got: usize },
    #[error("need at least {need} observational studies, got {got}")]
    TooFewObservationalStudies { need: usize, got: usize },
    #[error("objective is not finite at gamma2 = {0}")]
    NonFiniteObjective(f64),
    #[error("expected {expected} bias estimates, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("upper bound on gamma2 must be finite and positive, got {0}")]
    InvalidBound(f64),
    #[error("unknown fit method `{0}`")]
    UnknownMethod(String),
}

impl From<OptimizeError> for FitError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::NonFiniteObjective(x) => FitError::NonFiniteObjective(x),
            OptimizeError::InvalidInterval(_, hi) => FitError::InvalidBound(hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Mle,
    Mm,
    Sure,
}

impl FitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::Mle => "mle",
            FitMethod::Mm => "mm",
            FitMethod::Sure => "sure",
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitMethod {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mle" => Ok(FitMethod::Mle),
            "mm" => Ok(FitMethod::Mm),
            "sure" => Ok(FitMethod::Sure),
            other => Err(FitError::UnknownMethod(other.to_string())),
        }
    }
}

/// Outcome of one prior fit.
///
/// `objective_value` is the maximised log-likelihood for `mle`, the minimised
/// SURE for `sure`, and for `mm` the calibration log-likelihood evaluated at
/// the moment estimates. `bound_hit` is set when `gamma2` sits at `0` or at the
/// upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub prior: BiasPrior,
    pub method: FitMethod,
    pub objective_value: f64,
    pub iterations: usize,
    pub bound_hit: bool,
}

/// Default search bound for `gamma2`: a thousand times the larger of the
/// sample variance of the estimates and the largest sampling variance.
pub fn default_bound(studies: &[StudySummary]) -> f64 {
    let ys: Vec<f64> = studies.iter().map(|s| s.estimate).collect();
    let max_var = studies.iter().map(|s| s.variance).fold(0.0, f64::max);
    1e3 * sample_variance(&ys).max(max_var)
}

pub(crate) fn check_bound(bound: f64) -> Result<f64, FitError> {
    if bound.is_finite() && bound > 0.0 {
        Ok(bound)
    } else {
        Err(FitError::InvalidBound(bound))
    }
}
