//! Posterior of the effect under each of the four ways of setting the bias prior.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ebfit::{
    default_bound, fit_eb0, fit_mle_calibration, fit_mle_illusion, fit_mm_calibration, fit_sure, internal_eb_theta,
    shrink_biases, FitError, FitMethod, FitReport, ZeroMeanFitter, ZeroMeanSplit,
};
use crate::posterior::{posterior_ceb, posterior_flat};
use crate::study::{GaussianPosterior, StudyCollection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegimeError {
    #[error("{0}")]
    RegimeRequirementUnmet(String),
    #[error("unknown model `{0}` (expected flat, eb0, eb or ceb)")]
    UnknownModel(String),
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// Flat bias prior: the experiment alone.
    Flat,
    /// Zero-mean bias prior with `gamma2` fitted on held-out observational studies.
    Eb0,
    /// `(mu, gamma2)` fitted on the experimental and observational studies.
    Eb,
    /// `(mu, gamma2)` fitted on calibration studies.
    Ceb,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::Flat => "flat",
            Model::Eb0 => "eb0",
            Model::Eb => "eb",
            Model::Ceb => "ceb",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = RegimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(Model::Flat),
            "eb0" => Ok(Model::Eb0),
            "eb" => Ok(Model::Eb),
            "ceb" => Ok(Model::Ceb),
            other => Err(RegimeError::UnknownModel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DispatchOptions {
    /// Upper bound on `gamma2`; the data-driven default when absent.
    pub bound: Option<f64>,
    pub split: ZeroMeanSplit,
}

/// Posterior plus the prior fit behind it, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeOutput {
    pub posterior: GaussianPosterior,
    pub fit: Option<FitReport>,
}

fn unmet(msg: &str) -> RegimeError {
    RegimeError::RegimeRequirementUnmet(msg.to_string())
}

/// Computes the posterior of the effect under `model`.
///
/// `method` selects the prior fitter for `eb0` (`mle` or `mm`) and `ceb`
/// (`mle`, `mm` or `sure`). With `sure`, calibration study `j` is paired with
/// observational study `j` and the shrunken biases are subtracted study by
/// study. `eb` always uses maximum likelihood.
pub fn model_dispatch(
    model: Model,
    c: &StudyCollection,
    method: FitMethod,
    opts: &DispatchOptions,
) -> Result<RegimeOutput, RegimeError> {
    let j = c.num_observational();
    let k = c.num_calibration();
    match model {
        Model::Flat => Ok(RegimeOutput {
            posterior: posterior_flat(&c.experimental),
            fit: None,
        }),
        Model::Eb0 => {
            if j < 2 {
                return Err(unmet("zero-mean EB needs more than one observational study (J > 1)"));
            }
            let fitter = match method {
                FitMethod::Mle => ZeroMeanFitter::Mle,
                FitMethod::Mm => ZeroMeanFitter::Mm,
                FitMethod::Sure => return Err(unmet("zero-mean EB fits gamma2 by mle or mm, not sure")),
            };
            match fit_eb0(c, opts.split, fitter, opts.bound) {
                Ok((fit, posterior)) => Ok(RegimeOutput { posterior, fit: Some(fit) }),
                Err(FitError::TooFewObservationalStudies { got, .. }) => Err(RegimeError::RegimeRequirementUnmet(
                    format!("zero-mean EB needs at least two held-out observational studies to fit gamma2, the split leaves {got}"),
                )),
                Err(e) => Err(e.into()),
            }
        }
        Model::Eb => {
            if j < 1 {
                return Err(unmet("full EB needs at least one observational study (J >= 1)"));
            }
            let bound = opts.bound.unwrap_or_else(|| default_bound(&c.observational));
            let (fit, posterior) = fit_mle_illusion(c, bound)?;
            Ok(RegimeOutput { posterior, fit: Some(fit) })
        }
        Model::Ceb => {
            if k < 2 {
                return Err(unmet("calibrated EB needs at least two calibration studies (K >= 2)"));
            }
            let bound = opts.bound.unwrap_or_else(|| default_bound(&c.calibration));
            let fit = match method {
                FitMethod::Mle => fit_mle_calibration(&c.calibration, bound)?,
                FitMethod::Mm => fit_mm_calibration(&c.calibration)?,
                FitMethod::Sure => {
                    if k != j {
                        return Err(unmet(
                            "SURE calibration pairs calibration study j with observational study j and needs K = J",
                        ));
                    }
                    let fit = fit_sure(&c.calibration, bound)?;
                    let bhat = shrink_biases(&c.calibration, &fit.prior);
                    let posterior = internal_eb_theta(c, &bhat)?;
                    return Ok(RegimeOutput { posterior, fit: Some(fit) });
                }
            };
            Ok(RegimeOutput {
                posterior: posterior_ceb(c, &fit.prior),
                fit: Some(fit),
            })
        }
    }
}
