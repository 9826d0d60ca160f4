//! Closed-form posteriors of the causal effect under a flat effect prior.
//!
//! With biases `b_j ~ N(mu, gamma2)` integrated out, each observational study
//! is `y_oj | theta ~ N(theta + mu, sigma_oj^2 + gamma2)` and the posterior of
//! `theta` is normal with precision
//! `sigma_e^-2 + sum_j (sigma_oj^2 + gamma2)^-1`.
//! A flat bias prior is the `gamma2 -> inf` limit, where the observational
//! studies drop out entirely.

use crate::numeric::CompensatedSum;
use crate::study::{BiasPrior, GaussianPosterior, StudyCollection, StudySummary};

/// Posterior under flat priors on both the effect and the biases: the
/// experiment alone, `N(y_e, sigma_e^2)`.
pub fn posterior_flat(experimental: &StudySummary) -> GaussianPosterior {
    GaussianPosterior {
        mean: experimental.estimate,
        variance: experimental.variance,
    }
}

/// Precision-weighted pieces shared by the posterior and the marginal likelihood.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PosteriorParts {
    /// `sigma_e^-2 y_e + sum_j w_j (y_oj - mu)`
    pub numerator: f64,
    /// `sigma_e^-2 + sum_j w_j`
    pub precision: f64,
}

pub(crate) fn posterior_parts(c: &StudyCollection, prior: &BiasPrior) -> PosteriorParts {
    let e = &c.experimental;
    let mut num = CompensatedSum::new();
    let mut prec = CompensatedSum::new();
    num.add(e.estimate / e.variance);
    prec.add(1.0 / e.variance);
    for o in &c.observational {
        let w = 1.0 / (o.variance + prior.gamma2);
        num.add(w * (o.estimate - prior.mu));
        prec.add(w);
    }
    PosteriorParts {
        numerator: num.value(),
        precision: prec.value(),
    }
}

/// Posterior of the effect for a fixed bias prior `(mu, gamma2)`.
pub fn posterior_given_prior(c: &StudyCollection, prior: &BiasPrior) -> GaussianPosterior {
    if c.observational.is_empty() {
        return posterior_flat(&c.experimental);
    }
    let p = posterior_parts(c, prior);
    GaussianPosterior {
        mean: p.numerator / p.precision,
        variance: 1.0 / p.precision,
    }
}

/// Calibrated posterior: [`posterior_given_prior`] evaluated at a prior fitted
/// on the calibration studies (see [`crate::ebfit`]).
pub fn posterior_ceb(c: &StudyCollection, fitted: &BiasPrior) -> GaussianPosterior {
    posterior_given_prior(c, fitted)
}

/// Zero-mean-bias posterior written as the experimental estimate plus a
/// shrinkage correction toward the observational studies. Algebraically equal
/// to `posterior_given_prior(c, (0, gamma2))`.
pub fn posterior_zero_mean_correction_form(c: &StudyCollection, gamma2: f64) -> GaussianPosterior {
    let e = &c.experimental;
    if c.observational.is_empty() {
        return posterior_flat(e);
    }
    let mut num = CompensatedSum::new();
    let mut prec = CompensatedSum::new();
    prec.add(1.0 / e.variance);
    for o in &c.observational {
        let w = 1.0 / (o.variance + gamma2);
        num.add(w * (o.estimate - e.estimate));
        prec.add(w);
    }
    let precision = prec.value();
    GaussianPosterior {
        mean: e.estimate + num.value() / precision,
        variance: 1.0 / precision,
    }
}

#[cfg(feature = "oracle")]
pub use oracle::{posterior_quadrature_oracle, QuadratureError};

#[cfg(feature = "oracle")]
mod oracle {
    use super::*;
    use thiserror::Error;

    #[derive(Debug, Error, Clone, PartialEq)]
    pub enum QuadratureError {
        #[error("quadrature grid needs at least 1001 points, got {0}")]
        TooFewPoints(usize),
        #[error("{0:e} of the posterior mass sits on the grid boundary")]
        GridTooNarrow(f64),
    }

    /// Numerically integrates the unnormalised posterior of `theta` (flat
    /// prior, biases marginalised) on a uniform grid of `grid_points` nodes
    /// spanning `grid_halfwidth` posterior standard deviations either side of
    /// the closed-form mean. Returns the grid mean and variance.
    pub fn posterior_quadrature_oracle(
        c: &StudyCollection,
        prior: &BiasPrior,
        grid_halfwidth: f64,
        grid_points: usize,
    ) -> Result<GaussianPosterior, QuadratureError> {
        if grid_points < 1001 {
            return Err(QuadratureError::TooFewPoints(grid_points));
        }
        let centre = posterior_given_prior(c, prior);
        let half = grid_halfwidth * centre.sd();
        let lo = centre.mean - half;
        let h = 2.0 * half / (grid_points - 1) as f64;

        let log_density = |theta: f64| -> f64 {
            let e = &c.experimental;
            let mut s = -0.5 * (e.estimate - theta).powi(2) / e.variance;
            for o in &c.observational {
                let v = o.variance + prior.gamma2;
                s -= 0.5 * (o.estimate - prior.mu - theta).powi(2) / v;
            }
            s
        };

        let thetas: Vec<f64> = (0..grid_points).map(|i| lo + h * i as f64).collect();
        let logs: Vec<f64> = thetas.iter().map(|&t| log_density(t)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();

        // trapezoid rule; the common factor h cancels
        let node = |i: usize| if i == 0 || i == grid_points - 1 { 0.5 } else { 1.0 };
        let mut mass = CompensatedSum::new();
        let mut first = CompensatedSum::new();
        for i in 0..grid_points {
            mass.add(node(i) * weights[i]);
            first.add(node(i) * weights[i] * thetas[i]);
        }
        let mass = mass.value();
        let mean = first.value() / mass;
        let mut second = CompensatedSum::new();
        for i in 0..grid_points {
            second.add(node(i) * weights[i] * (thetas[i] - mean).powi(2));
        }
        let boundary = (weights[0] + weights[grid_points - 1]) / mass;
        if boundary > 1e-9 {
            return Err(QuadratureError::GridTooNarrow(boundary));
        }
        Ok(GaussianPosterior {
            mean,
            variance: second.value() / mass,
        })
    }
}
