//! SURE-tuned shrinkage of paired calibration biases.
//!
//! Each calibration estimate `y_k ~ N(b_k, σ_k²)` is shrunk toward a common
//! mean: `b̂_k = B_k mu + (1 − B_k) y_k` with `B_k = σ_k²/(σ_k² + gamma2)`.
//! Stein's unbiased estimate of the average squared error of that rule is
//!
//! `(1/K) Σ_k [B_k² (y_k − mu)² + σ_k² (gamma2 − σ_k²)/(σ_k² + gamma2)]`,
//!
//! which is quadratic in `mu` for fixed `gamma2`.

use super::{check_bound, FitError, FitMethod, FitReport};
use crate::numeric::CompensatedSum;
use crate::optimize::BoundedSearch;
use crate::posterior::posterior_flat;
use crate::study::{BiasPrior, GaussianPosterior, StudyCollection, StudySummary};

/// SURE of the shrinkage rule at `(mu, gamma2)`.
pub fn sure_objective(mu: f64, gamma2: f64, calibration: &[StudySummary]) -> f64 {
    let total: CompensatedSum = calibration
        .iter()
        .map(|s| {
            let a = s.variance;
            let b = a / (a + gamma2);
            b * b * (s.estimate - mu).powi(2) + a * (gamma2 - a) / (a + gamma2)
        })
        .collect();
    total.value() / calibration.len() as f64
}

/// Minimiser of [`sure_objective`] in `mu`: the mean of the estimates weighted by `B_k²`.
pub fn sure_profiled_mu(gamma2: f64, calibration: &[StudySummary]) -> f64 {
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for s in calibration {
        let b = s.variance / (s.variance + gamma2);
        num.add(b * b * s.estimate);
        den.add(b * b);
    }
    num.value() / den.value()
}

fn sure_score(mu: f64, gamma2: f64, calibration: &[StudySummary]) -> f64 {
    let total: CompensatedSum = calibration
        .iter()
        .map(|s| {
            let t = s.variance + gamma2;
            2.0 * s.variance * s.variance / (t * t) * (1.0 - (s.estimate - mu).powi(2) / t)
        })
        .collect();
    total.value() / calibration.len() as f64
}

/// Minimises SURE over `gamma2 ∈ [0, bound]` with `mu` profiled.
pub fn fit_sure(calibration: &[StudySummary], bound: f64) -> Result<FitReport, FitError> {
    let k = calibration.len();
    if k < 2 {
        return Err(FitError::TooFewCalibrationStudies { need: 2, got: k });
    }
    let bound = check_bound(bound)?;
    let opt = BoundedSearch::default().minimize(
        |g| sure_objective(sure_profiled_mu(g, calibration), g, calibration),
        Some(|g| sure_score(sure_profiled_mu(g, calibration), g, calibration)),
        0.0,
        bound,
    )?;
    Ok(FitReport {
        prior: BiasPrior {
            mu: sure_profiled_mu(opt.x, calibration),
            gamma2: opt.x,
        },
        method: FitMethod::Sure,
        objective_value: opt.value,
        iterations: opt.iterations,
        bound_hit: opt.x == 0.0 || opt.x == bound,
    })
}

/// Shrinks each calibration estimate toward `prior.mu`.
pub fn shrink_biases(calibration: &[StudySummary], prior: &BiasPrior) -> Vec<f64> {
    calibration
        .iter()
        .map(|s| {
            let t = s.variance + prior.gamma2;
            if prior.gamma2 == 0.0 {
                prior.mu
            } else {
                prior.gamma2 / t * s.estimate + s.variance / t * prior.mu
            }
        })
        .collect()
}

/// Effect estimate from observational studies debiased by per-study bias
/// estimates `bhat` (paired with the observational list by position).
///
/// The variance is the reciprocal of `σ_e⁻² + Σ_j σ_oj⁻²`. It treats `bhat` as
/// known and so understates the uncertainty.
pub fn internal_eb_theta(c: &StudyCollection, bhat: &[f64]) -> Result<GaussianPosterior, FitError> {
    let j = c.num_observational();
    if bhat.len() != j {
        return Err(FitError::LengthMismatch { expected: j, got: bhat.len() });
    }
    if j == 0 {
        return Ok(posterior_flat(&c.experimental));
    }
    let e = &c.experimental;
    let mut num = CompensatedSum::new();
    let mut prec = CompensatedSum::new();
    num.add(e.estimate / e.variance);
    prec.add(1.0 / e.variance);
    for (o, b) in c.observational.iter().zip(bhat) {
        num.add((o.estimate - b) / o.variance);
        prec.add(1.0 / o.variance);
    }
    let precision = prec.value();
    Ok(GaussianPosterior {
        mean: num.value() / precision,
        variance: 1.0 / precision,
    })
}
