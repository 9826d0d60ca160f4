//! Moment-matching fits.

use super::likelihood::{calibration_loglik, weighted_mean};
use super::{FitError, FitMethod, FitReport};
use crate::numeric::{compensated_sum, mean};
use crate::study::{BiasPrior, StudySummary};

/// Unclamped moment estimate `(1/K) Σ_k [(y_k − ȳ)² − σ_k²]`. May be negative.
pub fn mm_raw_gamma2(calibration: &[StudySummary]) -> Result<f64, FitError> {
    let k = calibration.len();
    if k < 2 {
        return Err(FitError::TooFewCalibrationStudies { need: 2, got: k });
    }
    let ys: Vec<f64> = calibration.iter().map(|s| s.estimate).collect();
    let ybar = mean(&ys);
    Ok(compensated_sum(calibration.iter().map(|s| (s.estimate - ybar).powi(2) - s.variance)) / k as f64)
}

/// Moment estimate of `gamma2` clamped at zero, with `mu` the precision-weighted
/// mean at that `gamma2`.
pub fn fit_mm_calibration(calibration: &[StudySummary]) -> Result<FitReport, FitError> {
    let raw = mm_raw_gamma2(calibration)?;
    let gamma2 = raw.max(0.0);
    let mu = weighted_mean(gamma2, calibration);
    Ok(FitReport {
        prior: BiasPrior { mu, gamma2 },
        method: FitMethod::Mm,
        objective_value: calibration_loglik(mu, gamma2, calibration),
        iterations: 0,
        bound_hit: gamma2 == 0.0,
    })
}

/// Unclamped zero-mean moment estimate `(1/J) Σ_j (y_j² − σ_j²)`.
pub fn mm_zero_mean_raw_gamma2(holdout: &[StudySummary]) -> Result<f64, FitError> {
    let j = holdout.len();
    if j < 2 {
        return Err(FitError::TooFewObservationalStudies { need: 2, got: j });
    }
    Ok(compensated_sum(holdout.iter().map(|s| s.estimate * s.estimate - s.variance)) / j as f64)
}

/// Zero-mean moment fit on a holdout set of observational studies.
pub fn fit_mm_zero_mean(holdout: &[StudySummary]) -> Result<FitReport, FitError> {
    let gamma2 = mm_zero_mean_raw_gamma2(holdout)?.max(0.0);
    Ok(FitReport {
        prior: BiasPrior { mu: 0.0, gamma2 },
        method: FitMethod::Mm,
        objective_value: calibration_loglik(0.0, gamma2, holdout),
        iterations: 0,
        bound_hit: gamma2 == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn studies(pairs: &[(f64, f64)]) -> Vec<StudySummary> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(y, v))| StudySummary::calibration(format!("c{i}"), y, v).unwrap())
            .collect()
    }

    #[test]
    fn calibration_examples() {
        let fit = fit_mm_calibration(&studies(&[(1.0, 1.0), (3.0, 1.0)])).unwrap();
        assert_eq!((fit.prior.gamma2, fit.prior.mu), (0.0, 2.0));
        assert_eq!(mm_raw_gamma2(&studies(&[(1.0, 1.0), (3.0, 1.0)])).unwrap(), 0.0);

        let c = studies(&[(2.0, 1.0), (2.0, 1.0)]);
        assert_eq!(mm_raw_gamma2(&c).unwrap(), -1.0);
        let fit = fit_mm_calibration(&c).unwrap();
        assert_eq!((fit.prior.gamma2, fit.prior.mu), (0.0, 2.0));
        assert!(fit.bound_hit);
    }

    #[test]
    fn zero_mean_examples() {
        assert_eq!(fit_mm_zero_mean(&studies(&[(1.0, 1.0), (-1.0, 1.0)])).unwrap().prior.gamma2, 0.0);
        assert_eq!(fit_mm_zero_mean(&studies(&[(2.0, 1.0), (-2.0, 1.0)])).unwrap().prior.gamma2, 3.0);
        assert_eq!(fit_mm_zero_mean(&studies(&[(0.0, 1.0), (0.0, 1.0)])).unwrap().prior.gamma2, 0.0);
    }

    #[test]
    fn too_few_studies() {
        assert_eq!(
            fit_mm_calibration(&studies(&[(1.0, 1.0)])),
            Err(FitError::TooFewCalibrationStudies { need: 2, got: 1 })
        );
        assert_eq!(
            fit_mm_zero_mean(&studies(&[(1.0, 1.0)])),
            Err(FitError::TooFewObservationalStudies { need: 2, got: 1 })
        );
    }
}
