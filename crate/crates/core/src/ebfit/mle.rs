//! Profiled maximum marginal likelihood fits.

use super::likelihood::{calibration_loglik, calibration_score, marginal_loglik, marginal_loglik_score, weighted_mean};
use super::mm::fit_mm_zero_mean;
use super::{check_bound, default_bound, FitError, FitMethod, FitReport};
use crate::optimize::BoundedSearch;
use crate::posterior::posterior_zero_mean_correction_form;
use crate::study::{BiasPrior, GaussianPosterior, StudyCollection, StudySummary};

fn report(mu: f64, gamma2: f64, value: f64, iterations: usize, bound: f64) -> FitReport {
    FitReport {
        prior: BiasPrior { mu, gamma2 },
        method: FitMethod::Mle,
        objective_value: value,
        iterations,
        bound_hit: gamma2 == 0.0 || gamma2 == bound,
    }
}

/// Fits `(mu, gamma2)` to the calibration studies by maximising their
/// marginal likelihood, `mu` profiled out as the precision-weighted mean.
pub fn fit_mle_calibration(calibration: &[StudySummary], bound: f64) -> Result<FitReport, FitError> {
    match calibration.len() {
        0 => return Err(FitError::EmptyCalibrationSet),
        1 => return Err(FitError::TooFewCalibrationStudies { need: 2, got: 1 }),
        _ => {}
    }
    let bound = check_bound(bound)?;
    let opt = BoundedSearch::default().maximize(
        |g| calibration_loglik(weighted_mean(g, calibration), g, calibration),
        Some(|g| calibration_score(weighted_mean(g, calibration), g, calibration)),
        0.0,
        bound,
    )?;
    let mu = weighted_mean(opt.x, calibration);
    Ok(report(mu, opt.x, opt.value, opt.iterations, bound))
}

/// Fits `gamma2` with the bias mean pinned at zero by maximising the joint
/// marginal likelihood of the experimental and observational estimates.
pub fn fit_mle_zero_mean(c: &StudyCollection, bound: f64) -> Result<FitReport, FitError> {
    let j = c.num_observational();
    if j < 2 {
        return Err(FitError::TooFewObservationalStudies { need: 2, got: j });
    }
    let bound = check_bound(bound)?;
    let opt = BoundedSearch::default().maximize(
        |g| marginal_loglik(0.0, g, c),
        Some(|g| marginal_loglik_score(0.0, g, c)),
        0.0,
        bound,
    )?;
    Ok(report(0.0, opt.x, opt.value, opt.iterations, bound))
}

/// Fits `(mu, gamma2)` on the experimental and observational estimates alone.
///
/// For each `gamma2` the best `mu` is the precision-weighted observational
/// mean minus `y_e`, which moves every residual by exactly the experimental
/// estimate. The posterior mean is therefore `y_e` whatever `gamma2` is, and it
/// is returned as such; the variance is the reciprocal of
/// `σ_e⁻² + Σ_j (σ_oj² + gamma2)⁻¹` at the fitted `gamma2`.
pub fn fit_mle_illusion(c: &StudyCollection, bound: f64) -> Result<(FitReport, GaussianPosterior), FitError> {
    let j = c.num_observational();
    if j < 1 {
        return Err(FitError::TooFewObservationalStudies { need: 1, got: j });
    }
    let bound = check_bound(bound)?;
    let ye = c.experimental.estimate;
    let mu_at = |g: f64| weighted_mean(g, &c.observational) - ye;
    let opt = BoundedSearch::default().maximize(
        |g| marginal_loglik(mu_at(g), g, c),
        Some(|g| marginal_loglik_score(mu_at(g), g, c)),
        0.0,
        bound,
    )?;
    let fit = report(mu_at(opt.x), opt.x, opt.value, opt.iterations, bound);
    let precision = 1.0 / c.experimental.variance
        + c.observational
            .iter()
            .map(|o| 1.0 / (o.variance + opt.x))
            .collect::<crate::numeric::CompensatedSum>()
            .value();
    let posterior = GaussianPosterior {
        mean: ye,
        variance: 1.0 / precision,
    };
    Ok((fit, posterior))
}

/// How the observational studies are divided between estimating the effect
/// and fitting `gamma2` in the zero-mean regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroMeanSplit {
    /// First `J - J/2` studies estimate, last `J/2` fit.
    #[default]
    Half,
    /// Even positions estimate, odd positions fit.
    EvenOdd,
    /// Every study is used for both.
    None,
}

impl std::str::FromStr for ZeroMeanSplit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "half" => Ok(ZeroMeanSplit::Half),
            "even-odd" | "evenodd" => Ok(ZeroMeanSplit::EvenOdd),
            "none" => Ok(ZeroMeanSplit::None),
            other => Err(format!("unknown split `{other}` (expected half, even-odd or none)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroMeanFitter {
    #[default]
    Mle,
    Mm,
}

/// Splits a collection into the part used for the posterior and the holdout
/// used to fit `gamma2`. Calibration studies are dropped from both.
pub fn split_observational(c: &StudyCollection, split: ZeroMeanSplit) -> (StudyCollection, Vec<StudySummary>) {
    let obs = &c.observational;
    let (estimation, holdout): (Vec<StudySummary>, Vec<StudySummary>) = match split {
        ZeroMeanSplit::Half => {
            let cut = obs.len() - obs.len() / 2;
            (obs[..cut].to_vec(), obs[cut..].to_vec())
        }
        ZeroMeanSplit::EvenOdd => {
            let (even, odd): (Vec<_>, Vec<_>) = obs.iter().cloned().enumerate().partition(|(i, _)| i % 2 == 0);
            (
                even.into_iter().map(|(_, s)| s).collect(),
                odd.into_iter().map(|(_, s)| s).collect(),
            )
        }
        ZeroMeanSplit::None => (obs.clone(), obs.clone()),
    };
    let estimation = StudyCollection {
        experimental: c.experimental.clone(),
        observational: estimation,
        calibration: Vec::new(),
    };
    (estimation, holdout)
}

/// Zero-mean empirical Bayes: fit `gamma2` on the holdout (with `mu = 0`) and
/// return the posterior computed from the estimation part.
///
/// `bound` defaults to [`default_bound`] over the holdout. MLE fits use the
/// joint likelihood of `y_e` and the holdout.
pub fn fit_eb0(
    c: &StudyCollection,
    split: ZeroMeanSplit,
    fitter: ZeroMeanFitter,
    bound: Option<f64>,
) -> Result<(FitReport, GaussianPosterior), FitError> {
    let j = c.num_observational();
    if j < 2 {
        return Err(FitError::TooFewObservationalStudies { need: 2, got: j });
    }
    let (estimation, holdout) = split_observational(c, split);
    let fit = match fitter {
        ZeroMeanFitter::Mle => {
            let bound = bound.unwrap_or_else(|| default_bound(&holdout));
            let fitting = StudyCollection {
                experimental: c.experimental.clone(),
                observational: holdout,
                calibration: Vec::new(),
            };
            fit_mle_zero_mean(&fitting, bound)?
        }
        ZeroMeanFitter::Mm => fit_mm_zero_mean(&holdout)?,
    };
    let posterior = posterior_zero_mean_correction_form(&estimation, fit.prior.gamma2);
    Ok((fit, posterior))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal(pairs: &[(f64, f64)]) -> Vec<StudySummary> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(y, v))| StudySummary::calibration(format!("c{i}"), y, v).unwrap())
            .collect()
    }

    fn collection(ye: f64, ve: f64, obs: &[(f64, f64)]) -> StudyCollection {
        StudyCollection::new(
            StudySummary::experimental("e", ye, ve).unwrap(),
            obs.iter()
                .enumerate()
                .map(|(i, &(y, v))| StudySummary::observational(format!("o{i}"), y, v).unwrap())
                .collect(),
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn homoskedastic_calibration_fit_has_closed_form() {
        let ys = [0.3, 2.9, -1.1, 1.7, 0.4, 3.3];
        let s2 = 0.5;
        let c = cal(&ys.iter().map(|&y| (y, s2)).collect::<Vec<_>>());
        let k = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / k;
        let var_k = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / k;
        let fit = fit_mle_calibration(&c, default_bound(&c)).unwrap();
        assert!((fit.prior.gamma2 - (var_k - s2).max(0.0)).abs() < 1e-8, "{fit:?}");
        assert!((fit.prior.mu - mean).abs() < 1e-8);
        assert!(!fit.bound_hit);
    }

    #[test]
    fn tied_calibration_fit_sits_at_zero() {
        let c = cal(&[(2.0, 1.0), (2.0, 1.0)]);
        let fit = fit_mle_calibration(&c, 10.0).unwrap();
        assert_eq!(fit.prior.gamma2, 0.0);
        assert_eq!(fit.prior.mu, 2.0);
        assert!(fit.bound_hit);
    }

    #[test]
    fn calibration_fit_needs_two_studies() {
        assert_eq!(fit_mle_calibration(&[], 1.0), Err(FitError::EmptyCalibrationSet));
        assert_eq!(
            fit_mle_calibration(&cal(&[(1.0, 1.0)]), 1.0),
            Err(FitError::TooFewCalibrationStudies { need: 2, got: 1 })
        );
        assert!(matches!(
            fit_mle_calibration(&cal(&[(1.0, 1.0), (0.0, 1.0)]), f64::NAN),
            Err(FitError::InvalidBound(_))
        ));
    }

    #[test]
    fn illusion_posterior_mean_is_the_experiment() {
        let c = collection(0.123_456_789, 0.8, &[(3.0, 1.0), (-2.0, 0.5), (7.5, 2.0)]);
        let (fit, post) = fit_mle_illusion(&c, default_bound(&c.observational)).unwrap();
        assert_eq!(post.mean, 0.123_456_789);
        assert!(post.variance < 0.8);
        assert_eq!(fit.method, FitMethod::Mle);
    }

    #[test]
    fn single_observational_study_illusion_variance() {
        let c = collection(0.0, 1.0, &[(10.0, 1.0)]);
        let (fit, post) = fit_mle_illusion(&c, 100.0).unwrap();
        let g = fit.prior.gamma2;
        assert!((post.variance - 1.0 / (1.0 + 1.0 / (1.0 + g))).abs() < 1e-15);
    }

    #[test]
    fn zero_mean_fit_collapses_on_agreeing_studies() {
        let c = collection(1.0, 1.0, &[(1.0, 1.0), (1.0 + 1e-6, 1.0), (1.0 - 1e-6, 1.0)]);
        let fit = fit_mle_zero_mean(&c, 10.0).unwrap();
        assert_eq!(fit.prior.gamma2, 0.0);
        assert!(fit.bound_hit);
        assert_eq!(
            fit_mle_zero_mean(&collection(1.0, 1.0, &[(1.0, 1.0)]), 10.0),
            Err(FitError::TooFewObservationalStudies { need: 2, got: 1 })
        );
    }

    #[test]
    fn splits_partition_the_observational_list() {
        let c = collection(0.0, 1.0, &[(1.0, 1.0), (2.0, 1.0), (3.0, 1.0), (4.0, 1.0), (5.0, 1.0)]);
        let est = |c: &StudyCollection| c.observational.iter().map(|s| s.estimate).collect::<Vec<_>>();
        let ys = |v: &[StudySummary]| v.iter().map(|s| s.estimate).collect::<Vec<_>>();

        let (e, h) = split_observational(&c, ZeroMeanSplit::Half);
        assert_eq!((est(&e), ys(&h)), (vec![1.0, 2.0, 3.0], vec![4.0, 5.0]));
        let (e, h) = split_observational(&c, ZeroMeanSplit::EvenOdd);
        assert_eq!((est(&e), ys(&h)), (vec![1.0, 3.0, 5.0], vec![2.0, 4.0]));
        let (e, h) = split_observational(&c, ZeroMeanSplit::None);
        assert_eq!(est(&e), ys(&h));
    }

    #[test]
    fn eb0_requires_two_observational_studies() {
        let c = collection(0.0, 1.0, &[(1.0, 1.0)]);
        assert!(matches!(
            fit_eb0(&c, ZeroMeanSplit::Half, ZeroMeanFitter::Mle, None),
            Err(FitError::TooFewObservationalStudies { .. })
        ));
        let c = collection(0.0, 1.0, &[(1.0, 1.0), (0.5, 1.0), (2.0, 1.0), (-1.0, 1.0)]);
        let (_, post) = fit_eb0(&c, ZeroMeanSplit::Half, ZeroMeanFitter::Mm, None).unwrap();
        assert!(post.variance < 1.0);
    }
}
