//! Study-level effect estimates from unit-level data.
//!
//! Difference in means reports the conservative Neyman variance. Matching and
//! IPW have no variance formula here and use [`bootstrap_variance`].

use rayon::prelude::*;
use thiserror::Error;

use crate::numeric::{sample_variance, CompensatedSum};
use crate::rng::child_rng;
use crate::study::{StudyError, StudyKind, StudySummary};
use crate::units::UnitDataset;

/// Overlap guard: propensities must lie in `(PROPENSITY_EPS, 1 − PROPENSITY_EPS)`.
pub const PROPENSITY_EPS: f64 = 1e-6;

const MAX_RESAMPLE_RETRIES: usize = 100;
const BOOTSTRAP_TAG: u64 = 0x0b00_7500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WithinStudyError {
    #[error("treated or control arm is empty")]
    OneArmEmpty,
    #[error("need at least {need} control units, got {got}")]
    NotEnoughControls { need: usize, got: usize },
    #[error("number of matches must be at least 1")]
    InvalidMatchCount,
    #[error("row {0}: propensity outside the overlap bounds")]
    PropensityOutOfBounds(usize),
    #[error("bootstrap needs at least 100 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("resampling kept producing datasets the estimator rejects")]
    ResampleDegenerate,
    #[error("estimate has no variance; each arm needs two or more units")]
    MissingVariance,
    #[error(transparent)]
    Study(#[from] StudyError),
}

/// Point estimate with an optional variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub estimate: f64,
    pub variance: Option<f64>,
}

impl Estimate {
    pub fn to_summary(&self, id: impl Into<String>, kind: StudyKind) -> Result<StudySummary, WithinStudyError> {
        let variance = self.variance.ok_or(WithinStudyError::MissingVariance)?;
        Ok(StudySummary::new(id, kind, self.estimate, variance)?)
    }
}

struct ArmMoments {
    mean: f64,
    /// `s²/n_eff`, absent for fewer than two effective units.
    mean_variance: Option<f64>,
}

fn arm_moments(d: &UnitDataset, treated: bool) -> Option<ArmMoments> {
    let mut sw = CompensatedSum::new();
    let mut sw2 = CompensatedSum::new();
    let mut swx = CompensatedSum::new();
    let mut count = 0usize;
    for r in d.rows.iter().filter(|r| r.treatment == treated && r.weight > 0.0) {
        sw.add(r.weight);
        sw2.add(r.weight * r.weight);
        swx.add(r.weight * r.outcome);
        count += 1;
    }
    let sw = sw.value();
    if count == 0 || sw <= 0.0 {
        return None;
    }
    let mean = swx.value() / sw;
    let n_eff = sw * sw / sw2.value();
    let mean_variance = if count >= 2 && n_eff > 1.0 {
        let ss: CompensatedSum = d
            .rows
            .iter()
            .filter(|r| r.treatment == treated && r.weight > 0.0)
            .map(|r| r.weight * (r.outcome - mean).powi(2))
            .collect();
        let s2 = ss.value() / sw * n_eff / (n_eff - 1.0);
        Some(s2 / n_eff)
    } else {
        None
    };
    Some(ArmMoments { mean, mean_variance })
}

/// Weighted difference in means with variance `s₁²/n₁ + s₀²/n₀`.
///
/// With non-uniform weights, `n` is Kish's effective sample size
/// `(Σw)²/Σw²` and `s²` the weighted variance scaled by `n/(n − 1)`.
/// Rows with zero weight are ignored.
pub fn difference_in_means(d: &UnitDataset) -> Result<Estimate, WithinStudyError> {
    let t = arm_moments(d, true).ok_or(WithinStudyError::OneArmEmpty)?;
    let c = arm_moments(d, false).ok_or(WithinStudyError::OneArmEmpty)?;
    let variance = match (t.mean_variance, c.mean_variance) {
        (Some(a), Some(b)) => Some(a + b),
        _ => None,
    };
    Ok(Estimate {
        estimate: t.mean - c.mean,
        variance,
    })
}

/// Point estimate of [`difference_in_means`].
pub fn dim_point(d: &UnitDataset) -> Result<f64, WithinStudyError> {
    Ok(difference_in_means(d)?.estimate)
}

/// Average over treated units of the outcome minus the mean outcome of its
/// `m` nearest controls (Euclidean distance on covariates, ties to the lower
/// row index). Weights are ignored.
pub fn matching_point(d: &UnitDataset, m: usize) -> Result<f64, WithinStudyError> {
    if m == 0 {
        return Err(WithinStudyError::InvalidMatchCount);
    }
    let controls: Vec<usize> = (0..d.len()).filter(|&i| !d.rows[i].treatment).collect();
    let treated: Vec<usize> = (0..d.len()).filter(|&i| d.rows[i].treatment).collect();
    if controls.len() < m {
        return Err(WithinStudyError::NotEnoughControls { need: m, got: controls.len() });
    }
    if treated.is_empty() {
        return Err(WithinStudyError::OneArmEmpty);
    }
    let mut total = CompensatedSum::new();
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(controls.len());
    for &t in &treated {
        let xt = &d.rows[t].covariate;
        dist.clear();
        dist.extend(controls.iter().map(|&c| {
            let sq: f64 = xt.iter().zip(&d.rows[c].covariate).map(|(a, b)| (a - b) * (a - b)).sum();
            (sq, c)
        }));
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if m < dist.len() {
            dist.select_nth_unstable_by(m - 1, by_distance);
        }
        dist[..m].sort_by(by_distance);
        let matched = dist[..m].iter().map(|&(_, c)| d.rows[c].outcome).sum::<f64>() / m as f64;
        total.add(d.rows[t].outcome - matched);
    }
    Ok(total.value() / treated.len() as f64)
}

/// Matching estimate with bootstrap variance.
pub fn matching_estimate(d: &UnitDataset, m: usize, replicates: usize, seed: u64) -> Result<Estimate, WithinStudyError> {
    let estimate = matching_point(d, m)?;
    let variance = bootstrap_variance(d, |b| matching_point(b, m), replicates, seed)?;
    Ok(Estimate {
        estimate,
        variance: Some(variance),
    })
}

/// `(1/n) Σ [A O/e(X) − (1 − A) O/(1 − e(X))]`. Weights are ignored.
pub fn ipw_point<P>(d: &UnitDataset, propensity: P) -> Result<f64, WithinStudyError>
where
    P: Fn(&[f64]) -> f64,
{
    if d.num_treated() == 0 || d.num_control() == 0 {
        return Err(WithinStudyError::OneArmEmpty);
    }
    let mut total = CompensatedSum::new();
    for (i, r) in d.rows.iter().enumerate() {
        let e = propensity(&r.covariate);
        if !(e > PROPENSITY_EPS && e < 1.0 - PROPENSITY_EPS) {
            return Err(WithinStudyError::PropensityOutOfBounds(i));
        }
        total.add(if r.treatment { r.outcome / e } else { -r.outcome / (1.0 - e) });
    }
    Ok(total.value() / d.len() as f64)
}

/// IPW estimate with bootstrap variance.
pub fn ipw_estimate<P>(d: &UnitDataset, propensity: P, replicates: usize, seed: u64) -> Result<Estimate, WithinStudyError>
where
    P: Fn(&[f64]) -> f64 + Sync,
{
    let estimate = ipw_point(d, &propensity)?;
    let variance = bootstrap_variance(d, |b| ipw_point(b, &propensity), replicates, seed)?;
    Ok(Estimate {
        estimate,
        variance: Some(variance),
    })
}

/// Variance (denominator `B − 1`) of `estimator` over `replicates` resamples of
/// the rows drawn with replacement.
///
/// Replicate `b` draws from its own stream of `seed`, so the result does not
/// depend on how replicates are scheduled. A resample the estimator rejects is
/// redrawn from the same stream, at most 100 times.
pub fn bootstrap_variance<F>(d: &UnitDataset, estimator: F, replicates: usize, seed: u64) -> Result<f64, WithinStudyError>
where
    F: Fn(&UnitDataset) -> Result<f64, WithinStudyError> + Sync,
{
    use rand::Rng;

    if replicates < 100 {
        return Err(WithinStudyError::TooFewReplicates(replicates));
    }
    if d.is_empty() {
        return Err(WithinStudyError::OneArmEmpty);
    }
    let n = d.len();
    let draws: Result<Vec<f64>, WithinStudyError> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = child_rng(seed, &[BOOTSTRAP_TAG], b as u64);
            let mut idx = vec![0usize; n];
            for _ in 0..MAX_RESAMPLE_RETRIES {
                for slot in idx.iter_mut() {
                    *slot = rng.random_range(0..n);
                }
                if let Ok(v) = estimator(&d.select(&idx)) {
                    return Ok(v);
                }
            }
            Err(WithinStudyError::ResampleDegenerate)
        })
        .collect();
    Ok(sample_variance(&draws?))
}
