//! Semi-synthetic pipeline on simulated unit-level data.
//!
//! A population is drawn from the linear outcome model
//! `O = alpha + beta·A + delta·X + eps` with a randomised treatment `A`. It is
//! split into stratified parts: the first part yields the experimental
//! estimate, and every other part yields one confounded observational study
//! (importance weights depending on `X₁`) and one calibration study (a
//! pseudo-treatment drawn from the same propensity, with no effect).

use rand::Rng;
use rand::seq::SliceRandom;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{logistic, CompensatedSum};
use crate::rng::{child_rng, derive_seed, DEFAULT_SEED};
use crate::study::{StudyCollection, StudyError, StudyKind};
use crate::units::{UnitDataset, UnitRecord};
use crate::withinstudy::{difference_in_means, WithinStudyError};

const POPULATION_TAG: u64 = 1;
const PARTITION_TAG: u64 = 2;
const CALIBRATION_TAG: u64 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemisynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("an arm has {have} units, fewer than the {parts} parts requested")]
    TooFewUnits { have: usize, parts: usize },
    #[error("need at least two parts, got {0}")]
    TooFewParts(usize),
    #[error(transparent)]
    WithinStudy(#[from] WithinStudyError),
    #[error(transparent)]
    Study(#[from] StudyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub n_units: usize,
    pub alpha: f64,
    /// True average treatment effect.
    pub beta: f64,
    /// Outcome coefficients on the covariates; its length is the covariate dimension.
    pub delta: Vec<f64>,
    pub noise_sd: f64,
    /// Logistic slope of the confounding propensity on `X₁`.
    pub propensity_beta: f64,
    pub n_parts: usize,
    pub treated_fraction: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n_units: 50_000,
            alpha: 0.0,
            beta: -0.5,
            delta: vec![1.0],
            noise_sd: 1.0,
            propensity_beta: 0.5,
            n_parts: 100,
            treated_fraction: 0.5,
            seed: DEFAULT_SEED,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<(), SemisynthError> {
        let bad = |m: &str| Err(SemisynthError::InvalidConfig(m.to_string()));
        if self.delta.is_empty() {
            return bad("delta needs at least one coefficient");
        }
        if self.n_parts == 0 || self.n_units < 2 * self.n_parts {
            return bad("n_units must be at least twice n_parts");
        }
        if !(self.noise_sd.is_finite() && self.noise_sd > 0.0) {
            return bad("noise_sd must be positive");
        }
        if !(self.treated_fraction > 0.0 && self.treated_fraction < 1.0) {
            return bad("treated_fraction must lie in (0, 1)");
        }
        let coefs = [self.alpha, self.beta, self.propensity_beta];
        if !coefs.iter().chain(&self.delta).all(|v| v.is_finite()) {
            return bad("coefficients must be finite");
        }
        Ok(())
    }
}

/// Simulated population with both potential outcomes kept.
#[derive(Debug, Clone)]
pub struct Population {
    pub data: UnitDataset,
    /// `(O(0), O(1))` per unit.
    pub potential_outcomes: Vec<(f64, f64)>,
    pub ate: f64,
}

pub fn generate_population(cfg: &DgpConfig) -> Result<Population, SemisynthError> {
    cfg.validate()?;
    let mut rng = child_rng(cfg.seed, &[POPULATION_TAG], 0);
    let assign = Bernoulli::new(cfg.treated_fraction).expect("validated fraction");
    let noise = Normal::new(0.0, cfg.noise_sd).expect("validated sd");
    let dim = cfg.delta.len();
    let mut rows = Vec::with_capacity(cfg.n_units);
    let mut potential = Vec::with_capacity(cfg.n_units);
    for _ in 0..cfg.n_units {
        let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = assign.sample(&mut rng);
        let eps: f64 = noise.sample(&mut rng);
        let lin: f64 = cfg.delta.iter().zip(&x).map(|(d, x)| d * x).sum();
        let o0 = cfg.alpha + lin + eps;
        let o1 = o0 + cfg.beta;
        potential.push((o0, o1));
        rows.push(UnitRecord::new(x, a, if a { o1 } else { o0 }));
    }
    Ok(Population {
        data: UnitDataset::new(dim, rows).expect("generated rows are valid"),
        potential_outcomes: potential,
        ate: cfg.beta,
    })
}

/// One part of a partition, with the source row indices of its units.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub ids: Vec<usize>,
    pub data: UnitDataset,
}

/// Splits `d` into `n_parts` disjoint parts with treated and control counts
/// balanced to within one unit. Each arm is shuffled and dealt round-robin;
/// the control deal continues where the treated deal stopped so that part
/// sizes also differ by at most one.
pub fn partition_stratified(d: &UnitDataset, n_parts: usize, seed: u64) -> Result<Vec<Part>, SemisynthError> {
    if n_parts == 0 {
        return Err(SemisynthError::TooFewParts(0));
    }
    let mut treated: Vec<usize> = (0..d.len()).filter(|&i| d.rows[i].treatment).collect();
    let mut control: Vec<usize> = (0..d.len()).filter(|&i| !d.rows[i].treatment).collect();
    for arm in [&treated, &control] {
        if arm.len() < n_parts {
            return Err(SemisynthError::TooFewUnits { have: arm.len(), parts: n_parts });
        }
    }
    treated.shuffle(&mut child_rng(seed, &[PARTITION_TAG], 0));
    control.shuffle(&mut child_rng(seed, &[PARTITION_TAG], 1));

    let mut ids = vec![Vec::new(); n_parts];
    for (i, &u) in treated.iter().enumerate() {
        ids[i % n_parts].push(u);
    }
    let offset = treated.len() % n_parts;
    for (i, &u) in control.iter().enumerate() {
        ids[(offset + i) % n_parts].push(u);
    }
    Ok(ids
        .into_iter()
        .map(|mut ids| {
            ids.sort_unstable();
            let data = d.select(&ids);
            Part { ids, data }
        })
        .collect())
}

fn propensity(propensity_beta: f64, x: &[f64]) -> f64 {
    logistic(propensity_beta * x[0])
}

/// Observational dataset together with the bias its weighting induces.
#[derive(Debug, Clone)]
pub struct Confounded {
    pub data: UnitDataset,
    /// Shift of the difference in means caused by the weights:
    /// `delta · (Δ_w − Δ)`, where `Δ_w` is the weighted treated-minus-control
    /// covariate mean difference and `Δ` the unweighted one.
    pub bias: f64,
}

/// Reweights a randomised part so that treatment looks as if it had been
/// assigned with propensity `e(X) = logistic(propensity_beta · X₁)`: treated
/// rows get weight proportional to `e(X)/p̄`, control rows to
/// `(1 − e(X))/(1 − p̄)`, where `p̄` is the part's treated fraction. Weights are
/// scaled to average one within each arm, which leaves every weighted mean
/// unchanged and makes them exactly one when `propensity_beta` is zero.
pub fn induce_confounding(part: &UnitDataset, propensity_beta: f64, delta: &[f64]) -> Confounded {
    let mut data = part.clone();
    for r in &mut data.rows {
        let e = propensity(propensity_beta, &r.covariate);
        r.weight = if r.treatment { e } else { 1.0 - e };
    }
    for arm in [true, false] {
        let (sum, n) = data
            .rows
            .iter()
            .filter(|r| r.treatment == arm)
            .fold((CompensatedSum::new(), 0usize), |(mut s, n), r| {
                s.add(r.weight);
                (s, n + 1)
            });
        let scale = n as f64 / sum.value();
        for r in data.rows.iter_mut().filter(|r| r.treatment == arm) {
            r.weight *= scale;
        }
    }
    let dim = data.covariate_dim;
    let arm_means = |d: &UnitDataset, treated: bool| -> Vec<f64> {
        let mut sw = CompensatedSum::new();
        let mut sx = vec![CompensatedSum::new(); dim];
        for r in d.rows.iter().filter(|r| r.treatment == treated) {
            sw.add(r.weight);
            for (s, x) in sx.iter_mut().zip(&r.covariate) {
                s.add(r.weight * x);
            }
        }
        sx.iter().map(|s| s.value() / sw.value()).collect()
    };
    let imbalance = |d: &UnitDataset| -> f64 {
        let (t, c) = (arm_means(d, true), arm_means(d, false));
        delta.iter().zip(t.iter().zip(&c)).map(|(k, (t, c))| k * (t - c)).sum()
    };
    let bias = imbalance(&data) - imbalance(part);
    Confounded { data, bias }
}

/// Replaces the treatment with an inert pseudo-treatment drawn from
/// `Bernoulli(logistic(propensity_beta · X₁))`. Outcomes are kept and weights
/// reset to one.
pub fn make_calibration(part: &UnitDataset, propensity_beta: f64, seed: u64) -> UnitDataset {
    let mut rng = child_rng(seed, &[CALIBRATION_TAG], 0);
    let mut data = part.clone();
    for r in &mut data.rows {
        let e = propensity(propensity_beta, &r.covariate);
        r.treatment = rng.random::<f64>() < e;
        r.weight = 1.0;
    }
    data
}

/// Every dataset and summary produced by one pipeline run.
#[derive(Debug, Clone)]
pub struct SemisynthRun {
    pub ate: f64,
    pub experimental: UnitDataset,
    pub observational: Vec<Confounded>,
    pub calibration: Vec<UnitDataset>,
    pub collection: StudyCollection,
    /// Mean of the induced observational biases.
    pub bias_mean: f64,
}

/// Turns partitioned data into a study collection: part 0 is the experiment,
/// and part `j ≥ 1` gives observational study `o{j}` and calibration study `c{j}`,
/// all estimated by difference in means.
pub fn build_study_collection(parts: &[Part], cfg: &DgpConfig) -> Result<SemisynthRun, SemisynthError> {
    if parts.len() < 2 {
        return Err(SemisynthError::TooFewParts(parts.len()));
    }
    let experimental = parts[0].data.clone();
    let exp_summary = difference_in_means(&experimental)?.to_summary("e", StudyKind::Experimental)?;

    let mut observational = Vec::with_capacity(parts.len() - 1);
    let mut calibration = Vec::with_capacity(parts.len() - 1);
    let mut obs_summaries = Vec::with_capacity(parts.len() - 1);
    let mut cal_summaries = Vec::with_capacity(parts.len() - 1);
    for (j, part) in parts.iter().enumerate().skip(1) {
        let conf = induce_confounding(&part.data, cfg.propensity_beta, &cfg.delta);
        obs_summaries.push(difference_in_means(&conf.data)?.to_summary(format!("o{j}"), StudyKind::Observational)?);
        let cal = make_calibration(&part.data, cfg.propensity_beta, derive_seed(cfg.seed, &[j as u64]));
        cal_summaries.push(difference_in_means(&cal)?.to_summary(format!("c{j}"), StudyKind::Calibration)?);
        observational.push(conf);
        calibration.push(cal);
    }
    let bias_mean = observational.iter().map(|c| c.bias).collect::<CompensatedSum>().value() / observational.len() as f64;
    Ok(SemisynthRun {
        ate: cfg.beta,
        experimental,
        observational,
        calibration,
        collection: StudyCollection::new(exp_summary, obs_summaries, cal_summaries)?,
        bias_mean,
    })
}

/// Population, partition and collection for one configuration.
pub fn run_pipeline(cfg: &DgpConfig) -> Result<SemisynthRun, SemisynthError> {
    let pop = generate_population(cfg)?;
    let parts = partition_stratified(&pop.data, cfg.n_parts, cfg.seed)?;
    build_study_collection(&parts, cfg)
}
