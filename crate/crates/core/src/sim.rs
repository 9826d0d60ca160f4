//! Monte Carlo comparison of the estimators on the normal-means model.
//!
//! For each `J` in the grid and each replicate, one collection is drawn:
//! `y_e ~ N(theta, σ_e²)`, `y_oj = theta + b_j + N(0, σ_o²)` and
//! `y_ck = b_ck + N(0, σ_c²)` with `b ~ N(mu, gamma2)`. Every arm is scored on the
//! same draw, and the squared errors are reduced in replicate order so the
//! result does not depend on the thread count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ebfit::{
    default_bound, fit_eb0, fit_mle_calibration, fit_mle_illusion, fit_mm_calibration, FitError, ZeroMeanFitter,
    ZeroMeanSplit,
};
use crate::numeric::{mean, ols_slope, sample_variance};
use crate::posterior::{posterior_ceb, posterior_given_prior};
use crate::rng::{child_rng, DEFAULT_SEED};
use crate::study::{BiasPrior, StudyCollection, StudySummary};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("slope needs at least three grid points with positive MSE, got {0}")]
    DegenerateGrid(usize),
    #[error("arm `{0}` is not in the result")]
    MissingArm(String),
    #[error("unknown arm `{0}`")]
    UnknownArm(String),
    #[error("could not start worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Naive,
    Eb0,
    EbIllusion,
    CebMm,
    CebMle,
    Oracle,
}

impl Arm {
    pub const ALL: [Arm; 6] = [Arm::Naive, Arm::Eb0, Arm::EbIllusion, Arm::CebMm, Arm::CebMle, Arm::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Naive => "naive",
            Arm::Eb0 => "eb0",
            Arm::EbIllusion => "eb_illusion",
            Arm::CebMm => "ceb_mm",
            Arm::CebMle => "ceb_mle",
            Arm::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| SimError::UnknownArm(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub theta_star: f64,
    pub mu_star: f64,
    pub gamma2_star: f64,
    pub sigma_e: f64,
    pub sigma_o: f64,
    pub sigma_c: f64,
    #[serde(rename = "J_grid", alias = "j_grid")]
    pub j_grid: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub arms: Vec<Arm>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            theta_star: 1.0,
            mu_star: 0.5,
            gamma2_star: 1.0,
            sigma_e: 1.0,
            sigma_o: 1.0,
            sigma_c: 1.0,
            j_grid: vec![5, 10, 50, 100, 200, 500],
            replicates: 2000,
            seed: DEFAULT_SEED,
            arms: Arm::ALL.to_vec(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        for (name, sd) in [("sigma_e", self.sigma_e), ("sigma_o", self.sigma_o), ("sigma_c", self.sigma_c)] {
            if !(sd.is_finite() && sd > 0.0) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.theta_star.is_finite() && self.mu_star.is_finite()) {
            return bad("theta_star and mu_star must be finite");
        }
        if !(self.gamma2_star.is_finite() && self.gamma2_star >= 0.0) {
            return bad("gamma2_star must be finite and non-negative");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.j_grid.is_empty() || self.j_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("J_grid must be non-empty and strictly ascending");
        }
        if self.arms.is_empty() {
            return bad("arms must not be empty");
        }
        Ok(())
    }

    /// Bias prior the data are drawn from.
    pub fn true_prior(&self) -> BiasPrior {
        BiasPrior {
            mu: self.mu_star,
            gamma2: self.gamma2_star,
        }
    }
}

/// Draws the collection for replicate `replicate` at grid value `j`, with `k`
/// calibration studies. Draw order: `y_e`, then bias and noise for each
/// observational study, then bias and noise for each calibration study.
pub fn generate_collection(cfg: &SimConfig, j: usize, k: usize, replicate: u64) -> StudyCollection {
    let mut rng = child_rng(cfg.seed, &[j as u64], replicate);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let gamma = cfg.gamma2_star.sqrt();
    let ye = cfg.theta_star + cfg.sigma_e * std.sample(&mut rng);
    let (ve, vo, vc) = (cfg.sigma_e.powi(2), cfg.sigma_o.powi(2), cfg.sigma_c.powi(2));
    let observational = (0..j)
        .map(|i| {
            let b = cfg.mu_star + gamma * std.sample(&mut rng);
            let y = cfg.theta_star + b + cfg.sigma_o * std.sample(&mut rng);
            StudySummary::observational(format!("o{}", i + 1), y, vo).expect("finite draw")
        })
        .collect();
    let calibration = (0..k)
        .map(|i| {
            let b = cfg.mu_star + gamma * std.sample(&mut rng);
            let y = b + cfg.sigma_c * std.sample(&mut rng);
            StudySummary::calibration(format!("c{}", i + 1), y, vc).expect("finite draw")
        })
        .collect();
    StudyCollection {
        experimental: StudySummary::experimental("e", ye, ve).expect("finite draw"),
        observational,
        calibration,
    }
}

/// Point estimate of `arm` on one collection.
pub fn arm_estimate(arm: Arm, c: &StudyCollection, cfg: &SimConfig) -> Result<f64, FitError> {
    Ok(match arm {
        Arm::Naive => c.experimental.estimate,
        Arm::Eb0 => fit_eb0(c, ZeroMeanSplit::Half, ZeroMeanFitter::Mle, None)?.1.mean,
        Arm::EbIllusion => fit_mle_illusion(c, default_bound(&c.observational))?.1.mean,
        Arm::CebMm => posterior_ceb(c, &fit_mm_calibration(&c.calibration)?.prior).mean,
        Arm::CebMle => {
            let fit = fit_mle_calibration(&c.calibration, default_bound(&c.calibration))?;
            posterior_ceb(c, &fit.prior).mean
        }
        Arm::Oracle => posterior_given_prior(c, &cfg.true_prior()).mean,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub arm: Arm,
    pub j: usize,
    pub mse: f64,
    pub mc_se: f64,
    /// `mse / mse_naive` at the same `J`.
    pub re: f64,
    /// Replicates dropped because the arm's fit failed.
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Ordered by `J`, then by the arm order of the config.
    pub rows: Vec<SimRow>,
}

impl SimResult {
    pub fn row(&self, arm: Arm, j: usize) -> Option<&SimRow> {
        self.rows.iter().find(|r| r.arm == arm && r.j == j)
    }

    pub fn arm_rows(&self, arm: Arm) -> impl Iterator<Item = &SimRow> {
        self.rows.iter().filter(move |r| r.arm == arm)
    }

    pub fn total_errors(&self) -> usize {
        self.rows.iter().map(|r| r.errors).sum()
    }

    /// CSV with header `arm,J,mse,mc_se,re`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "arm,J,mse,mc_se,re")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.arm, r.j, r.mse, r.mc_se, r.re)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

fn mse_and_se(sq: &[f64]) -> (f64, f64) {
    if sq.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let se = (sample_variance(sq) / sq.len() as f64).sqrt();
    (mean(sq), se)
}

/// Runs every arm of `cfg` at every grid value on a pool of `threads` workers
/// (`0` uses rayon's default). The output is identical for any thread count.
pub fn run_sweep(cfg: &SimConfig, threads: usize) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::ThreadPool(e.to_string()))?;

    // naive is always evaluated so that RE can be reported
    let mut arms = vec![Arm::Naive];
    arms.extend(cfg.arms.iter().copied().filter(|&a| a != Arm::Naive));

    let mut rows = Vec::new();
    for &j in &cfg.j_grid {
        let per_replicate: Vec<Vec<Option<f64>>> = pool.install(|| {
            (0..cfg.replicates as u64)
                .into_par_iter()
                .map(|r| {
                    let c = generate_collection(cfg, j, j, r);
                    arms.iter()
                        .map(|&a| arm_estimate(a, &c, cfg).ok().map(|est| (est - cfg.theta_star).powi(2)))
                        .collect()
                })
                .collect()
        });

        let mut by_arm = Vec::with_capacity(arms.len());
        for (i, _) in arms.iter().enumerate() {
            let sq: Vec<f64> = per_replicate.iter().filter_map(|row| row[i]).collect();
            let errors = cfg.replicates - sq.len();
            let (mse, se) = mse_and_se(&sq);
            by_arm.push((mse, se, errors));
        }
        let naive_mse = by_arm[0].0;
        for &arm in &cfg.arms {
            let i = arms.iter().position(|&a| a == arm).expect("arm evaluated");
            let (mse, mc_se, errors) = by_arm[i];
            rows.push(SimRow {
                arm,
                j,
                mse,
                mc_se,
                re: mse / naive_mse,
                errors,
            });
        }
    }
    Ok(SimResult { rows })
}

/// Least-squares slope of `log mse` against `log J` for one arm.
pub fn loglog_slope(result: &SimResult, arm: Arm) -> Result<f64, SimError> {
    let rows: Vec<&SimRow> = result.arm_rows(arm).collect();
    if rows.is_empty() {
        return Err(SimError::MissingArm(arm.to_string()));
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.mse > 0.0 && r.mse.is_finite())
        .map(|r| ((r.j as f64).ln(), r.mse.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(SimError::DegenerateGrid(pts.len()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Ok(ols_slope(&xs, &ys))
}
