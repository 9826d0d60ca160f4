//! Study-level summaries and the hierarchical-model value types.
//!
//! Every study is reduced to a point estimate and a known sampling variance.
//! A [`StudyCollection`] groups one experimental study with the observational
//! and calibration studies that target the same causal question.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StudyError {
    #[error("study `{0}` has a non-positive or non-finite variance")]
    NonPositiveVariance(String),
    #[error("study `{0}` has a non-finite estimate")]
    NonFiniteEstimate(String),
    #[error("study `{0}` is stored in a slot of a different kind")]
    KindMismatch(String),
    #[error("collection has no experimental study")]
    MissingExperimental,
    #[error("collection has more than one experimental study")]
    DuplicateExperimental,
    #[error("unknown study kind `{0}`")]
    UnknownKind(String),
    #[error("bias prior must have finite mean and finite gamma2 >= 0 (got mu={mu}, gamma2={gamma2})")]
    InvalidPrior { mu: f64, gamma2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Experimental,
    Observational,
    Calibration,
}

impl StudyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyKind::Experimental => "experimental",
            StudyKind::Observational => "observational",
            StudyKind::Calibration => "calibration",
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StudyKind {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "experimental" => Ok(StudyKind::Experimental),
            "observational" => Ok(StudyKind::Observational),
            "calibration" => Ok(StudyKind::Calibration),
            other => Err(StudyError::UnknownKind(other.to_string())),
        }
    }
}

/// One study reduced to `(estimate, variance)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub id: String,
    pub kind: StudyKind,
    pub estimate: f64,
    pub variance: f64,
}

impl StudySummary {
    /// Builds a summary, rejecting non-finite estimates and variances that
    /// are not strictly positive.
    pub fn new(
        id: impl Into<String>,
        kind: StudyKind,
        estimate: f64,
        variance: f64,
    ) -> Result<Self, StudyError> {
        let s = StudySummary {
            id: id.into(),
            kind,
            estimate,
            variance,
        };
        s.check()?;
        Ok(s)
    }

    pub fn experimental(id: impl Into<String>, estimate: f64, variance: f64) -> Result<Self, StudyError> {
        Self::new(id, StudyKind::Experimental, estimate, variance)
    }

    pub fn observational(id: impl Into<String>, estimate: f64, variance: f64) -> Result<Self, StudyError> {
        Self::new(id, StudyKind::Observational, estimate, variance)
    }

    pub fn calibration(id: impl Into<String>, estimate: f64, variance: f64) -> Result<Self, StudyError> {
        Self::new(id, StudyKind::Calibration, estimate, variance)
    }

    fn check(&self) -> Result<(), StudyError> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(StudyError::NonPositiveVariance(self.id.clone()));
        }
        if !self.estimate.is_finite() {
            return Err(StudyError::NonFiniteEstimate(self.id.clone()));
        }
        Ok(())
    }

    /// Inverse sampling variance.
    pub fn precision(&self) -> f64 {
        1.0 / self.variance
    }
}

/// Hyperparameters `(mu, gamma2)` of the Gaussian population of study biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPrior {
    pub mu: f64,
    pub gamma2: f64,
}

impl BiasPrior {
    pub fn new(mu: f64, gamma2: f64) -> Result<Self, StudyError> {
        if !(mu.is_finite() && gamma2.is_finite() && gamma2 >= 0.0) {
            return Err(StudyError::InvalidPrior { mu, gamma2 });
        }
        Ok(BiasPrior { mu, gamma2 })
    }

    pub fn zero_mean(gamma2: f64) -> Result<Self, StudyError> {
        Self::new(0.0, gamma2)
    }
}

/// Normal posterior of the causal effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianPosterior {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Symmetric normal interval `mean ± z·sd`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        let half = z * self.sd();
        (self.mean - half, self.mean + half)
    }
}

/// One experimental study plus `J` observational and `K` calibration studies.
///
/// Study order is preserved so that seeded pipelines are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCollection {
    pub experimental: StudySummary,
    pub observational: Vec<StudySummary>,
    pub calibration: Vec<StudySummary>,
}

impl StudyCollection {
    /// Builds and validates a collection.
    pub fn new(
        experimental: StudySummary,
        observational: Vec<StudySummary>,
        calibration: Vec<StudySummary>,
    ) -> Result<Self, StudyError> {
        validate_collection(StudyCollection {
            experimental,
            observational,
            calibration,
        })
    }

    /// Sorts a flat list of summaries into their slots.
    pub fn from_studies(studies: impl IntoIterator<Item = StudySummary>) -> Result<Self, StudyError> {
        let mut experimental = None;
        let mut observational = Vec::new();
        let mut calibration = Vec::new();
        for s in studies {
            match s.kind {
                StudyKind::Experimental => {
                    if experimental.is_some() {
                        return Err(StudyError::DuplicateExperimental);
                    }
                    experimental = Some(s);
                }
                StudyKind::Observational => observational.push(s),
                StudyKind::Calibration => calibration.push(s),
            }
        }
        let experimental = experimental.ok_or(StudyError::MissingExperimental)?;
        Self::new(experimental, observational, calibration)
    }

    pub fn num_observational(&self) -> usize {
        self.observational.len()
    }

    pub fn num_calibration(&self) -> usize {
        self.calibration.len()
    }

    /// All studies in file order: experimental, observational, calibration.
    pub fn iter(&self) -> impl Iterator<Item = &StudySummary> {
        std::iter::once(&self.experimental)
            .chain(self.observational.iter())
            .chain(self.calibration.iter())
    }

    /// Same collection with the calibration list replaced.
    pub fn with_calibration(&self, calibration: Vec<StudySummary>) -> Result<Self, StudyError> {
        Self::new(self.experimental.clone(), self.observational.clone(), calibration)
    }
}

/// Returns the collection unchanged when every slot holds studies of the right
/// kind with finite estimates and strictly positive variances.
pub fn validate_collection(c: StudyCollection) -> Result<StudyCollection, StudyError> {
    if c.experimental.kind != StudyKind::Experimental {
        return Err(StudyError::KindMismatch(c.experimental.id.clone()));
    }
    c.experimental.check()?;
    for s in &c.observational {
        if s.kind != StudyKind::Observational {
            return Err(StudyError::KindMismatch(s.id.clone()));
        }
        s.check()?;
    }
    for s in &c.calibration {
        if s.kind != StudyKind::Calibration {
            return Err(StudyError::KindMismatch(s.id.clone()));
        }
        s.check()?;
    }
    Ok(c)
}
