//! Empirical-Bayes combination of one experimental study with observational
//! and calibration studies.

pub mod alloc;
pub mod config;
pub mod ebfit;
pub mod io;
pub mod numeric;
pub mod optimize;
pub mod posterior;
pub mod regime;
pub mod rng;
pub mod semisynth;
pub mod sim;
pub mod study;
pub mod units;
pub mod withinstudy;

pub use study::{BiasPrior, GaussianPosterior, StudyCollection, StudyError, StudyKind, StudySummary};
