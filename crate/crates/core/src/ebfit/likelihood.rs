//! Marginal log-likelihoods of the hierarchical model and their derivatives.

use super::FitError;
use crate::numeric::CompensatedSum;
use crate::study::{StudyCollection, StudySummary};

/// Log marginal likelihood of `(y_e, y_o)` with the effect integrated out under
/// a flat prior and biases integrated out under `N(mu, gamma2)`:
///
/// `½ [N²/P − y_e²/σ_e² − Σ_j (y_oj − mu)²/v_j − Σ_j log v_j − log P]`
///
/// with `v_j = σ_oj² + gamma2`, `P = σ_e⁻² + Σ_j 1/v_j` and
/// `N = y_e/σ_e² + Σ_j (y_oj − mu)/v_j`. Terms that do not depend on
/// `(mu, gamma2)`, namely `−½ log σ_e² − (J/2) log 2π`, are dropped.
pub fn marginal_loglik(mu: f64, gamma2: f64, c: &StudyCollection) -> f64 {
    let e = &c.experimental;
    let mut num = CompensatedSum::new();
    let mut prec = CompensatedSum::new();
    let mut quad = CompensatedSum::new();
    let mut logdet = CompensatedSum::new();
    num.add(e.estimate / e.variance);
    prec.add(1.0 / e.variance);
    for o in &c.observational {
        let v = o.variance + gamma2;
        let r = o.estimate - mu;
        num.add(r / v);
        prec.add(1.0 / v);
        quad.add(r * r / v);
        logdet.add(v.ln());
    }
    let n = num.value();
    let p = prec.value();
    0.5 * (n * n / p - e.estimate * e.estimate / e.variance - quad.value() - logdet.value() - p.ln())
}

/// Partial derivative of [`marginal_loglik`] with respect to `gamma2`, at fixed `mu`.
pub fn marginal_loglik_score(mu: f64, gamma2: f64, c: &StudyCollection) -> f64 {
    let e = &c.experimental;
    let mut n = CompensatedSum::new();
    let mut p = CompensatedSum::new();
    let mut dn = CompensatedSum::new();
    let mut dp = CompensatedSum::new();
    let mut rest = CompensatedSum::new();
    n.add(e.estimate / e.variance);
    p.add(1.0 / e.variance);
    for o in &c.observational {
        let v = o.variance + gamma2;
        let r = o.estimate - mu;
        n.add(r / v);
        p.add(1.0 / v);
        dn.add(-r / (v * v));
        dp.add(-1.0 / (v * v));
        rest.add(r * r / (v * v) - 1.0 / v);
    }
    let (n, p, dn, dp) = (n.value(), p.value(), dn.value(), dp.value());
    0.5 * (2.0 * n * dn / p - n * n * dp / (p * p) + rest.value() - dp / p)
}

/// Heteroskedastic normal log-density of the calibration estimates,
/// `Σ_k [−½ (y_k − mu)²/(gamma2 + σ_k²) − ½ log(gamma2 + σ_k²)]`, constant dropped.
pub fn calibration_loglik(mu: f64, gamma2: f64, calibration: &[StudySummary]) -> f64 {
    calibration
        .iter()
        .map(|s| {
            let v = gamma2 + s.variance;
            -0.5 * (s.estimate - mu).powi(2) / v - 0.5 * v.ln()
        })
        .collect::<CompensatedSum>()
        .value()
}

/// Derivative in `gamma2` of the calibration log-likelihood at fixed `mu`.
pub(crate) fn calibration_score(mu: f64, gamma2: f64, calibration: &[StudySummary]) -> f64 {
    calibration
        .iter()
        .map(|s| {
            let v = gamma2 + s.variance;
            0.5 * (s.estimate - mu).powi(2) / (v * v) - 0.5 / v
        })
        .collect::<CompensatedSum>()
        .value()
}

/// Precision-weighted mean with weights `(gamma2 + σ²)⁻¹`.
pub(crate) fn weighted_mean(gamma2: f64, studies: &[StudySummary]) -> f64 {
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for s in studies {
        let w = 1.0 / (gamma2 + s.variance);
        num.add(w * s.estimate);
        den.add(w);
    }
    num.value() / den.value()
}

/// Maximiser of the calibration log-likelihood in `mu` for fixed `gamma2`.
pub fn profiled_mu(gamma2: f64, calibration: &[StudySummary]) -> Result<f64, FitError> {
    if calibration.is_empty() {
        return Err(FitError::EmptyCalibrationSet);
    }
    Ok(weighted_mean(gamma2, calibration))
}
