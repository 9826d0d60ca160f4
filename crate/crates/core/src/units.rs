//! Unit-level records used by the within-study estimators and the
//! semi-synthetic pipeline.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitError {
    #[error("row {row}: expected {expected} covariates, found {found}")]
    DimensionMismatch { row: usize, expected: usize, found: usize },
    #[error("row {0}: weight must be finite and non-negative")]
    InvalidWeight(usize),
    #[error("row {0}: covariates and outcome must be finite")]
    NonFinite(usize),
}

/// One unit: covariates, a binary treatment, an outcome and a sampling weight.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub covariate: Vec<f64>,
    pub treatment: bool,
    pub outcome: f64,
    pub weight: f64,
}

impl UnitRecord {
    /// Record with unit weight.
    pub fn new(covariate: Vec<f64>, treatment: bool, outcome: f64) -> Self {
        UnitRecord {
            covariate,
            treatment,
            outcome,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnitDataset {
    pub rows: Vec<UnitRecord>,
    pub covariate_dim: usize,
}

impl UnitDataset {
    pub fn new(covariate_dim: usize, rows: Vec<UnitRecord>) -> Result<Self, UnitError> {
        for (i, r) in rows.iter().enumerate() {
            if r.covariate.len() != covariate_dim {
                return Err(UnitError::DimensionMismatch {
                    row: i,
                    expected: covariate_dim,
                    found: r.covariate.len(),
                });
            }
            if !(r.weight.is_finite() && r.weight >= 0.0) {
                return Err(UnitError::InvalidWeight(i));
            }
            if !(r.outcome.is_finite() && r.covariate.iter().all(|x| x.is_finite())) {
                return Err(UnitError::NonFinite(i));
            }
        }
        Ok(UnitDataset { rows, covariate_dim })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_treated(&self) -> usize {
        self.rows.iter().filter(|r| r.treatment).count()
    }

    pub fn num_control(&self) -> usize {
        self.len() - self.num_treated()
    }

    /// Dataset built from the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> UnitDataset {
        UnitDataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            covariate_dim: self.covariate_dim,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_and_negative_weights() {
        let ok = UnitRecord::new(vec![1.0], true, 2.0);
        let ragged = UnitRecord::new(vec![1.0, 2.0], false, 0.0);
        assert!(matches!(
            UnitDataset::new(1, vec![ok.clone(), ragged]),
            Err(UnitError::DimensionMismatch { row: 1, .. })
        ));
        let neg = UnitRecord { weight: -1.0, ..ok.clone() };
        assert_eq!(UnitDataset::new(1, vec![neg]), Err(UnitError::InvalidWeight(0)));
        let d = UnitDataset::new(1, vec![ok.clone(), UnitRecord::new(vec![0.0], false, 1.0)]).unwrap();
        assert_eq!((d.num_treated(), d.num_control()), (1, 1));
    }
}
