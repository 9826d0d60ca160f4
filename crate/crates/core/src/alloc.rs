//! Budgeted choice of how many experimental, observational and calibration
//! studies to run.
//!
//! For `n_e` experiments, a subset `z` of observational candidates and `n_c`
//! calibration studies the posterior precision is
//! `n_e/σ_e² + Σ_{j ∈ z} 1/(σ_oj² + γ̂²(n_c))`, subject to
//! `π_e n_e + π_o |z| + π_c n_c ≤ R`. For fixed `n_c` this is a knapsack with
//! one unbounded item, solved by ratio-greedy rounding and a swap-based local
//! search; the best `n_c` is kept.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::numeric::CompensatedSum;

/// Largest brute-force search accepted, in `(n_c, z)` nodes.
pub const MAX_BRUTEFORCE_NODES: u128 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("allocation costs {cost} which exceeds the budget {budget}")]
    InfeasibleAllocation { cost: f64, budget: f64 },
    #[error("allocation selects {got} observational candidates but the problem has {expected}")]
    CandidateMismatch { expected: usize, got: usize },
    #[error("brute force would visit {0} nodes")]
    SearchSpaceTooLarge(u128),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

/// `γ̂²` as a function of the number of calibration studies.
#[derive(Clone)]
pub struct Gamma2Schedule(Arc<dyn Fn(usize) -> f64 + Send + Sync>);

impl Gamma2Schedule {
    pub fn new(f: impl Fn(usize) -> f64 + Send + Sync + 'static) -> Self {
        Gamma2Schedule(Arc::new(f))
    }

    pub fn constant(gamma2: f64) -> Self {
        Self::new(move |_| gamma2)
    }

    /// `gamma0_2 · (1 + c / max(n_c, 1))`: the estimate tightens toward
    /// `gamma0_2` as calibration studies accumulate.
    pub fn heuristic(gamma0_2: f64, c: f64) -> Self {
        Self::new(move |nc| gamma0_2 * (1.0 + c / nc.max(1) as f64))
    }

    pub fn eval(&self, nc: usize) -> f64 {
        (self.0)(nc)
    }
}

impl fmt::Debug for Gamma2Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Gamma2Schedule(..)")
    }
}

#[derive(Debug, Clone)]
pub struct AllocationProblem {
    pub budget: f64,
    pub cost_exp: f64,
    pub cost_obs: f64,
    pub cost_cal: f64,
    pub sigma_e2: f64,
    /// Sampling variance of each observational candidate.
    pub sigma_o2: Vec<f64>,
    pub gamma2_of_nc: Gamma2Schedule,
    pub nc_max: usize,
}

impl AllocationProblem {
    pub fn validate(&self) -> Result<(), AllocError> {
        let bad = |m: &str| Err(AllocError::InvalidProblem(m.to_string()));
        if !(self.budget.is_finite() && self.budget >= 0.0) {
            return bad("budget must be finite and non-negative");
        }
        for c in [self.cost_exp, self.cost_obs, self.cost_cal] {
            if !(c.is_finite() && c > 0.0) {
                return bad("costs must be positive");
            }
        }
        if !(self.sigma_e2.is_finite() && self.sigma_e2 > 0.0) {
            return bad("sigma_e2 must be positive");
        }
        if self.sigma_o2.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("observational variances must be positive");
        }
        Ok(())
    }

    fn gamma2(&self, nc: usize) -> f64 {
        self.gamma2_of_nc.eval(nc).max(0.0)
    }

    fn cost(&self, n_e: usize, n_obs: usize, n_c: usize) -> f64 {
        self.cost_exp * n_e as f64 + self.cost_obs * n_obs as f64 + self.cost_cal * n_c as f64
    }

    fn fits(&self, cost: f64) -> bool {
        cost <= self.budget + 1e-9 * self.budget.max(1.0)
    }

    fn obs_precision(&self, nc: usize) -> Vec<f64> {
        let g = self.gamma2(nc);
        self.sigma_o2.iter().map(|v| 1.0 / (v + g)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub n_e: usize,
    pub n_c: usize,
    pub z: Vec<bool>,
    pub objective: f64,
}

impl Allocation {
    pub fn empty(p: &AllocationProblem) -> Self {
        Allocation {
            n_e: 0,
            n_c: 0,
            z: vec![false; p.sigma_o2.len()],
            objective: 0.0,
        }
    }

    pub fn num_observational(&self) -> usize {
        self.z.iter().filter(|&&b| b).count()
    }

    pub fn cost(&self, p: &AllocationProblem) -> f64 {
        p.cost(self.n_e, self.num_observational(), self.n_c)
    }
}

/// Posterior precision of the allocation; errors if it is over budget.
pub fn precision_objective(a: &Allocation, p: &AllocationProblem) -> Result<f64, AllocError> {
    if a.z.len() != p.sigma_o2.len() {
        return Err(AllocError::CandidateMismatch {
            expected: p.sigma_o2.len(),
            got: a.z.len(),
        });
    }
    let cost = a.cost(p);
    if !p.fits(cost) {
        return Err(AllocError::InfeasibleAllocation { cost, budget: p.budget });
    }
    Ok(evaluate(p, a.n_e, &a.z, a.n_c))
}

fn evaluate(p: &AllocationProblem, n_e: usize, z: &[bool], nc: usize) -> f64 {
    let g = p.gamma2(nc);
    let mut s = CompensatedSum::new();
    s.add(n_e as f64 / p.sigma_e2);
    for (v, _) in p.sigma_o2.iter().zip(z).filter(|(_, &on)| on) {
        s.add(1.0 / (v + g));
    }
    s.value()
}

/// Greedy rounding plus local search for one `n_c`. Returns `(n_e, z)`.
fn greedy_for_nc(p: &AllocationProblem, nc: usize) -> (usize, Vec<bool>) {
    let remaining = p.budget - p.cost_cal * nc as f64;
    let prec = p.obs_precision(nc);
    let exp_ratio = 1.0 / p.sigma_e2 / p.cost_exp;

    // candidates by descending ratio; equal ratios keep index order, and the
    // experiment comes after observational candidates with the same ratio
    let mut order: Vec<usize> = (0..prec.len()).collect();
    order.sort_by(|&a, &b| prec[b].total_cmp(&prec[a]).then(a.cmp(&b)));

    // LP relaxation filled greedily, then rounded down
    let mut z = vec![false; prec.len()];
    let mut n_e = 0usize;
    let mut left = remaining;
    let mut exp_done = false;
    for &j in &order {
        let ratio = prec[j] / p.cost_obs;
        if !exp_done && exp_ratio > ratio {
            n_e = (left / p.cost_exp).floor() as usize;
            left -= n_e as f64 * p.cost_exp;
            exp_done = true;
        }
        if p.cost_obs <= left + 1e-9 * p.budget.max(1.0) {
            z[j] = true;
            left -= p.cost_obs;
        } else {
            break;
        }
    }
    if !exp_done {
        n_e = (left / p.cost_exp).floor() as usize;
    }

    // spend what is left: more experiments, then further candidates by ratio
    while p.fits(p.cost(n_e + 1, count(&z), nc)) {
        n_e += 1;
    }
    for &j in &order {
        if !z[j] && p.fits(p.cost(n_e, count(&z) + 1, nc)) {
            z[j] = true;
        }
    }

    local_search(p, nc, &prec, n_e, z)
}

fn count(z: &[bool]) -> usize {
    z.iter().filter(|&&b| b).count()
}

/// Best-improvement local search. Candidates share one cost, so the moves
/// trade between the two study types in bundles: drop the `q` weakest chosen
/// candidates and spend everything freed on experiments, or drop `d`
/// experiments and buy the best unchosen candidates that fit. Together with
/// candidate-for-candidate swaps this reaches every candidate count from the
/// current point. Every move changes the precision by a closed-form delta.
fn local_search(p: &AllocationProblem, nc: usize, prec: &[f64], mut n_e: usize, mut z: Vec<bool>) -> (usize, Vec<bool>) {
    struct Move {
        n_e: usize,
        drop: Vec<usize>,
        add: Vec<usize>,
    }
    let exp_gain = 1.0 / p.sigma_e2;
    let by_prec = |mut idx: Vec<usize>, descending: bool| {
        idx.sort_by(|&a, &b| {
            let o = prec[a].total_cmp(&prec[b]).then(a.cmp(&b));
            if descending { o.reverse() } else { o }
        });
        idx
    };
    loop {
        let k = count(&z);
        let weakest = by_prec((0..z.len()).filter(|&i| z[i]).collect(), false);
        let strongest_open = by_prec((0..z.len()).filter(|&i| !z[i]).collect(), true);
        let mut best: Option<(f64, Move)> = None;
        let mut consider = |mv: Move| {
            let delta = (mv.n_e as f64 - n_e as f64) * exp_gain + mv.add.iter().map(|&j| prec[j]).sum::<f64>()
                - mv.drop.iter().map(|&j| prec[j]).sum::<f64>();
            let tol = 1e-12 * (1.0 + delta.abs());
            if delta > tol && best.as_ref().is_none_or(|(d, _)| delta > *d) {
                best = Some((delta, mv));
            }
        };

        // candidates out, experiments in
        for q in 0..=k {
            let mut e = n_e;
            while p.fits(p.cost(e + 1, k - q, nc)) {
                e += 1;
            }
            consider(Move { n_e: e, drop: weakest[..q].to_vec(), add: vec![] });
        }
        // experiments out, candidates in
        for d in 0..=n_e {
            let e = n_e - d;
            let fit = (1..=strongest_open.len()).take_while(|&a| p.fits(p.cost(e, k + a, nc))).last();
            if let Some(a) = fit {
                consider(Move { n_e: e, drop: vec![], add: strongest_open[..a].to_vec() });
                if a == strongest_open.len() {
                    break;
                }
            }
        }
        for &out in &weakest {
            for &inn in &strongest_open {
                consider(Move { n_e, drop: vec![out], add: vec![inn] });
            }
        }
        match best {
            None => return (n_e, z),
            Some((_, mv)) => {
                n_e = mv.n_e;
                for j in mv.drop {
                    z[j] = false;
                }
                for j in mv.add {
                    z[j] = true;
                }
            }
        }
    }
}

/// Ratio-greedy heuristic with local search, best over `n_c ∈ 0..=nc_max`
/// (lowest `n_c` on ties).
pub fn solve_greedy(p: &AllocationProblem) -> Result<Allocation, AllocError> {
    p.validate()?;
    let mut best = Allocation::empty(p);
    for nc in 0..=p.nc_max {
        if !p.fits(p.cost(0, 0, nc)) {
            break;
        }
        let (n_e, z) = greedy_for_nc(p, nc);
        let objective = evaluate(p, n_e, &z, nc);
        if objective > best.objective {
            best = Allocation { n_e, n_c: nc, z, objective };
        }
    }
    Ok(best)
}

/// Exhaustive search over `n_c` and every subset of candidates, spending the
/// rest of the budget on experiments.
pub fn solve_bruteforce(p: &AllocationProblem) -> Result<Allocation, AllocError> {
    p.validate()?;
    let m = p.sigma_o2.len();
    let nodes = (p.nc_max as u128 + 1).saturating_mul(1u128.checked_shl(m as u32).unwrap_or(u128::MAX));
    if m >= 127 || nodes > MAX_BRUTEFORCE_NODES {
        return Err(AllocError::SearchSpaceTooLarge(nodes));
    }
    let mut best = Allocation::empty(p);
    let mut z = vec![false; m];
    for nc in 0..=p.nc_max {
        if !p.fits(p.cost(0, 0, nc)) {
            break;
        }
        for mask in 0u64..(1u64 << m) {
            let k = mask.count_ones() as usize;
            let spent = p.cost(0, k, nc);
            if !p.fits(spent) {
                continue;
            }
            for (j, slot) in z.iter_mut().enumerate() {
                *slot = mask >> j & 1 == 1;
            }
            let mut n_e = ((p.budget - spent) / p.cost_exp).floor().max(0.0) as usize;
            while p.fits(p.cost(n_e + 1, k, nc)) {
                n_e += 1;
            }
            while n_e > 0 && !p.fits(p.cost(n_e, k, nc)) {
                n_e -= 1;
            }
            let objective = evaluate(p, n_e, &z, nc);
            if objective > best.objective {
                best = Allocation { n_e, n_c: nc, z: z.clone(), objective };
            }
        }
    }
    Ok(best)
}
