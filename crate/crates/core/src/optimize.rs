//! Bounded one-dimensional maximisation.
//!
//! The profiled marginal likelihoods and the SURE criterion are smooth in the
//! bias variance but need not be unimodal over a wide interval, so the search
//! first scans a grid (zero plus log-spaced points up to the upper bound),
//! brackets the best grid point by its neighbours, and refines the bracket by
//! golden-section search. When the caller supplies the derivative, the
//! bracket is finally polished by bisection on the sign of the derivative,
//! which locates a stationary point far below the `sqrt(eps)` resolution that
//! value comparisons alone can reach.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("objective is not finite at x = {0}")]
    NonFiniteObjective(f64),
    #[error("invalid search interval [{0}, {1}]")]
    InvalidInterval(f64, f64),
}

#[derive(Debug, Clone, Copy)]
pub struct BoundedSearch {
    /// Grid size including the lower end point.
    pub grid_points: usize,
    /// Smallest log-spaced grid point as a fraction of the interval width.
    pub log_floor: f64,
    /// Absolute tolerance on the maximiser.
    pub xtol: f64,
    pub max_iter: usize,
}

impl Default for BoundedSearch {
    fn default() -> Self {
        BoundedSearch {
            grid_points: 256,
            log_floor: 1e-10,
            xtol: 1e-10,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarOptimum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

impl BoundedSearch {
    /// Seed grid: `lo` followed by `grid_points - 1` log-spaced points ending at `hi`.
    pub fn grid(&self, lo: f64, hi: f64) -> Vec<f64> {
        let n = self.grid_points.max(3);
        let width = hi - lo;
        let log_lo = self.log_floor.log10();
        let mut g = Vec::with_capacity(n);
        g.push(lo);
        for i in 0..n - 1 {
            let t = i as f64 / (n - 2) as f64;
            let frac = 10f64.powf(log_lo * (1.0 - t));
            g.push(if i == n - 2 { hi } else { lo + width * frac });
        }
        g
    }

    /// Maximises `f` over `[lo, hi]`. `score`, when given, must be `f'`.
    /// Ties are broken toward the smaller `x`.
    pub fn maximize<F, S>(&self, f: F, score: Option<S>, lo: f64, hi: f64) -> Result<ScalarOptimum, OptimizeError>
    where
        F: Fn(f64) -> f64,
        S: Fn(f64) -> f64,
    {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(OptimizeError::InvalidInterval(lo, hi));
        }
        let eval = |x: f64| -> Result<f64, OptimizeError> {
            let v = f(x);
            if v.is_nan() || v == f64::INFINITY {
                Err(OptimizeError::NonFiniteObjective(x))
            } else {
                Ok(v)
            }
        };

        let grid = self.grid(lo, hi);
        let mut best_i = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (i, &x) in grid.iter().enumerate() {
            let v = eval(x)?;
            if v > best_v {
                best_v = v;
                best_i = i;
            }
        }
        if best_v == f64::NEG_INFINITY {
            return Err(OptimizeError::NonFiniteObjective(grid[0]));
        }

        let mut a = grid[best_i.saturating_sub(1)];
        let mut b = grid[(best_i + 1).min(grid.len() - 1)];
        let mut iterations = 0;

        // golden-section on [a, b]
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = eval(c)?;
        let mut fd = eval(d)?;
        while (b - a) > self.xtol && iterations < self.max_iter {
            iterations += 1;
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = eval(d)?;
            }
        }
        let (mut x, mut v) = if fc >= fd { (c, fc) } else { (d, fd) };
        if best_v > v {
            x = grid[best_i];
            v = best_v;
        }

        if let Some(score) = score {
            let lo_b = grid[best_i.saturating_sub(1)];
            let hi_b = grid[(best_i + 1).min(grid.len() - 1)];
            if let Some(root) = bisect_decreasing_root(&score, lo_b, hi_b, &mut iterations, self.max_iter) {
                let vr = eval(root)?;
                // the root is a stationary point of a smooth objective: accept it
                // unless value comparisons say it is clearly worse.
                if vr >= v - 1e-12 * (1.0 + v.abs()) {
                    x = root;
                    v = vr;
                }
            }
        }

        // bound snapping, lowest x wins ties
        let f_lo = eval(lo)?;
        if f_lo >= v {
            x = lo;
            v = f_lo;
        }
        let f_hi = eval(hi)?;
        if f_hi > v {
            x = hi;
            v = f_hi;
        }
        Ok(ScalarOptimum { x, value: v, iterations })
    }

    /// Minimises `f` over `[lo, hi]`.
    pub fn minimize<F, S>(&self, f: F, score: Option<S>, lo: f64, hi: f64) -> Result<ScalarOptimum, OptimizeError>
    where
        F: Fn(f64) -> f64,
        S: Fn(f64) -> f64,
    {
        let neg_score = score.map(|s| move |x: f64| -s(x));
        let opt = self.maximize(|x| -f(x), neg_score, lo, hi)?;
        Ok(ScalarOptimum {
            value: -opt.value,
            ..opt
        })
    }
}

/// Root of a derivative that goes from positive to negative on `[a, b]`.
fn bisect_decreasing_root<S: Fn(f64) -> f64>(
    score: &S,
    mut a: f64,
    mut b: f64,
    iterations: &mut usize,
    max_iter: usize,
) -> Option<f64> {
    let sa = score(a);
    let sb = score(b);
    if !(sa > 0.0 && sb < 0.0) {
        return None;
    }
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        *iterations += 1;
        let sm = score(m);
        if sm.is_nan() {
            return None;
        }
        if sm > 0.0 {
            a = m;
        } else if sm < 0.0 {
            b = m;
        } else {
            return Some(m);
        }
    }
    Some(0.5 * (a + b))
}
