//! Text renderings of command results.

use clap::ValueEnum;
use serde_json::json;

use calibeb::alloc::Allocation;
use calibeb::ebfit::FitReport;
use calibeb::io::{fit_report_json, posterior_json};
use calibeb::regime::Model;
use calibeb::sim::SimResult;
use calibeb::{GaussianPosterior, StudySummary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

pub enum Output {
    Fit(FitReport),
    Posterior(Model, GaussianPosterior),
    Study(StudySummary),
    Sweep(SimResult),
    /// Allocation and its total cost.
    Allocation(Allocation, f64),
}

impl Output {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.json(),
            Format::Csv => self.csv(),
            Format::Table => self.table(),
        }
    }

    fn json(&self) -> String {
        let text = match self {
            Output::Fit(r) => fit_report_json(r),
            Output::Posterior(_, p) => posterior_json(p),
            Output::Study(s) => json!({
                "id": s.id,
                "kind": s.kind.as_str(),
                "estimate": s.estimate,
                "variance": s.variance,
            })
            .to_string(),
            Output::Sweep(result) => {
                let rows: Vec<_> = result
                    .rows
                    .iter()
                    .map(|r| json!({ "arm": r.arm.as_str(), "J": r.j, "mse": r.mse, "mc_se": r.mc_se, "re": r.re }))
                    .collect();
                serde_json::Value::from(rows).to_string()
            }
            Output::Allocation(a, cost) => json!({
                "n_e": a.n_e,
                "n_c": a.n_c,
                "z": a.z,
                "objective": a.objective,
                "cost": cost,
            })
            .to_string(),
        };
        text + "\n"
    }

    fn csv(&self) -> String {
        match self {
            Output::Fit(r) => format!(
                "mu,gamma2,method,objective,bound_hit\n{},{},{},{},{}\n",
                r.prior.mu, r.prior.gamma2, r.method, r.objective_value, r.bound_hit
            ),
            Output::Posterior(_, p) => format!("mean,variance\n{},{}\n", p.mean, p.variance),
            Output::Study(s) => format!("id,kind,estimate,variance\n{},{},{},{}\n", s.id, s.kind, s.estimate, s.variance),
            Output::Sweep(result) => result.to_csv_string(),
            Output::Allocation(a, cost) => {
                let z: String = a.z.iter().map(|&b| if b { '1' } else { '0' }).collect();
                format!(
                    "n_e,n_c,n_o,objective,cost,z\n{},{},{},{},{},{}\n",
                    a.n_e,
                    a.n_c,
                    a.num_observational(),
                    a.objective,
                    cost,
                    z
                )
            }
        }
    }

    fn table(&self) -> String {
        match self {
            Output::Fit(r) => format!(
                "{:<8} {:>12} {:>12} {:>14} {:>9}\n{:<8} {:>12.6} {:>12.6} {:>14.6} {:>9}\n",
                "method", "mu", "gamma2", "objective", "at bound",
                r.method, r.prior.mu, r.prior.gamma2, r.objective_value, r.bound_hit
            ),
            Output::Posterior(model, p) => {
                let (lo, hi) = p.interval(1.96);
                format!(
                    "{:<6} {:>10} {:>10}   {:<24}\n{:<6} {:>10.4} {:>10.4}   [{:.4}, {:.4}]\n",
                    "model", "mean", "sd", "95% interval",
                    model, p.mean, p.sd(), lo, hi
                )
            }
            Output::Study(s) => format!(
                "{:<12} {:<14} {:>12} {:>12}\n{:<12} {:<14} {:>12.6} {:>12.6}\n",
                "id", "kind", "estimate", "variance", s.id, s.kind, s.estimate, s.variance
            ),
            Output::Sweep(result) => {
                let mut t = format!("{:<12} {:>6} {:>12} {:>12} {:>8}\n", "arm", "J", "mse", "mc_se", "re");
                for r in &result.rows {
                    t += &format!("{:<12} {:>6} {:>12.6} {:>12.6} {:>8.4}\n", r.arm, r.j, r.mse, r.mc_se, r.re);
                }
                t
            }
            Output::Allocation(a, cost) => format!(
                "{:>5} {:>5} {:>5} {:>12} {:>10}\n{:>5} {:>5} {:>5} {:>12.6} {:>10.4}\n",
                "n_e", "n_c", "n_o", "precision", "cost",
                a.n_e, a.n_c, a.num_observational(), a.objective, cost
            ),
        }
    }
}
