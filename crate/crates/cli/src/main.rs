mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use calibeb::alloc::{solve_bruteforce, solve_greedy, AllocationProblem, Gamma2Schedule};
use calibeb::config::ConfigFile;
use calibeb::ebfit::{default_bound, fit_mle_calibration, fit_mm_calibration, fit_sure, FitMethod, ZeroMeanSplit};
use calibeb::io::{read_calibration_csv, read_studies_csv, read_units_csv, write_studies_csv, write_units_csv};
use calibeb::numeric::logistic;
use calibeb::regime::{model_dispatch, DispatchOptions, Model};
use calibeb::rng::DEFAULT_SEED;
use calibeb::semisynth::run_pipeline;
use calibeb::sim::run_sweep;
use calibeb::withinstudy::{difference_in_means, ipw_estimate, matching_estimate};
use calibeb::StudyKind;

use render::{Format, Output};

#[derive(Parser)]
#[command(
    name = "calibeb",
    version,
    about = "Combine one experiment with observational and calibration studies by empirical Bayes",
    after_help = "\
Exit status: 0 on success, 1 on a usage error, 2 on a data or validation error.

Examples:
  calibeb fit-prior --calibration cal.csv --method mm
  calibeb posterior --studies studies.csv --model ceb --method mle --format table
  calibeb simulate --config sweep.toml --threads 4 --out results.csv
  calibeb semisynth --config dgp.toml --out run1/"
)]
struct Cli {
    /// Seed for every random draw (simulation, semi-synthetic data, bootstrap)
    #[arg(long, global = true, display_order = 100)]
    seed: Option<u64>,

    /// Worker threads for the simulation sweep (0 = one per core)
    #[arg(long, global = true, display_order = 100, default_value_t = 0)]
    threads: usize,

    /// Output file, or output directory for `semisynth` (default: standard output)
    #[arg(long, global = true, display_order = 100)]
    out: Option<PathBuf>,

    /// Output format (default: csv for `simulate`, json otherwise)
    #[arg(long, global = true, display_order = 100, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mle,
    Mm,
    Sure,
}

impl From<MethodArg> for FitMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mle => FitMethod::Mle,
            MethodArg::Mm => FitMethod::Mm,
            MethodArg::Sure => FitMethod::Sure,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Flat,
    Eb0,
    Eb,
    Ceb,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Flat => Model::Flat,
            ModelArg::Eb0 => Model::Eb0,
            ModelArg::Eb => Model::Eb,
            ModelArg::Ceb => Model::Ceb,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Half,
    EvenOdd,
    None,
}

impl From<SplitArg> for ZeroMeanSplit {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Half => ZeroMeanSplit::Half,
            SplitArg::EvenOdd => ZeroMeanSplit::EvenOdd,
            SplitArg::None => ZeroMeanSplit::None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Dim,
    Matching,
    Ipw,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Experimental,
    Observational,
    Calibration,
}

impl From<KindArg> for StudyKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Experimental => StudyKind::Experimental,
            KindArg::Observational => StudyKind::Observational,
            KindArg::Calibration => StudyKind::Calibration,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the bias prior (mu, gamma2) to calibration studies
    FitPrior {
        /// Study CSV holding calibration rows only
        #[arg(long)]
        calibration: PathBuf,
        /// Prior fitter
        #[arg(long, value_enum, default_value = "mle")]
        method: MethodArg,
        /// Upper bound on gamma2 (default: 1000 x the larger of the sample
        /// variance of the estimates and the largest sampling variance)
        #[arg(long)]
        bound: Option<f64>,
    },
    /// Posterior of the effect under one of the four bias priors
    Posterior {
        /// Study CSV with header id,kind,estimate,variance
        #[arg(long)]
        studies: PathBuf,
        /// flat: experiment only; eb0: zero-mean bias prior; eb: fully fitted
        /// prior; ceb: prior fitted to calibration studies
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Prior fitter for eb0 (mle, mm) and ceb (mle, mm, sure)
        #[arg(long, value_enum, default_value = "mle")]
        method: MethodArg,
        /// Upper bound on gamma2 (default as for fit-prior, over the studies
        /// the prior is fitted to)
        #[arg(long)]
        bound: Option<f64>,
        /// How eb0 divides observational studies between estimation and fitting
        #[arg(long, value_enum, default_value = "half")]
        split: SplitArg,
    },
    /// Study-level estimate from a unit CSV (x1..xd,a,o[,w])
    Estimate {
        /// Unit CSV with covariates x1..xd, treatment a, outcome o and optional weight w
        #[arg(long)]
        units: PathBuf,
        /// Within-study estimator
        #[arg(long, value_enum, default_value = "dim")]
        estimator: EstimatorArg,
        /// Number of matched controls per treated unit
        #[arg(long, default_value_t = 1)]
        matches: usize,
        /// Bootstrap replicates for matching and IPW variances
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
        /// IPW propensity slope on x1: e(x) = logistic(slope * x1)
        #[arg(long, default_value_t = 0.5)]
        propensity_beta: f64,
        /// Study id written to the output row
        #[arg(long, default_value = "s1")]
        id: String,
        /// Study kind written to the output row
        #[arg(long, value_enum, default_value = "observational")]
        kind: KindArg,
    },
    /// Monte Carlo sweep over J for every estimator arm
    Simulate {
        /// TOML file with a [sim] section (defaults when omitted)
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build a semi-synthetic study collection from simulated unit data
    Semisynth {
        /// TOML file with a [dgp] section (defaults when omitted)
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Split a budget between experiments, observational and calibration studies
    Allocate {
        /// Total budget
        #[arg(long)]
        budget: f64,
        /// Cost of one experimental study
        #[arg(long)]
        cost_exp: f64,
        /// Cost of one observational study
        #[arg(long)]
        cost_obs: f64,
        /// Cost of one calibration study
        #[arg(long)]
        cost_cal: f64,
        /// Sampling variance of one experimental study
        #[arg(long)]
        sigma_e2: f64,
        /// File of observational candidate variances, one per line or comma-separated
        #[arg(long)]
        sigma_o2_file: PathBuf,
        /// Largest number of calibration studies to consider
        #[arg(long, default_value_t = 0)]
        nc_max: usize,
        /// gamma2 reached with many calibration studies
        #[arg(long, default_value_t = 1.0)]
        gamma0_2: f64,
        /// Inflation of gamma2 with few calibration studies: gamma0_2 * (1 + c / max(n_c, 1))
        #[arg(long, default_value_t = 0.0)]
        gamma_c: f64,
        /// Solve exactly by enumeration instead of the greedy heuristic
        #[arg(long)]
        exact: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let format = cli.format;
    let out = cli.out.as_deref();
    match cli.command {
        Command::FitPrior { calibration, method, bound } => {
            let cal = read_calibration_csv(&calibration)?;
            let bound = bound.unwrap_or_else(|| default_bound(&cal));
            let report = match FitMethod::from(method) {
                FitMethod::Mle => fit_mle_calibration(&cal, bound)?,
                FitMethod::Mm => fit_mm_calibration(&cal)?,
                FitMethod::Sure => fit_sure(&cal, bound)?,
            };
            emit(out, &Output::Fit(report).render(format.unwrap_or(Format::Json)))
        }
        Command::Posterior { studies, model, method, bound, split } => {
            let c = read_studies_csv(&studies)?;
            let opts = DispatchOptions { bound, split: split.into() };
            let model = Model::from(model);
            let res = model_dispatch(model, &c, method.into(), &opts)?;
            emit(out, &Output::Posterior(model, res.posterior).render(format.unwrap_or(Format::Json)))
        }
        Command::Estimate { units, estimator, matches, bootstrap, propensity_beta, id, kind } => {
            let d = read_units_csv(&units)?;
            let seed = cli.seed.unwrap_or(DEFAULT_SEED);
            let est = match estimator {
                EstimatorArg::Dim => difference_in_means(&d)?,
                EstimatorArg::Matching => matching_estimate(&d, matches, bootstrap, seed)?,
                EstimatorArg::Ipw => {
                    if d.covariate_dim == 0 {
                        bail!("IPW needs at least one covariate column");
                    }
                    ipw_estimate(&d, |x| logistic(propensity_beta * x[0]), bootstrap, seed)?
                }
            };
            let summary = est.to_summary(id, kind.into())?;
            emit(out, &Output::Study(summary).render(format.unwrap_or(Format::Json)))
        }
        Command::Simulate { config } => {
            let mut cfg = load_config(config.as_deref())?.sim;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let result = run_sweep(&cfg, cli.threads)?;
            if result.total_errors() > 0 {
                for r in result.rows.iter().filter(|r| r.errors > 0) {
                    eprintln!("warning: arm {} at J={} dropped {} replicates whose fit failed", r.arm, r.j, r.errors);
                }
            }
            emit(out, &Output::Sweep(result).render(format.unwrap_or(Format::Csv)))
        }
        Command::Semisynth { config } => {
            let mut cfg = load_config(config.as_deref())?.dgp;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let Some(dir) = out else {
                bail!("semisynth writes several files; pass an output directory with --out");
            };
            let run = run_pipeline(&cfg)?;
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_units_csv(&run.experimental, false, dir.join("experimental.csv"))?;
            for (i, o) in run.observational.iter().enumerate() {
                write_units_csv(&o.data, true, dir.join(format!("observational_{:03}.csv", i + 1)))?;
            }
            for (i, c) in run.calibration.iter().enumerate() {
                write_units_csv(c, false, dir.join(format!("calibration_{:03}.csv", i + 1)))?;
            }
            write_studies_csv(&run.collection, dir.join("studies.csv"))?;
            let truth = serde_json::json!({ "ate": run.ate, "bias_mean": run.bias_mean });
            fs::write(dir.join("truth.json"), format!("{truth}\n")).context("writing truth.json")?;
            Ok(())
        }
        Command::Allocate {
            budget,
            cost_exp,
            cost_obs,
            cost_cal,
            sigma_e2,
            sigma_o2_file,
            nc_max,
            gamma0_2,
            gamma_c,
            exact,
        } => {
            let sigma_o2 = read_variances(&sigma_o2_file)?;
            let problem = AllocationProblem {
                budget,
                cost_exp,
                cost_obs,
                cost_cal,
                sigma_e2,
                sigma_o2,
                gamma2_of_nc: Gamma2Schedule::heuristic(gamma0_2, gamma_c),
                nc_max,
            };
            let alloc = if exact { solve_bruteforce(&problem)? } else { solve_greedy(&problem)? };
            let cost = alloc.cost(&problem);
            emit(out, &Output::Allocation(alloc, cost).render(format.unwrap_or(Format::Json)))
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    Ok(match path {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    })
}

fn read_variances(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .with_context(|| format!("{}: `{t}` is not a number", path.display()))
        })
        .collect()
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
