//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use calibeb::alloc::{solve_bruteforce, solve_greedy, AllocationProblem, Gamma2Schedule};
use calibeb::ebfit::{
    fit_mle_calibration, fit_mle_illusion, fit_mm_calibration, fit_sure, mm_raw_gamma2, sure_objective, default_bound,
};
use calibeb::numeric::{mean, sample_variance};
use calibeb::posterior::{posterior_ceb, posterior_flat, posterior_given_prior, posterior_quadrature_oracle};
use calibeb::rng::{child_rng, DEFAULT_SEED};
use calibeb::semisynth::{run_pipeline, DgpConfig};
use calibeb::sim::{loglog_slope, run_sweep, Arm, SimConfig, SimResult};
use calibeb::{BiasPrior, StudyCollection, StudySummary};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: u32, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    if let Some(limit) = limit {
        if took > limit {
            out.pass = false;
            out.detail += &format!("; runtime {:.1}s over the {}s limit", took.as_secs_f64(), limit.as_secs());
        }
    }
    println!(
        "{} criterion {:>2} ({:.1}s): {}",
        if out.pass { "PASS" } else { "FAIL" },
        id,
        took.as_secs_f64(),
        out.detail
    );
    out.pass
}

fn random_collection(rng: &mut impl Rng, j: usize, k: usize) -> StudyCollection {
    let n = Normal::new(0.0, 2.0).unwrap();
    let e = StudySummary::experimental("e", n.sample(rng), rng.random_range(0.1..3.0)).unwrap();
    let obs = (0..j)
        .map(|i| StudySummary::observational(format!("o{i}"), n.sample(rng), rng.random_range(0.1..3.0)).unwrap())
        .collect();
    let cal = (0..k)
        .map(|i| StudySummary::calibration(format!("c{i}"), n.sample(rng), rng.random_range(0.1..3.0)).unwrap())
        .collect();
    StudyCollection::new(e, obs, cal).unwrap()
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let mut rng = child_rng(DEFAULT_SEED, &[1], i);
        let j = rng.random_range(0..=10);
        let c = random_collection(&mut rng, j, 0);
        let prior = BiasPrior::new(rng.random_range(-2.0..2.0), rng.random_range(0.0..3.0)).unwrap();
        let closed = posterior_given_prior(&c, &prior);
        let quad = posterior_quadrature_oracle(&c, &prior, 10.0, 100_001).unwrap();
        worst = worst.max((closed.mean - quad.mean).abs()).max((closed.variance - quad.variance).abs());
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("max |closed form - quadrature| over 100 collections = {worst:.2e} (limit 1e-6)"),
    }
}

fn criterion_2() -> Outcome {
    let mut flat_ok = true;
    let mut eb_ok = true;
    let mut var_ok = true;
    for i in 0..1000 {
        let mut rng = child_rng(DEFAULT_SEED, &[2], i);
        let j = rng.random_range(1..=20);
        let c = random_collection(&mut rng, j, 0);
        let ye = c.experimental.estimate;
        flat_ok &= posterior_flat(&c.experimental).mean == ye;
        let (_, post) = fit_mle_illusion(&c, default_bound(&c.observational)).unwrap();
        eb_ok &= post.mean == ye;
        var_ok &= post.variance < c.experimental.variance;
    }
    Outcome {
        pass: flat_ok && eb_ok && var_ok,
        detail: format!(
            "1000 collections: flat mean == y_e {flat_ok}, illusion mean == y_e {eb_ok}, illusion variance < sigma_e^2 {var_ok}"
        ),
    }
}

fn criterion_3(sweep: &SimResult) -> Outcome {
    let rows: Vec<String> = sweep.arm_rows(Arm::Naive).map(|r| format!("J={}: {:.4}", r.j, r.mse)).collect();
    let pass = sweep.arm_rows(Arm::Naive).all(|r| (0.94..=1.06).contains(&r.mse)) && sweep.total_errors() == 0;
    Outcome {
        pass,
        detail: format!("naive MSE in [0.94, 1.06] at every J: {}", rows.join(", ")),
    }
}

fn criterion_4(sweep: &SimResult) -> Outcome {
    let slope = loglog_slope(sweep, Arm::CebMm).unwrap();
    let re = sweep.row(Arm::CebMm, 500).unwrap().re;
    Outcome {
        pass: (-1.2..=-0.8).contains(&slope) && re < 0.55,
        detail: format!("ceb_mm log-log slope {slope:.4} (need [-1.2, -0.8]); RE at J=500 {re:.4} (need < 0.55)"),
    }
}

fn criterion_5(sweep: &SimResult) -> Outcome {
    let mut worst: f64 = 0.0;
    for r in sweep.arm_rows(Arm::CebMm) {
        let mle = sweep.row(Arm::CebMle, r.j).unwrap().mse;
        worst = worst.max((mle - r.mse).abs() / r.mse);
    }
    Outcome {
        pass: worst < 0.05,
        detail: format!("max |MSE_mle - MSE_mm| / MSE_mm = {worst:.2e} (limit 0.05)"),
    }
}

fn calibration_draws(seed_tag: u64, index: u64, k: usize, mu: f64, gamma2: f64) -> Vec<StudySummary> {
    let mut rng = child_rng(DEFAULT_SEED, &[seed_tag], index);
    let n = Normal::new(0.0, 1.0).unwrap();
    (0..k)
        .map(|i| {
            let b = mu + gamma2.sqrt() * n.sample(&mut rng);
            StudySummary::calibration(format!("c{i}"), b + n.sample(&mut rng), 1.0).unwrap()
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let cal = calibration_draws(6, 0, 10_000, 0.5, 1.0);
    let mm = fit_mm_calibration(&cal).unwrap().prior;
    let mle = fit_mle_calibration(&cal, default_bound(&cal)).unwrap().prior;
    let ok = |p: BiasPrior| (p.mu - 0.5).abs() <= 0.05 && (p.gamma2 - 1.0).abs() <= 0.1;
    Outcome {
        pass: ok(mm) && ok(mle),
        detail: format!(
            "K=10^4: mm (mu {:.4}, gamma2 {:.4}), mle (mu {:.4}, gamma2 {:.4}); need mu 0.5 +/- 0.05, gamma2 1.0 +/- 0.1",
            mm.mu, mm.gamma2, mle.mu, mle.gamma2
        ),
    }
}

fn criterion_7() -> Outcome {
    let k = 50;
    let raws: Vec<f64> = (0..10_000)
        .map(|r| mm_raw_gamma2(&calibration_draws(7, r, k, 0.5, 1.0)).unwrap())
        .collect();
    let m = mean(&raws);
    let se = (sample_variance(&raws) / raws.len() as f64).sqrt();
    let expected = 1.0 - (k as f64 * (1.0 + 1.0)) / (k * k) as f64;
    Outcome {
        pass: (m - expected).abs() <= 3.0 * se,
        detail: format!("mean raw gamma2_MM {m:.5}, expected {expected:.5}, MC se {se:.5}"),
    }
}

fn criterion_8() -> Outcome {
    let runs = 50;
    let mut diffs = Vec::with_capacity(runs);
    let mut wins = 0;
    for r in 0..runs {
        let cfg = DgpConfig {
            seed: DEFAULT_SEED + r as u64,
            ..DgpConfig::default()
        };
        let run = run_pipeline(&cfg).unwrap();
        let c = &run.collection;
        let cal: Vec<f64> = c.calibration.iter().map(|s| s.estimate).collect();
        let obs: Vec<f64> = c.observational.iter().map(|s| s.estimate - run.ate).collect();
        diffs.push(mean(&cal) - mean(&obs));
        let fit = fit_mm_calibration(&c.calibration).unwrap();
        let ceb = posterior_ceb(c, &fit.prior).mean;
        if (ceb - run.ate).abs() < (c.experimental.estimate - run.ate).abs() {
            wins += 1;
        }
    }
    let m = mean(&diffs);
    let se = (sample_variance(&diffs) / runs as f64).sqrt();
    let share = wins as f64 / runs as f64;
    Outcome {
        pass: m.abs() < 3.0 * se && share >= 0.8,
        detail: format!(
            "mean(cal) - mean(obs - ATE) = {m:.5} (3 MC se = {:.5}); CEB beats experiment in {wins}/{runs} runs",
            3.0 * se
        ),
    }
}

fn criterion_9() -> Outcome {
    let mut worst: f64 = 1.0;
    for i in 0..500 {
        let mut rng = child_rng(DEFAULT_SEED, &[9], i);
        let m = rng.random_range(1..=12);
        let p = AllocationProblem {
            budget: rng.random_range(0.0..30.0),
            cost_exp: rng.random_range(0.5..5.0),
            cost_obs: rng.random_range(0.5..5.0),
            cost_cal: rng.random_range(0.5..5.0),
            sigma_e2: rng.random_range(0.5..3.0),
            sigma_o2: (0..m).map(|_| rng.random_range(0.2..4.0)).collect(),
            gamma2_of_nc: Gamma2Schedule::heuristic(rng.random_range(0.1..2.0), rng.random_range(0.0..3.0)),
            nc_max: rng.random_range(0..=5),
        };
        let g = solve_greedy(&p).unwrap().objective;
        let b = solve_bruteforce(&p).unwrap().objective;
        if b > 0.0 {
            worst = worst.min(g / b);
        }
    }
    let worked = AllocationProblem {
        budget: 10.0,
        cost_exp: 5.0,
        cost_obs: 1.0,
        cost_cal: 1.0,
        sigma_e2: 1.0,
        sigma_o2: vec![1.0; 10],
        gamma2_of_nc: Gamma2Schedule::constant(1.0),
        nc_max: 10,
    };
    let ten = solve_greedy(&worked).unwrap().objective;
    Outcome {
        pass: worst >= 0.95 && ten == 5.0,
        detail: format!("min greedy/brute-force over 500 instances {worst:.4} (need >= 0.95); R=10 instance {ten}"),
    }
}

/// Smallest SURE value on a `n x n` grid over `[g_lo, g_hi] x [m_lo, m_hi]`.
fn sure_grid_min(cal: &[StudySummary], g: (f64, f64), m: (f64, f64), n: usize) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..n {
        let gamma2 = g.0 + (g.1 - g.0) * a as f64 / (n - 1) as f64;
        for b in 0..n {
            let mu = m.0 + (m.1 - m.0) * b as f64 / (n - 1) as f64;
            best = best.min(sure_objective(mu, gamma2, cal));
        }
    }
    best
}

fn criterion_10() -> Outcome {
    let mut worst_global: f64 = f64::NEG_INFINITY;
    let mut worst_local: f64 = 0.0;
    for i in 0..200 {
        let mut rng = child_rng(DEFAULT_SEED, &[10], i);
        let k = rng.random_range(2..=30);
        let gamma2 = rng.random_range(0.0..2.0);
        let n = Normal::new(0.0, 1.0).unwrap();
        let cal: Vec<StudySummary> = (0..k)
            .map(|j| {
                let v: f64 = rng.random_range(0.2..3.0);
                let y = 0.5 + (gamma2 + v).sqrt() * n.sample(&mut rng);
                StudySummary::calibration(format!("c{j}"), y, v).unwrap()
            })
            .collect();
        let ys: Vec<f64> = cal.iter().map(|s| s.estimate).collect();
        let max_v = cal.iter().map(|s| s.variance).fold(0.0, f64::max);
        let bound = 4.0 * sample_variance(&ys).max(max_v);
        let fit = fit_sure(&cal, bound).unwrap();
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        // the profiled optimum can be no worse than anything on the full grid
        let global = sure_grid_min(&cal, (0.0, bound), (lo, hi), 400);
        worst_global = worst_global.max(fit.objective_value - global);

        // and a fine grid around it reaches the same value
        let (g, mu) = (fit.prior.gamma2, fit.prior.mu);
        let hg = 1e-4 * (1.0 + g);
        let hm = 1e-4 * (1.0 + mu.abs());
        let local = sure_grid_min(&cal, ((g - hg).max(0.0), (g + hg).min(bound)), (mu - hm, mu + hm), 400);
        worst_local = worst_local.max((fit.objective_value - local).abs());
    }
    Outcome {
        pass: worst_global <= 1e-6 && worst_local <= 1e-6,
        detail: format!(
            "200 instances: max (profiled - 400x400 grid min) {worst_global:.2e}, max |profiled - local 400x400 grid min| {worst_local:.2e} (limit 1e-6)"
        ),
    }
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    std::fs::write(&config, "[sim]\nJ_grid = [5, 10, 20, 40]\nreplicates = 300\n").unwrap();
    let run = |threads: &str, name: &str| -> Vec<u8> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_calibeb"))
            .args(["simulate", "--config"])
            .arg(&config)
            .args(["--threads", threads, "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let a = run("1", "a.csv");
    let b = run("1", "b.csv");
    let c = run("8", "c.csv");
    Outcome {
        pass: a == b && a == c && !a.is_empty(),
        detail: format!(
            "repeat run identical {}, --threads 1 vs 8 identical {} ({} bytes)",
            a == b,
            a == c,
            a.len()
        ),
    }
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let mut all = true;
    all &= check(1, secs(10), criterion_1);
    all &= check(2, secs(30), criterion_2);

    let start = Instant::now();
    let sweep = run_sweep(&SimConfig::default(), 0).unwrap();
    let sweep_time = start.elapsed();
    println!("default sweep finished in {:.1}s (limit 120s)", sweep_time.as_secs_f64());
    let in_time = sweep_time <= Duration::from_secs(120);
    all &= check(3, None, || {
        let mut o = criterion_3(&sweep);
        o.pass &= in_time;
        o
    });
    all &= check(4, None, || criterion_4(&sweep));
    all &= check(5, None, || criterion_5(&sweep));

    all &= check(6, secs(10), criterion_6);
    all &= check(7, secs(20), criterion_7);
    all &= check(8, secs(180), criterion_8);
    all &= check(9, secs(30), criterion_9);
    all &= check(10, secs(30), criterion_10);
    all &= check(11, None, criterion_11);

    if !all {
        println!("acceptance: at least one criterion failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
