//! Property tests for the invariants of the posterior, the fitters, I/O and
//! allocation.

use proptest::prelude::*;

use calibeb::alloc::{solve_bruteforce, solve_greedy, AllocationProblem, Gamma2Schedule};
use calibeb::ebfit::{default_bound, fit_mle_calibration, fit_mm_calibration};
use calibeb::io::{read_studies, write_studies};
use calibeb::posterior::{posterior_given_prior, posterior_quadrature_oracle};
use calibeb::study::validate_collection;
use calibeb::{BiasPrior, StudyCollection, StudySummary};

fn study() -> impl Strategy<Value = (f64, f64)> {
    (-5.0..5.0f64, 0.1..4.0f64)
}

fn collection_with(j: std::ops::RangeInclusive<usize>, k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = StudyCollection> {
    (study(), prop::collection::vec(study(), j), prop::collection::vec(study(), k)).prop_map(|(e, obs, cal)| {
        StudyCollection::new(
            StudySummary::experimental("e", e.0, e.1).unwrap(),
            obs.iter()
                .enumerate()
                .map(|(i, s)| StudySummary::observational(format!("o{i}"), s.0, s.1).unwrap())
                .collect(),
            cal.iter()
                .enumerate()
                .map(|(i, s)| StudySummary::calibration(format!("c{i}"), s.0, s.1).unwrap())
                .collect(),
        )
        .unwrap()
    })
}

fn prior() -> impl Strategy<Value = BiasPrior> {
    (-3.0..3.0f64, 0.0..3.0f64).prop_map(|(mu, g)| BiasPrior::new(mu, g).unwrap())
}

fn shifted(c: &StudyCollection, by: f64) -> StudyCollection {
    let mut out = c.clone();
    out.experimental.estimate += by;
    for s in &mut out.observational {
        s.estimate += by;
    }
    out
}

fn scaled(studies: &[StudySummary], s: f64) -> Vec<StudySummary> {
    studies
        .iter()
        .map(|x| StudySummary::calibration(x.id.clone(), x.estimate * s, x.variance * s * s).unwrap())
        .collect()
}

fn problem() -> impl Strategy<Value = AllocationProblem> {
    (
        0.0..25.0f64,
        (0.5..5.0f64, 0.5..5.0f64, 0.5..5.0f64),
        0.5..3.0f64,
        prop::collection::vec(0.2..4.0f64, 0..=8),
        (0.1..2.0f64, 0.0..3.0f64),
        0usize..=4,
    )
        .prop_map(|(budget, (ce, co, cc), se, so, (g0, c), nc_max)| AllocationProblem {
            budget,
            cost_exp: ce,
            cost_obs: co,
            cost_cal: cc,
            sigma_e2: se,
            sigma_o2: so,
            gamma2_of_nc: Gamma2Schedule::heuristic(g0, c),
            nc_max,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn closed_form_matches_quadrature(c in collection_with(0..=10, 0..=0), p in prior()) {
        let closed = posterior_given_prior(&c, &p);
        let quad = posterior_quadrature_oracle(&c, &p, 10.0, 100_001).unwrap();
        prop_assert!((closed.mean - quad.mean).abs() <= 1e-6);
        prop_assert!((closed.variance - quad.variance).abs() <= 1e-6);
    }

    #[test]
    fn posterior_is_translation_equivariant(c in collection_with(0..=10, 0..=0), p in prior(), by in -10.0..10.0f64) {
        let base = posterior_given_prior(&c, &p);
        let moved = posterior_given_prior(&shifted(&c, by), &p);
        prop_assert!((moved.mean - base.mean - by).abs() <= 1e-9 * (1.0 + base.mean.abs() + by.abs()));
        prop_assert_eq!(moved.variance, base.variance);
    }

    #[test]
    fn extra_studies_never_raise_the_variance(c in collection_with(0..=10, 0..=0), p in prior(), extra in study()) {
        let before = posterior_given_prior(&c, &p).variance;
        let mut more = c.clone();
        more.observational.push(StudySummary::observational("extra", extra.0, extra.1).unwrap());
        let after = posterior_given_prior(&more, &p).variance;
        prop_assert!(after <= before);
        prop_assert!(before <= c.experimental.variance);
    }

    #[test]
    fn fitters_are_scale_equivariant(c in collection_with(0..=0, 3..=20), s in 0.1..10.0f64) {
        let cal = &c.calibration;
        let big = scaled(cal, s);
        let mm = fit_mm_calibration(cal).unwrap().prior;
        let mm_s = fit_mm_calibration(&big).unwrap().prior;
        prop_assert!((mm_s.mu - s * mm.mu).abs() <= 1e-9 * (1.0 + s * mm.mu.abs()));
        prop_assert!((mm_s.gamma2 - s * s * mm.gamma2).abs() <= 1e-9 * (1.0 + s * s * mm.gamma2));

        let mle = fit_mle_calibration(cal, default_bound(cal)).unwrap().prior;
        let mle_s = fit_mle_calibration(&big, default_bound(&big)).unwrap().prior;
        let scale = s * s * (1.0 + default_bound(cal));
        prop_assert!((mle_s.gamma2 - s * s * mle.gamma2).abs() <= 1e-6 * scale);
        prop_assert!((mle_s.mu - s * mle.mu).abs() <= 1e-6 * s * (1.0 + mle.mu.abs()));
    }

    #[test]
    fn validation_is_idempotent(c in collection_with(0..=6, 0..=6)) {
        let once = validate_collection(c.clone()).unwrap();
        let twice = validate_collection(once.clone()).unwrap();
        prop_assert_eq!(&once, &c);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn csv_round_trip_is_exact(c in collection_with(0..=6, 0..=6)) {
        let mut buf = Vec::new();
        write_studies(&c, &mut buf).unwrap();
        let back = StudyCollection::from_studies(read_studies(buf.as_slice()).unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn greedy_allocation_is_feasible_and_near_optimal(p in problem()) {
        let g = solve_greedy(&p).unwrap();
        let b = solve_bruteforce(&p).unwrap();
        prop_assert!(g.cost(&p) <= p.budget + 1e-9 * p.budget.max(1.0));
        prop_assert!(g.objective <= b.objective * (1.0 + 1e-12));
        prop_assert!(g.objective >= 0.5 * b.objective);
    }

    #[test]
    fn larger_budget_never_hurts(p in problem(), more in 0.0..10.0f64) {
        let base = solve_bruteforce(&p).unwrap().objective;
        let richer = AllocationProblem { budget: p.budget + more, ..p };
        prop_assert!(solve_bruteforce(&richer).unwrap().objective >= base);
    }
}

#[test]
fn raw_moment_estimate_has_the_stated_bias() {
    use calibeb::ebfit::mm_raw_gamma2;
    use calibeb::numeric::{mean, sample_variance};
    use calibeb::rng::{child_rng, DEFAULT_SEED};
    use rand_distr::{Distribution, Normal};

    // unequal variances make the bias term non-trivial
    let k = 20;
    let sigma2: Vec<f64> = (0..k).map(|i| 0.25 + 0.15 * i as f64).collect();
    let gamma2 = 0.7;
    let z = Normal::new(0.0, 1.0).unwrap();
    let raws: Vec<f64> = (0..20_000)
        .map(|r| {
            let mut rng = child_rng(DEFAULT_SEED, &[201], r);
            let cal: Vec<StudySummary> = sigma2
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let y = 0.4 + (gamma2 + v).sqrt() * z.sample(&mut rng);
                    StudySummary::calibration(format!("c{i}"), y, v).unwrap()
                })
                .collect();
            mm_raw_gamma2(&cal).unwrap()
        })
        .collect();
    let expected = gamma2 - sigma2.iter().map(|v| gamma2 + v).sum::<f64>() / (k * k) as f64;
    let se = (sample_variance(&raws) / raws.len() as f64).sqrt();
    assert!((mean(&raws) - expected).abs() <= 3.0 * se, "{} vs {expected} (se {se})", mean(&raws));
}
