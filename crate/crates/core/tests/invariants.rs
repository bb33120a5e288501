use nlheat::grid::{RadialField, RadialGrid};
use nlheat::params::ModelParams;
use nlheat::solver::{profile_seed, resume, run_until_blowup, Budget, Clock, SolverConfig};
use proptest::prelude::*;

fn steps(n: u64) -> Budget {
    Budget {
        max_steps: Some(n),
        t_end: None,
        wall_secs: None,
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let p = ModelParams::validate(4.0, 3.0, 0.1, 1, None).unwrap();
    let mut cfg = SolverConfig::new(RadialGrid::new(1.0, 128, 1).unwrap(), p);
    let seed = profile_seed(cfg.grid, &p, 0.01).unwrap();
    cfg.budget = steps(600);
    let whole = run_until_blowup(&seed, cfg).unwrap();
    cfg.budget = steps(250);
    let half = run_until_blowup(&seed, cfg).unwrap();
    let rest = resume(&half, steps(600)).unwrap();
    assert_eq!(rest.steps, whole.steps);
    assert_eq!(rest.history, whole.history);
    for (a, b) in rest.last().values().iter().zip(whole.last().values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(rest.history.last().unwrap().clock(), whole.history.last().unwrap().clock());
}

#[test]
fn clock_resolves_steps_below_ulp() {
    let t = 0.0107;
    let mut c = Clock::new(t);
    for _ in 0..1000 {
        c = c.add(1e-25);
    }
    assert_eq!(c.hi, t);
    assert!((c.minus(Clock::new(t)) - 1e-22).abs() < 1e-34);
    assert!(c > Clock::new(t));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nonnegative_data_stays_nonnegative(
        values in proptest::collection::vec(0.0f64..2.0, 33),
        mu in 0.0f64..0.5,
        dim in 1u32..=3,
    ) {
        let p = ModelParams::validate(4.0, 1.5 * f64::from(dim) + 1.75, mu, dim, None).unwrap();
        let grid = RadialGrid::new(1.0, 32, dim).unwrap();
        let mut values = values;
        values[32] = 0.0;
        let u0 = RadialField::new(grid, values, 0.0).unwrap();
        let mut cfg = SolverConfig::new(grid, p);
        cfg.budget = steps(400);
        cfg.record_stride = 50;
        let traj = run_until_blowup(&u0, cfg).unwrap();
        for snap in &traj.snapshots {
            let min = snap.values().iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(min >= 0.0, "min {min} at t = {}", snap.time());
        }
    }

    #[test]
    fn clock_sum_is_exact_to_double_double(t in 1e-3f64..1.0, dts in proptest::collection::vec(1e-30f64..1e-12, 1..50)) {
        let mut c = Clock::new(t);
        for dt in &dts {
            c = c.add(*dt);
        }
        let total: f64 = dts.iter().sum();
        let got = c.minus(Clock::new(t));
        prop_assert!((got - total).abs() <= 1e-12 * total, "{got} vs {total}");
    }
}
