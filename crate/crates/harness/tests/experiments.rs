use eps_planner::trainer::error_rate;
use eps_planner::{BoundMode, LossKind, LossSpec, NoiseDraw, SolverMode, TrainConfig};
use eps_planner_harness::data::gen_synthetic;
use eps_planner_harness::experiments::{
    estimate_vs_actual, measuring_sweep, oracle_compare, oracle_row, sample_sweep, Setup,
};

fn setup(n: usize, p: usize, kind: LossKind) -> Setup {
    Setup {
        data: gen_synthetic(n, p, 0.5, 3).unwrap(),
        spec: LossSpec::with_default_bounds(kind, p, BoundMode::Tight).unwrap(),
        train: TrainConfig::exact(),
        delta: 1e-3,
    }
}

#[test]
fn target_at_the_measuring_point_reproduces_the_measured_utility() {
    let s = setup(300, 3, LossKind::Logistic);
    let table = estimate_vs_actual(&s, &[0.5], &[0.25, 0.5, 1.0], 3, 1).unwrap();
    for (r, est) in table.estimates[0].iter().enumerate() {
        assert_eq!(est[1], table.measured[0][r]);
    }
    // per-repeat estimates are affine in the target
    for est in &table.estimates[0] {
        let slope_a = (est[1] - est[0]) / 0.25;
        let slope_b = (est[2] - est[1]) / 0.5;
        assert!((slope_a - slope_b).abs() < 1e-12 * (1.0 + slope_a.abs()));
    }
    assert_eq!(table.rows.len(), 3);
    assert!(table.rows.iter().all(|r| r.abs_diff == (r.estimated - r.actual).abs()));
}

#[test]
fn two_point_sweep_and_bad_grids() {
    let s = setup(200, 2, LossKind::Logistic);
    let rows = measuring_sweep(&s, &[0.5, 1.0], 2, 0).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.avg_error == r.max_error));
    assert!(measuring_sweep(&s, &[0.5], 2, 0).is_err());
    assert!(measuring_sweep(&s, &[1.0, 0.5], 2, 0).is_err());
    assert!(estimate_vs_actual(&s, &[0.5], &[0.5], 0, 0).is_err());
    assert!(estimate_vs_actual(&s, &[-0.5], &[0.5], 1, 0).is_err());
}

#[test]
fn repeated_sample_sizes_give_identical_rows() {
    let s = setup(400, 2, LossKind::Logistic);
    let rows = sample_sweep(&s, &[100, 100, 400], 0.5, &[0.25, 1.0], 2, 0, 7).unwrap();
    assert_eq!(rows[0], rows[1]);
    assert_eq!(rows[2].n, 400);
    assert!(sample_sweep(&s, &[401], 0.5, &[1.0], 1, 0, 7).is_err());
}

#[test]
fn sweeps_are_reproducible() {
    let s = setup(200, 3, LossKind::Logistic);
    let a = estimate_vs_actual(&s, &[0.25, 0.75], &[0.5, 1.0], 3, 11).unwrap();
    let b = estimate_vs_actual(&s, &[0.25, 0.75], &[0.5, 1.0], 3, 11).unwrap();
    assert_eq!(a, b);
}

#[test]
fn quadratic_oracle_is_essentially_exact() {
    let mut s = setup(300, 3, LossKind::Quadratic);
    s.train = TrainConfig::exact().with_tolerance(1e-12);
    let rows = oracle_compare(&s, &[0.25, 1.0], &[1, 2], 1e-4).unwrap();
    for r in rows {
        assert!(r.dtheta_rel_error < 1e-8, "{r:?}");
        assert!(r.slope_rel_error < 1e-6, "{r:?}");
    }
}

#[test]
fn logistic_oracle_converges_with_the_step() {
    let mut s = setup(300, 3, LossKind::Logistic);
    s.train = TrainConfig::exact().with_tolerance(1e-12);
    let row = oracle_row(&s, &NoiseDraw::from_seed(4, 3), 0.25, 4, 0.05 * 0.25).unwrap();
    assert!(row.dtheta_rel_error < 1e-2, "{row:?}");
    assert!(row.richardson_ratio < 1.0, "{row:?}");
    let fine = oracle_compare(&s, &[0.25], &[4], 1e-4).unwrap();
    assert!(fine[0].dtheta_rel_error < 1e-3 && fine[0].slope_rel_error < 1e-3);
}

#[test]
fn oracle_requires_the_exact_solver() {
    let mut s = setup(50, 2, LossKind::Logistic);
    s.train = TrainConfig::sgd_repro();
    assert_eq!(s.train.solver_mode, SolverMode::SgdRepro);
    assert!(oracle_compare(&s, &[0.5], &[0], 1e-4).is_err());
}

#[test]
fn synthetic_separation_controls_difficulty() {
    let spec = LossSpec::with_default_bounds(LossKind::Logistic, 5, BoundMode::Tight).unwrap();
    let non_private = |sep: f64| {
        let s = Setup {
            data: gen_synthetic(2000, 5, sep, 8).unwrap(),
            spec,
            train: TrainConfig::exact(),
            delta: 1e-3,
        };
        let m = s.train_at(1e12, 0).unwrap();
        let u = eps_planner::utility(&m.theta, &s.data, &s.spec).unwrap();
        (u, error_rate(&m.theta, &s.data).unwrap())
    };
    let (u0, _) = non_private(0.0);
    assert!((u0 - std::f64::consts::LN_2).abs() < 0.1, "{u0}");
    let (u5, err5) = non_private(5.0);
    assert!(u5 < 0.1, "{u5}");
    assert!(err5 < 0.01, "{err5}");
    assert!(u5 < u0);
}
