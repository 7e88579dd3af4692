use fpm_core::diagnostics::{
    check_energy_budget, run_checks, BudgetParams, BudgetSeries, SeriesRecorder, Trajectory, TrajectoryRecorder,
};
use fpm_core::lattice::{make_grid, ScalarField};
use fpm_core::stepper::{evolve, EvolveOptions, SchemeParams, StepState};

fn short_run() -> (SchemeParams, BudgetSeries, Trajectory) {
    let g = make_grid(32, 8.0).unwrap();
    let u = ScalarField::from_fn(&g, |x, y| (-(x * x + y * y) / 4.0).exp());
    let p = u.scale(0.5);
    let params = SchemeParams {
        tau: 2e-3,
        ..SchemeParams::default()
    };
    let opts = EvolveOptions {
        horizon: 0.02,
        snapshot_every: 2,
    };
    let mut series = SeriesRecorder::new(&params);
    let mut traj = TrajectoryRecorder::default();
    evolve(StepState::new(u, p, 0.0), &params, &opts, (&mut series, &mut traj)).unwrap();
    (params, series.into_series().unwrap(), traj.trajectory)
}

#[test]
fn all_checks_pass_on_a_clean_run() {
    let (params, series, traj) = short_run();
    assert_eq!(series.rows.len(), 10);
    assert_eq!(traj.len(), 6);
    for c in run_checks(&series, &traj, params.tol_neg) {
        assert!(c.passed, "{}", c.line());
    }
}

#[test]
fn files_round_trip() {
    let (params, series, traj) = short_run();
    let tmp = tempfile::tempdir().unwrap();
    let (s, t) = (tmp.path().join("series.csv"), tmp.path().join("terms.csv"));
    series.write_csv(&s, &t).unwrap();
    let back = BudgetSeries::read_csv(BudgetParams::from(&params), &s, &t).unwrap();
    assert_eq!(back, series);
    traj.write_dir(tmp.path()).unwrap();
    let again = Trajectory::read_dir(tmp.path()).unwrap();
    assert_eq!(again, traj);
}

#[test]
fn dissipation_accounts_for_energy_drop() {
    let (_, series, _) = short_run();
    let spent = *series.cumulative_dissipation().last().unwrap();
    let drop = series.initial.energy - series.rows.last().unwrap().energy;
    let slack: f64 = series.slack_history().iter().sum();
    assert!((drop - spent - slack).abs() <= 1e-12 * series.initial.energy);
    assert!(check_energy_budget(&series).passed);
}
