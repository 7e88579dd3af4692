use fpm_core::energy::{gradient_energy, lyapunov_energy};
use fpm_core::lattice::{make_grid, ScalarField};
use fpm_core::stepper::{
    coupled_step, density_step, evolve, pressure_residual, pressure_step, EvolveOptions, SchemeParams, StepState,
};

fn bump(n: usize, l: f64, amp: f64) -> ScalarField {
    let g = make_grid(n, l).unwrap();
    ScalarField::from_fn(&g, |x, y| amp * (-(x * x + y * y) / 4.0).exp())
}

#[test]
fn conservative_run_keeps_mass_and_dissipates() {
    let u = bump(32, 8.0, 1.0);
    let p = u.scale(0.5);
    let params = SchemeParams {
        eps: 0.0,
        tau: 2e-3,
        ..SchemeParams::default()
    };
    let m0 = u.integral();
    let mut state = StepState::new(u, p, 0.0);
    let mut h = lyapunov_energy(&state.u, &state.p, params.beta, Some(params.s))
        .unwrap()
        .energy;
    for _ in 0..20 {
        let (next, d) = coupled_step(&state, &params).unwrap();
        assert!(d.energy_after <= h);
        assert!(d.energy_slack >= -d.slack_tolerance);
        assert!((next.u.integral() - m0).abs() <= 1e-10 * m0);
        let gain = d.mass_p_after - d.mass_p_before - d.tau * d.terms.power_integral;
        assert!(gain.abs() <= 1e-10 * d.mass_p_after);
        h = d.energy_after;
        state = next;
    }
    assert!(state.u.min() >= 0.0 && state.p.min() >= 0.0);
}

#[test]
fn evolve_lands_on_horizon() {
    let u = bump(16, 6.0, 1.0);
    let params = SchemeParams {
        tau: 4e-3,
        ..SchemeParams::default()
    };
    let opts = EvolveOptions {
        horizon: 0.01,
        snapshot_every: 0,
    };
    let (end, summary) = evolve(StepState::new(u.clone(), u, 0.0), &params, &opts, ()).unwrap();
    assert_eq!(summary.steps, 3);
    assert!((end.t - 0.01).abs() < 1e-15);
    assert!(summary.final_energy <= summary.initial_energy);
    assert!(summary.min_step_slack >= -params.slack_rel * summary.initial_energy);
}

#[test]
fn cubic_density_step_is_nonnegative() {
    let u = bump(16, 6.0, 2.0);
    let p = u.scale(0.3);
    let params = SchemeParams {
        beta: 3.0,
        delta_grad: 4e-8,
        ..SchemeParams::default()
    };
    let sol = density_step(&u, &p, &u, &params, None).unwrap();
    assert!(sol.residual <= params.inner_tol);
    assert!(sol.u.min() >= -1e-9 * sol.u.max_abs());
    let back = sol.w.map(|w| w.max(0.0).sqrt());
    assert!(back.sub(&sol.u).max_abs() < 1e-12);
}

#[test]
fn pressure_step_solves_its_equation() {
    let g = make_grid(32, 6.0).unwrap();
    let p = ScalarField::from_fn(&g, |x, y| (-(x * x + y * y)).exp());
    let src = ScalarField::from_fn(&g, |x, _| 1.0 + 0.5 * x.sin());
    let params = SchemeParams {
        tau: 0.05,
        rho2: 0.1,
        ..SchemeParams::default()
    };
    let next = pressure_step(&p, &src, &params).unwrap();
    assert!(pressure_residual(&next, &p, &src, &params).unwrap() < 1e-12);
}

#[test]
fn invalid_parameters_are_rejected() {
    let u = bump(8, 4.0, 1.0);
    let params = SchemeParams {
        s: 0.4,
        ..SchemeParams::default()
    };
    assert!(coupled_step(&StepState::new(u.clone(), u, 0.0), &params).is_err());
}

#[test]
fn linear_flow_slack_is_the_increment_energy() {
    let g = make_grid(32, 8.0).unwrap();
    let p = bump(32, 8.0, 1.0);
    let mut state = StepState::new(ScalarField::zeros(&g), p, 0.0);
    for tau in [4e-3, 2e-3, 1e-3] {
        let params = SchemeParams { tau, ..SchemeParams::default() };
        let (next, d) = coupled_step(&state, &params).unwrap();
        assert_eq!(next.u.max_abs(), 0.0);
        let expected = 0.5 * gradient_energy(&next.p.sub(&state.p));
        assert!(expected > 0.0);
        assert!((d.energy_slack - expected).abs() <= 1e-12 * d.energy_before, "{} vs {expected}", d.energy_slack);
        state = next;
    }
}
