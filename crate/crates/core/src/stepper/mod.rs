//! Regularized implicit time stepping.
//!
//! One step solves the coupled system for `(u_k, p_k)` given `(u_{k-1}, p_{k-1})`:
//! the pressure update is linear and solved exactly in Fourier space, the
//! density update is the minimizer of a strictly convex functional in
//! `w = u^{beta-1}`, and a damped Picard iteration couples the two through the
//! frozen density `z` in the mobility and in the source `z_+^beta`.

mod density;
mod evolve;
mod params;
mod pressure;

pub use density::{density_step, face_mobility, signed_pow, transport_term, DensitySolution};
pub use evolve::{evolve, EvolveError, EvolveOptions, EvolveSummary, Observer};
pub use params::SchemeParams;
pub use pressure::{pressure_residual, pressure_step};

use thiserror::Error;

use crate::energy::{self, EnergyError, WeightField};
use crate::lattice::{stencil, LatticeError, ScalarField};

#[derive(Debug, Error)]
pub enum StepError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("Picard iteration stalled after {iterations} iterations (increment {increment:e})")]
    PicardDiverged { iterations: usize, increment: f64 },
    #[error("density solver stalled after {iterations} iterations (residual {residual:e})")]
    InnerDiverged { residual: f64, iterations: usize },
    #[error("{field} is negative beyond tolerance: min {min:e} below -{tol:e}")]
    Negative { field: &'static str, min: f64, tol: f64 },
    #[error("energy slack {slack:e} below -{tol:e}")]
    EnergySlack { slack: f64, tol: f64 },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

impl StepError {
    /// Failures that a smaller time step may cure.
    pub fn is_convergence_failure(&self) -> bool {
        matches!(self, StepError::PicardDiverged { .. } | StepError::InnerDiverged { .. })
    }
}

/// State of the scheme at one time level.
#[derive(Clone, Debug)]
pub struct StepState {
    pub u: ScalarField,
    pub p: ScalarField,
    pub t: f64,
    /// Energy scale for the slack tolerance; typically `H` at `t = 0`.
    pub reference_energy: f64,
    w: Option<ScalarField>,
}

impl StepState {
    pub fn new(u: ScalarField, p: ScalarField, t: f64) -> Self {
        Self {
            u,
            p,
            t,
            reference_energy: 0.0,
            w: None,
        }
    }

    /// Last density-solver iterate, used to warm-start the next step.
    pub fn w(&self) -> Option<&ScalarField> {
        self.w.as_ref()
    }
}

/// Per-step dissipation integrals at `(u_k, p_k, w_k)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BudgetTerms {
    /// `int |(-Delta)^{s/2} D^+ p|^2`.
    pub dissipation: f64,
    /// `int (|grad w|^2 + delta^2)^{(q-2)/2} |grad w|^2` with the forward-difference gradient.
    pub rho1_term: f64,
    /// `int (w^2 + delta^2)^{(1/beta-1)/2} w^2 gamma`.
    pub eps_term: f64,
    /// `int (D^-D^+ p)^2`.
    pub rho2_term: f64,
    /// `int u^beta`.
    pub power_integral: f64,
    /// `int (w^2 + delta^2)^{(1/beta-1)/2} w gamma`, the absorbed mass rate over `eps`.
    pub eps_leak: f64,
    /// `int u (p_k - p_{k-1})/tau - u |D^+ p|^2`.
    pub divcurl: f64,
}

impl BudgetTerms {
    /// Rate `Q` on the right of the discrete energy inequality
    /// `H_{k-1} - H_k >= tau Q_k`.
    pub fn budget_rate(&self, beta: f64, eps: f64, rho1: f64, rho2: f64) -> f64 {
        self.dissipation + beta / (beta - 1.0) * (rho1 * self.rho1_term + eps * self.eps_term) + rho2 * self.rho2_term
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub tau: f64,
    pub time: f64,
    pub picard_iters: usize,
    pub inner_iters: usize,
    pub cg_iters: usize,
    pub picard_increment: f64,
    pub residual_u: f64,
    pub residual_p: f64,
    pub mass_u_before: f64,
    pub mass_u_after: f64,
    pub mass_p_before: f64,
    pub mass_p_after: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    /// `H_{k-1} - H_k - tau Q_k`, nonnegative for an exact step.
    pub energy_slack: f64,
    pub slack_tolerance: f64,
    pub min_u: f64,
    pub min_p: f64,
    pub boundary_indicator: f64,
    pub terms: BudgetTerms,
    pub beta_below_two: bool,
}

fn check_sign(field: &'static str, f: &ScalarField, tol_neg: f64) -> Result<f64, StepError> {
    let min = f.min();
    let tol = tol_neg * f.max_abs();
    if min < -tol {
        return Err(StepError::Negative { field, min, tol });
    }
    Ok(min)
}

/// Advances `state` by one step of size `params.tau`. Steps whose energy slack
/// falls below `-slack_rel * reference_energy` or whose fields turn negative
/// beyond `tol_neg` are rejected.
pub fn coupled_step(state: &StepState, params: &SchemeParams) -> Result<(StepState, StepDiagnostics), StepError> {
    params.validate()?;
    let (u_prev, p_prev) = (&state.u, &state.p);
    u_prev.ensure_same_grid(p_prev)?;
    let beta = params.beta;
    let before = energy::lyapunov_energy(u_prev, p_prev, beta, None)?;

    let source_of = |z: &ScalarField| z.map(|v| v.max(0.0).powf(beta));
    let mut z = u_prev.clone();
    let mut guess = match &state.w {
        Some(w) if w.grid() == u_prev.grid() => w.clone(),
        _ => u_prev.map(|v| signed_pow(v, beta - 1.0)),
    };
    let mut inner_iters = 0;
    let mut cg_iters = 0;
    let mut outcome = None;
    let mut increment = f64::INFINITY;
    for k in 1..=params.picard_max {
        let source = source_of(&z);
        let p = pressure_step(p_prev, &source, params)?;
        let sol = density_step(u_prev, &p, &z, params, Some(&guess))?;
        inner_iters += sol.newton_iters;
        cg_iters += sol.cg_iters;
        increment = sol.u.sub(&z).l2_norm();
        let scale = z.l2_norm().max(sol.u.l2_norm());
        let done = increment <= params.picard_tol * scale || scale == 0.0;
        let theta = params.theta;
        z = z.zip_map(&sol.u, |a, b| (1.0 - theta) * a + theta * b);
        guess = sol.w.clone();
        if done {
            outcome = Some((k, p, sol, source));
            break;
        }
    }
    let Some((picard_iters, p, sol, source)) = outcome else {
        return Err(StepError::PicardDiverged {
            iterations: params.picard_max,
            increment,
        });
    };
    let u = sol.u;
    let w = sol.w;
    let min_u = check_sign("u", &u, params.tol_neg)?;
    let min_p = check_sign("p", &p, params.tol_neg)?;

    let after = energy::lyapunov_energy(&u, &p, beta, Some(params.s))?;
    let terms = budget_terms(&u, &p, p_prev, &w, params)?;
    let q = terms.budget_rate(beta, params.eps, params.rho1, params.rho2);
    let residual_p = pressure_residual(&p, p_prev, &source, params)?;
    let reference = state.reference_energy.max(before.energy);
    let energy_slack = before.energy - after.energy - params.tau * q;
    let slack_tolerance = params.slack_rel * reference;
    if energy_slack < -slack_tolerance {
        return Err(StepError::EnergySlack {
            slack: energy_slack,
            tol: slack_tolerance,
        });
    }

    let diag = StepDiagnostics {
        tau: params.tau,
        time: state.t + params.tau,
        picard_iters,
        inner_iters,
        cg_iters,
        picard_increment: increment,
        residual_u: sol.residual,
        residual_p,
        mass_u_before: before.mass_u,
        mass_u_after: after.mass_u,
        mass_p_before: before.mass_p,
        mass_p_after: after.mass_p,
        energy_before: before.energy,
        energy_after: after.energy,
        energy_slack,
        slack_tolerance,
        min_u,
        min_p,
        boundary_indicator: u.boundary_indicator().max(p.boundary_indicator()),
        terms,
        beta_below_two: params.beta_below_two(),
    };
    let next = StepState {
        u,
        p,
        t: state.t + params.tau,
        reference_energy: state.reference_energy,
        w: Some(w),
    };
    Ok((next, diag))
}

fn budget_terms(
    u: &ScalarField,
    p: &ScalarField,
    p_prev: &ScalarField,
    w: &ScalarField,
    params: &SchemeParams,
) -> Result<BudgetTerms, StepError> {
    let beta = params.beta;
    let d2 = params.delta_grad * params.delta_grad;
    let half = (1.0 / beta - 1.0) / 2.0;
    let gamma = WeightField::new(u.grid());
    let (wx, wy) = stencil::forward_gradient(w);
    let rho1_term = wx
        .zip_map(&wy, |a, b| {
            let g2 = a * a + b * b;
            (g2 + d2).powf(half) * g2
        })
        .integral();
    let mw = w.map(|v| (v * v + d2).powf(half) * v);
    let eps_term = mw.zip_map(w, |m, v| m * v).dot(gamma.field());
    let eps_leak = mw.dot(gamma.field());
    let (px, py) = stencil::forward_gradient(p);
    let grad2 = px.zip_map(&py, |a, b| a * a + b * b);
    let rate = p.sub(p_prev).scale(1.0 / params.tau);
    Ok(BudgetTerms {
        dissipation: energy::dissipation(p, params.s)?,
        rho1_term,
        eps_term,
        rho2_term: energy::laplacian_energy(p),
        power_integral: energy::power_integral(u, beta)?,
        eps_leak,
        divcurl: u.dot(&rate.sub(&grad2)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;

    fn gaussian(g: &crate::Grid, amp: f64, width: f64) -> ScalarField {
        ScalarField::from_fn(g, |x, y| amp * (-(x * x + y * y) / (2.0 * width * width)).exp())
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = make_grid(16, 4.0).unwrap();
        let z = ScalarField::zeros(&g);
        let state = StepState::new(z.clone(), z.clone(), 0.0);
        let (next, diag) = coupled_step(&state, &SchemeParams::default()).unwrap();
        assert_eq!(next.u.max_abs(), 0.0);
        assert_eq!(next.p.max_abs(), 0.0);
        assert_eq!(diag.energy_slack, 0.0);
        assert_eq!(diag.picard_iters, 1);
    }

    #[test]
    fn step_budgets_hold() {
        let g = make_grid(32, 8.0).unwrap();
        let u = gaussian(&g, 1.0, 1.5);
        let p = gaussian(&g, 0.5, 1.5);
        let params = SchemeParams {
            eps: 0.0,
            ..SchemeParams::default()
        };
        let mut state = StepState::new(u, p, 0.0);
        for _ in 0..3 {
            let (next, diag) = coupled_step(&state, &params).unwrap();
            let mass = (diag.mass_u_after - diag.mass_u_before).abs() / diag.mass_u_before;
            assert!(mass < 1e-10, "{mass}");
            assert!(diag.energy_slack >= -1e-10 * diag.energy_before, "{diag:?}");
            assert!(diag.residual_p < 1e-10);
            assert!(
                diag.min_u >= -1e-9 && diag.min_p >= -1e-9,
                "{} {}",
                diag.min_u,
                diag.min_p
            );
            state = next;
        }
        assert!((state.t - 3e-3).abs() < 1e-15);
    }
}
