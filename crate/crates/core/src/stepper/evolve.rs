use std::io;

use thiserror::Error;

use super::{coupled_step, SchemeParams, StepDiagnostics, StepError, StepState};
use crate::energy::{self, EnergyReport};

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveOptions {
    pub horizon: f64,
    /// Snapshot cadence in steps; `0` keeps only the first and last.
    pub snapshot_every: usize,
}

/// Receives the trajectory as it is produced.
pub trait Observer {
    fn on_start(&mut self, _state: &StepState, _energy: &EnergyReport) -> io::Result<()> {
        Ok(())
    }

    fn on_step(&mut self, step: usize, state: &StepState, diag: &StepDiagnostics) -> io::Result<()>;

    fn on_snapshot(&mut self, _step: usize, _state: &StepState) -> io::Result<()> {
        Ok(())
    }

    fn on_abort(&mut self, _step: usize, _error: &StepError) {}

    fn on_finish(&mut self, _summary: &EvolveSummary) -> io::Result<()> {
        Ok(())
    }
}

impl Observer for () {
    fn on_step(&mut self, _: usize, _: &StepState, _: &StepDiagnostics) -> io::Result<()> {
        Ok(())
    }
}

impl<O: Observer + ?Sized> Observer for &mut O {
    fn on_start(&mut self, state: &StepState, energy: &EnergyReport) -> io::Result<()> {
        (**self).on_start(state, energy)
    }
    fn on_step(&mut self, step: usize, state: &StepState, diag: &StepDiagnostics) -> io::Result<()> {
        (**self).on_step(step, state, diag)
    }
    fn on_snapshot(&mut self, step: usize, state: &StepState) -> io::Result<()> {
        (**self).on_snapshot(step, state)
    }
    fn on_abort(&mut self, step: usize, error: &StepError) {
        (**self).on_abort(step, error)
    }
    fn on_finish(&mut self, summary: &EvolveSummary) -> io::Result<()> {
        (**self).on_finish(summary)
    }
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn on_start(&mut self, state: &StepState, energy: &EnergyReport) -> io::Result<()> {
        self.0.on_start(state, energy)?;
        self.1.on_start(state, energy)
    }
    fn on_step(&mut self, step: usize, state: &StepState, diag: &StepDiagnostics) -> io::Result<()> {
        self.0.on_step(step, state, diag)?;
        self.1.on_step(step, state, diag)
    }
    fn on_snapshot(&mut self, step: usize, state: &StepState) -> io::Result<()> {
        self.0.on_snapshot(step, state)?;
        self.1.on_snapshot(step, state)
    }
    fn on_abort(&mut self, step: usize, error: &StepError) {
        self.0.on_abort(step, error);
        self.1.on_abort(step, error);
    }
    fn on_finish(&mut self, summary: &EvolveSummary) -> io::Result<()> {
        self.0.on_finish(summary)?;
        self.1.on_finish(summary)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvolveSummary {
    pub steps: usize,
    pub final_time: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// `sum tau_k Q_k`.
    pub cumulative_budget: f64,
    /// `sum` of the per-step slacks, equal to `H_0 - H_K - sum tau_k Q_k`.
    pub cumulative_slack: f64,
    pub min_step_slack: f64,
    pub tau_halvings: usize,
    pub max_picard_iters: usize,
    pub beta_below_two: bool,
}

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("step {step} from t = {time} failed: {source}")]
    Step {
        step: usize,
        time: f64,
        #[source]
        source: StepError,
    },
    #[error(transparent)]
    Invalid(StepError),
    #[error("observer failed: {0}")]
    Io(#[from] io::Error),
}

/// Runs the scheme from `initial` up to `options.horizon`.
///
/// With `retry_halve_tau`, a step whose Picard or density iteration fails is
/// retried with half the time step down to `tau_floor`; the reduced step is
/// kept for the rest of the run. The last step is shortened to land on the
/// horizon.
pub fn evolve<O: Observer>(
    initial: StepState,
    params: &SchemeParams,
    options: &EvolveOptions,
    mut observer: O,
) -> Result<(StepState, EvolveSummary), EvolveError> {
    params.validate().map_err(EvolveError::Invalid)?;
    if !(options.horizon >= 0.0 && options.horizon.is_finite()) {
        return Err(EvolveError::Invalid(StepError::InvalidParams(format!(
            "horizon must be nonnegative, got {}",
            options.horizon
        ))));
    }
    let e0 = energy::lyapunov_energy(&initial.u, &initial.p, params.beta, Some(params.s))
        .map_err(|e| EvolveError::Invalid(e.into()))?;
    let mut state = initial;
    if state.reference_energy == 0.0 {
        state.reference_energy = e0.energy;
    }
    observer.on_start(&state, &e0)?;
    observer.on_snapshot(0, &state)?;

    let mut summary = EvolveSummary {
        final_time: state.t,
        initial_energy: e0.energy,
        final_energy: e0.energy,
        min_step_slack: f64::INFINITY,
        beta_below_two: params.beta_below_two(),
        ..EvolveSummary::default()
    };
    let end = state.t + options.horizon;
    let mut tau = params.tau;
    let mut step = 0;
    let mut last_snapshot = 0;
    while end - state.t > 1e-9 * tau {
        step += 1;
        let mut local = params.clone();
        let (next, diag) = loop {
            local.tau = tau.min(end - state.t);
            match coupled_step(&state, &local) {
                Ok(out) => break out,
                Err(e) if params.retry_halve_tau && e.is_convergence_failure() && tau / 2.0 >= params.tau_floor => {
                    tau /= 2.0;
                    summary.tau_halvings += 1;
                }
                Err(source) => {
                    observer.on_abort(step, &source);
                    return Err(EvolveError::Step {
                        step,
                        time: state.t,
                        source,
                    });
                }
            }
        };
        state = next;
        summary.steps = step;
        summary.final_time = state.t;
        summary.final_energy = diag.energy_after;
        summary.cumulative_budget += diag.tau
            * diag
                .terms
                .budget_rate(params.beta, params.eps, params.rho1, params.rho2);
        summary.cumulative_slack += diag.energy_slack;
        summary.min_step_slack = summary.min_step_slack.min(diag.energy_slack);
        summary.max_picard_iters = summary.max_picard_iters.max(diag.picard_iters);
        observer.on_step(step, &state, &diag)?;
        if options.snapshot_every > 0 && step % options.snapshot_every == 0 {
            observer.on_snapshot(step, &state)?;
            last_snapshot = step;
        }
    }
    if last_snapshot != step {
        observer.on_snapshot(step, &state)?;
    }
    observer.on_finish(&summary)?;
    Ok((state, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_grid, ScalarField};

    #[derive(Default)]
    struct Count {
        steps: Vec<usize>,
        snaps: Vec<usize>,
    }

    impl Observer for Count {
        fn on_step(&mut self, step: usize, _: &StepState, _: &StepDiagnostics) -> io::Result<()> {
            self.steps.push(step);
            Ok(())
        }
        fn on_snapshot(&mut self, step: usize, _: &StepState) -> io::Result<()> {
            self.snaps.push(step);
            Ok(())
        }
    }

    #[test]
    fn cadence_and_horizon() {
        let g = make_grid(16, 6.0).unwrap();
        let u = ScalarField::from_fn(&g, |x, y| (-(x * x + y * y) / 4.0).exp());
        let p = u.scale(0.5);
        let params = SchemeParams {
            tau: 0.01,
            ..SchemeParams::default()
        };
        let mut count = Count::default();
        let opts = EvolveOptions {
            horizon: 0.075,
            snapshot_every: 3,
        };
        let (end, summary) = evolve(StepState::new(u, p, 0.0), &params, &opts, &mut count).unwrap();
        assert_eq!(summary.steps, 8);
        assert!((end.t - 0.075).abs() < 1e-14);
        assert_eq!(count.steps, (1..=8).collect::<Vec<_>>());
        assert_eq!(count.snaps, vec![0, 3, 6, 8]);
        let drop = summary.initial_energy - summary.final_energy;
        assert!((drop - summary.cumulative_budget - summary.cumulative_slack).abs() < 1e-12 * summary.initial_energy);
    }
}
