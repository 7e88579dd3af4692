use super::{BudgetSeries, CheckReport};

/// Agreement required between a recorded slack and its recomputation.
const RECOMPUTE_REL: f64 = 1e-12;

/// Per-step identity tolerance of the pressure mass law.
pub const PRESSURE_MASS_REL: f64 = 1e-10;

/// Checks `H_{k-1} - H_k - tau_k Q_k >= -tol` for every step and the
/// accumulated form `H_k + sum_{j<=k} tau_j Q_j <= H_0 + tol` for every `k`,
/// with `tol = slack_rel * H_0`. Each slack is recomputed from the energy and
/// budget columns and must match the recorded one.
///
/// The reported statistic is the smallest per-step slack.
pub fn check_energy_budget(series: &BudgetSeries) -> CheckReport {
    let h0 = series.initial.energy;
    let tol = series.params.slack_rel * h0.abs();
    let tiny = RECOMPUTE_REL * h0.abs();
    let mut prev = h0;
    let mut spent = 0.0;
    let mut sum_slack = 0.0;
    let mut worst = if series.rows.is_empty() { 0.0 } else { f64::INFINITY };
    let mut failure: Option<(usize, String)> = None;
    for r in &series.rows {
        let cost = r.tau * series.budget_rate(r);
        let slack = prev - r.energy - cost;
        spent += cost;
        sum_slack += slack;
        worst = worst.min(slack);
        let global = h0 - r.energy - spent;
        let problem = if !slack.is_finite() {
            Some(format!("non-finite slack at t = {}", r.time))
        } else if (slack - r.energy_slack).abs() > tiny {
            Some(format!(
                "recorded slack {:e} disagrees with recomputed {slack:e}",
                r.energy_slack
            ))
        } else if slack < -tol {
            Some(format!("slack {slack:e} below -{tol:e}"))
        } else if global < -tol {
            Some(format!("accumulated slack {global:e} below -{tol:e}"))
        } else {
            None
        };
        if failure.is_none() {
            failure = problem.map(|m| (r.step, m));
        }
        prev = r.energy;
    }
    let global = series.rows.last().map_or(0.0, |r| h0 - r.energy - spent);
    let roundoff = RECOMPUTE_REL * (h0.abs() + spent.abs()) * series.rows.len() as f64;
    if failure.is_none() && (global - sum_slack).abs() > roundoff {
        failure = Some((
            series.rows.len(),
            format!("global slack {global:e} differs from the step sum {sum_slack:e}"),
        ));
    }
    let detail = format!("H0 = {h0:e}, global slack = {global:e}, tolerance = {tol:e}");
    CheckReport::from_failure("check_energy_budget", "min_step_slack", worst, detail, failure)
}

/// Checks `|int u_k - int u_0 + eps sum tau_j leak_j| <= rel_tol int u_0` at
/// every step. With `eps = 0` this is plain conservation.
pub fn check_density_mass(series: &BudgetSeries, rel_tol: f64) -> CheckReport {
    let m0 = series.initial.mass_u;
    let tol = rel_tol * m0.abs();
    let leak = series.cumulative_leak();
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for (r, l) in series.rows.iter().zip(leak) {
        let err = (r.mass_u - m0 + l).abs();
        worst = worst.max(err);
        if failure.is_none() && !(err <= tol) {
            failure = Some((r.step, format!("mass defect {err:e} above {tol:e}")));
        }
    }
    let detail = format!("mass_u(0) = {m0:e}, eps = {}", series.params.eps);
    CheckReport::from_failure(
        "check_density_mass",
        "max_mass_defect",
        worst / m0.abs().max(f64::MIN_POSITIVE),
        detail,
        failure,
    )
}

/// Checks the per-step identity `int p_k - int p_{k-1} = tau_k int u_k^beta`
/// to `1e-10` of the step's scale, and the bound `int p(t) <= int p_in + C t`
/// with `C = sup_k int u_k^beta`.
///
/// The reported statistic is the largest relative identity residual.
pub fn check_pressure_mass(series: &BudgetSeries) -> CheckReport {
    let first = &series.initial;
    let c = series
        .rows
        .iter()
        .map(|r| r.terms.power_integral)
        .fold(first.terms.power_integral, f64::max);
    let mut prev = first.mass_p;
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for r in &series.rows {
        let gain = r.tau * r.terms.power_integral;
        let residual = (r.mass_p - prev - gain).abs();
        let scale = prev.abs().max(r.mass_p.abs()).max(gain);
        let rel = if scale > 0.0 { residual / scale } else { residual };
        worst = worst.max(rel);
        let bound = first.mass_p + c * (r.time - first.time);
        let problem = if !(rel <= PRESSURE_MASS_REL) {
            Some(format!("identity residual {rel:e} above {PRESSURE_MASS_REL:e}"))
        } else if r.mass_p > bound + PRESSURE_MASS_REL * scale {
            Some(format!("mass {:e} exceeds linear bound {bound:e}", r.mass_p))
        } else {
            None
        };
        if failure.is_none() {
            failure = problem.map(|m| (r.step, m));
        }
        prev = r.mass_p;
    }
    let detail = format!("C = sup int u^beta = {c:e}, int p_in = {:e}", first.mass_p);
    CheckReport::from_failure("check_pressure_mass", "max_identity_residual", worst, detail, failure)
}

#[cfg(test)]
mod tests {
    use super::super::{BudgetParams, SeriesRow};
    use super::*;
    use crate::stepper::BudgetTerms;

    fn params() -> BudgetParams {
        BudgetParams {
            beta: 2.0,
            s: 0.75,
            eps: 0.0,
            rho1: 0.0,
            rho2: 0.0,
            slack_rel: 1e-8,
        }
    }

    fn decaying(steps: usize) -> BudgetSeries {
        let initial = SeriesRow {
            energy: 1.0,
            mass_p: 2.0,
            ..SeriesRow::default()
        };
        let mut s = BudgetSeries::new(params(), initial);
        let mut h = 1.0;
        for k in 1..=steps {
            let d = 0.5;
            let next = h - 0.1 * d;
            s.rows.push(SeriesRow {
                step: k,
                time: 0.1 * k as f64,
                tau: 0.1,
                energy: next,
                energy_slack: h - next - 0.1 * d,
                mass_p: 2.0,
                terms: BudgetTerms {
                    dissipation: d,
                    ..BudgetTerms::default()
                },
                ..SeriesRow::default()
            });
            h = next;
        }
        s
    }

    #[test]
    fn zero_series_has_zero_slack() {
        let mut s = BudgetSeries::new(params(), SeriesRow::default());
        s.rows.push(SeriesRow {
            step: 1,
            time: 1.0,
            tau: 1.0,
            ..SeriesRow::default()
        });
        let r = check_energy_budget(&s);
        assert!(r.passed);
        assert_eq!(r.worst, 0.0);
        assert!(check_pressure_mass(&s).passed);
    }

    #[test]
    fn tampered_energy_names_the_step() {
        let mut s = decaying(5);
        assert!(check_energy_budget(&s).passed);
        s.rows[2].energy += 1e-6;
        let r = check_energy_budget(&s);
        assert!(!r.passed);
        assert_eq!(r.failing_step, Some(3));
    }

    #[test]
    fn pressure_gain_matches_source() {
        let mut s = decaying(2);
        s.rows[0].terms.power_integral = 3.0;
        s.rows[0].mass_p = 2.0 + 0.1 * 3.0;
        s.rows[1].mass_p = s.rows[0].mass_p;
        let r = check_pressure_mass(&s);
        assert!(r.passed, "{r:?}");
        s.rows[1].mass_p += 1e-6;
        assert!(!check_pressure_mass(&s).passed);
    }
}
