//! Checks of the recorded budgets and monitors of the solution norms.
//!
//! Every check is a pure function of a [`BudgetSeries`] and/or a
//! [`Trajectory`], both of which round-trip bit-identically through the CSV
//! and snapshot files written by a run.

mod budget;
mod norms;
mod series;
mod trajectory;

pub use budget::{check_density_mass, check_energy_budget, check_pressure_mass, PRESSURE_MASS_REL};
pub use norms::{
    battery, check_theorem_norms, divcurl_monitor, dual_norm_surrogate, DualNormReport, NormReport, TestFunction,
};
pub use series::{BudgetParams, BudgetSeries, SeriesError, SeriesRecorder, SeriesRow, SERIES_COLUMNS, TERMS_COLUMNS};
pub use trajectory::{frame_paths, write_frame, Frame, Trajectory, TrajectoryRecorder};

use std::path::Path;

/// Default relative tolerance of [`check_density_mass`].
pub const DENSITY_MASS_REL: f64 = 1e-10;

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    /// Name of the statistic in `worst`.
    pub statistic: String,
    pub worst: f64,
    pub failing_step: Option<usize>,
    pub detail: String,
}

impl CheckReport {
    pub fn from_failure(
        name: &str,
        statistic: &str,
        worst: f64,
        detail: String,
        failure: Option<(usize, String)>,
    ) -> Self {
        let (failing_step, detail) = match failure {
            Some((step, why)) => (Some(step), format!("step {step}: {why}; {detail}")),
            None => (None, detail),
        };
        Self {
            name: name.to_string(),
            passed: failing_step.is_none(),
            statistic: statistic.to_string(),
            worst,
            failing_step,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} {}={:e}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.statistic,
            self.worst
        )
    }
}

/// Sign check on the recorded minima against the largest snapshot magnitude.
pub fn check_nonnegativity(series: &BudgetSeries, traj: &Trajectory, tol_neg: f64) -> CheckReport {
    let su = traj.frames.iter().map(|f| f.u.max_abs()).fold(0.0, f64::max);
    let sp = traj.frames.iter().map(|f| f.p.max_abs()).fold(0.0, f64::max);
    let mut worst = f64::INFINITY;
    let mut failure = None;
    for r in std::iter::once(&series.initial).chain(&series.rows) {
        let ru = if su > 0.0 { r.min_u / su } else { r.min_u };
        let rp = if sp > 0.0 { r.min_p / sp } else { r.min_p };
        worst = worst.min(ru).min(rp);
        if failure.is_none() && !(ru >= -tol_neg && rp >= -tol_neg) {
            failure = Some((r.step, format!("relative minima u {ru:e}, p {rp:e}")));
        }
    }
    CheckReport::from_failure(
        "check_nonnegativity",
        "min_relative",
        worst,
        format!("scale u {su:e}, p {sp:e}"),
        failure,
    )
}

/// All checks on one run.
pub fn run_checks(series: &BudgetSeries, traj: &Trajectory, tol_neg: f64) -> Vec<CheckReport> {
    let p = series.params;
    let mut out = vec![
        check_energy_budget(series),
        check_pressure_mass(series),
        check_density_mass(series, DENSITY_MASS_REL),
        check_nonnegativity(series, traj, tol_neg),
    ];
    out.push(match check_theorem_norms(traj, p.beta, p.s) {
        Ok(n) => n.to_check(),
        Err(e) => CheckReport::from_failure(
            "check_theorem_norms",
            "u_lbeta1",
            f64::NAN,
            String::new(),
            Some((0, e.to_string())),
        ),
    });
    let dc = divcurl_monitor(traj);
    let worst = dc.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
    let bad = dc
        .iter()
        .find(|r| !r.1.is_finite())
        .map(|r| (0, format!("non-finite at t = {}", r.0)));
    out.push(CheckReport::from_failure(
        "divcurl_monitor",
        "max_abs",
        worst,
        format!("{} intervals", dc.len()),
        bad,
    ));
    out.push(match dual_norm_surrogate(traj, p.beta, p.s) {
        Ok(d) => {
            let bad = (!(d.l2_u.is_finite() && d.l2_p.is_finite())).then(|| (0, "non-finite pairing".to_string()));
            CheckReport::from_failure(
                "dual_norm_surrogate",
                "l2_u",
                d.l2_u,
                format!("sup_u = {:e}, sup_p = {:e}, l2_p = {:e}", d.sup_u, d.sup_p, d.l2_p),
                bad,
            )
        }
        Err(e) => CheckReport::from_failure(
            "dual_norm_surrogate",
            "l2_u",
            f64::NAN,
            String::new(),
            Some((0, e.to_string())),
        ),
    });
    out
}

/// Writes the checks as a TOML table keyed by check name.
pub fn write_report(path: &Path, checks: &[CheckReport]) -> std::io::Result<()> {
    std::fs::write(path, report_toml(checks))
}

pub fn report_toml(checks: &[CheckReport]) -> String {
    let mut root = toml::Table::new();
    root.insert("passed".into(), checks.iter().all(|c| c.passed).into());
    for c in checks {
        let mut t = toml::Table::new();
        t.insert("status".into(), (if c.passed { "pass" } else { "fail" }).into());
        t.insert("statistic".into(), c.statistic.clone().into());
        t.insert("worst".into(), toml_float(c.worst));
        if let Some(step) = c.failing_step {
            t.insert("failing_step".into(), (step as i64).into());
        }
        t.insert("detail".into(), c.detail.clone().into());
        root.insert(c.name.clone(), t.into());
    }
    toml::to_string(&root).expect("report tables serialize")
}

fn toml_float(v: f64) -> toml::Value {
    if v.is_finite() {
        v.into()
    } else {
        v.to_string().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trips_through_toml() {
        let checks = vec![
            CheckReport::from_failure("a", "x", 1.5, "ok".into(), None),
            CheckReport::from_failure("b", "y", f64::NAN, "bad".into(), Some((3, "broke".into()))),
        ];
        let text = report_toml(&checks);
        let t: toml::Table = text.parse().unwrap();
        assert_eq!(t["passed"].as_bool(), Some(false));
        assert_eq!(t["a"]["status"].as_str(), Some("pass"));
        assert_eq!(t["b"]["failing_step"].as_integer(), Some(3));
        assert!(checks[1].line().starts_with("b FAIL"));
    }
}
