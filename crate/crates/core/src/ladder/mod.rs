//! Parameter sweeps over the regularizations, taken in the order
//! `eps -> tau -> rho2 -> rho1`, with interior Cauchy metrics between
//! consecutive rungs.
//!
//! Pass rule (a harness policy, not a rate claim): every rung completes and
//! consecutive Cauchy differences satisfy `d_{i+1} <= 1.1 d_i` for both `u`
//! and `p` over at least three rungs.

mod probes;

pub use probes::{gdelta_probe, truncate, truncation_probe, GdeltaTable, TruncationRow, TruncationTable};

use std::fmt::{self, Write as _};
use std::path::Path;

use thiserror::Error;

use crate::diagnostics::{
    check_energy_budget, check_theorem_norms, divcurl_monitor, dual_norm_surrogate, NormReport, SeriesRecorder,
    Trajectory, TrajectoryRecorder,
};
use crate::exec;
use crate::lattice::{least_squares_slope, spectral, LatticeError, ScalarField};
use crate::stepper::{evolve, EvolveOptions, SchemeParams, StepState};

/// Band for the monotone-decrease test.
pub const BAND: f64 = 1.1;

/// Largest admissible no-growth slope of a norm against `1/value`.
pub const GROWTH_SLOPE_MAX: f64 = 0.05;

/// Relative size below which the `delta_grad` sweep counts as insensitive.
pub const INSENSITIVE_REL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LadderError {
    #[error("invalid ladder: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LadderParam {
    Eps,
    Tau,
    Rho2,
    Rho1,
    /// Mollifier sanity sweep; outside the limit order.
    DeltaGrad,
}

impl LadderParam {
    pub const ORDER: [LadderParam; 4] = [LadderParam::Eps, LadderParam::Tau, LadderParam::Rho2, LadderParam::Rho1];

    pub fn name(self) -> &'static str {
        match self {
            LadderParam::Eps => "eps",
            LadderParam::Tau => "tau",
            LadderParam::Rho2 => "rho2",
            LadderParam::Rho1 => "rho1",
            LadderParam::DeltaGrad => "delta_grad",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Eps, Self::Tau, Self::Rho2, Self::Rho1, Self::DeltaGrad]
            .into_iter()
            .find(|p| p.name() == s)
    }

    pub fn get(self, p: &SchemeParams) -> f64 {
        match self {
            LadderParam::Eps => p.eps,
            LadderParam::Tau => p.tau,
            LadderParam::Rho2 => p.rho2,
            LadderParam::Rho1 => p.rho1,
            LadderParam::DeltaGrad => p.delta_grad,
        }
    }

    pub fn set(self, p: &mut SchemeParams, v: f64) {
        match self {
            LadderParam::Eps => p.eps = v,
            LadderParam::Tau => p.tau = v,
            LadderParam::Rho2 => p.rho2 = v,
            LadderParam::Rho1 => p.rho1 = v,
            LadderParam::DeltaGrad => p.delta_grad = v,
        }
    }
}

impl fmt::Display for LadderParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Values at which an earlier limit counts as taken. Sweeping a parameter
/// requires every earlier one in [`LadderParam::ORDER`] to be at or below its
/// terminal value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TerminalValues {
    pub eps: f64,
    pub tau: f64,
    pub rho2: f64,
}

impl Default for TerminalValues {
    fn default() -> Self {
        Self {
            eps: 0.0,
            tau: 1e-3,
            rho2: 1e-3,
        }
    }
}

/// Exact solution compared against each rung.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reference {
    None,
    /// `u = 0`: each pressure mode decays as `exp(-(|k|^{2s} + rho2 lambda_h(k)) t)`.
    LinearFlow,
}

#[derive(Clone, Debug)]
pub struct LadderSpec {
    pub base: SchemeParams,
    pub param: LadderParam,
    pub start: f64,
    pub ratio: f64,
    pub count: usize,
    pub horizon: f64,
    pub u0: ScalarField,
    pub p0: ScalarField,
    /// Half-side of the comparison box as a fraction of `L`.
    pub box_fraction: f64,
    pub terminal: TerminalValues,
    pub reference: Reference,
    pub jobs: usize,
}

impl LadderSpec {
    /// Default sweep: ratio 1/2, 4 rungs, box at 90% of the domain.
    pub fn new(base: SchemeParams, param: LadderParam, horizon: f64, u0: ScalarField, p0: ScalarField) -> Self {
        Self {
            start: param.get(&base),
            base,
            param,
            ratio: 0.5,
            count: 4,
            horizon,
            u0,
            p0,
            box_fraction: 0.9,
            terminal: TerminalValues::default(),
            reference: Reference::None,
            jobs: 1,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count)
            .map(|i| self.start * self.ratio.powi(i as i32))
            .collect()
    }

    /// Coarsest step among the rungs; frames are compared on its multiples.
    pub fn coarse_step(&self) -> f64 {
        match self.param {
            LadderParam::Tau => self.start,
            _ => self.base.tau,
        }
    }

    pub fn validate(&self) -> Result<(), LadderError> {
        let bad = |m: String| Err(LadderError::Invalid(m));
        if !(self.start > 0.0 && self.start.is_finite()) {
            return bad(format!("start value must be positive, got {}", self.start));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return bad(format!("ratio must lie in (0, 1), got {}", self.ratio));
        }
        if self.count < 3 {
            return bad(format!("need at least 3 rungs, got {}", self.count));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.box_fraction > 0.0 && self.box_fraction <= 1.0) {
            return bad(format!("box fraction must lie in (0, 1], got {}", self.box_fraction));
        }
        self.u0.ensure_same_grid(&self.p0)?;
        if let Some(pos) = LadderParam::ORDER.iter().position(|&p| p == self.param) {
            let t = &self.terminal;
            let limits = [
                (LadderParam::Eps, t.eps),
                (LadderParam::Tau, t.tau),
                (LadderParam::Rho2, t.rho2),
            ];
            for &(earlier, limit) in &limits[..pos] {
                let v = earlier.get(&self.base);
                if v > limit {
                    return bad(format!(
                        "sweeping {} needs {earlier} at its terminal value {limit}, got {v}",
                        self.param
                    ));
                }
            }
        }
        if self.param == LadderParam::Tau {
            for (i, v) in self.values().iter().enumerate() {
                let m = self.start / v;
                if (m - m.round()).abs() > 1e-9 * m {
                    return bad(format!(
                        "rung {i}: tau = {v} does not divide the coarse step {}",
                        self.start
                    ));
                }
            }
        }
        if self.reference == Reference::LinearFlow && self.u0.max_abs() != 0.0 {
            return bad("the linear-flow reference needs u0 = 0".into());
        }
        for v in self.values() {
            let mut p = self.base.clone();
            self.param.set(&mut p, v);
            p.validate().map_err(|e| LadderError::Invalid(e.to_string()))?;
        }
        Ok(())
    }
}

/// Outcome of one rung.
#[derive(Clone, Debug)]
pub struct Rung {
    pub value: f64,
    pub steps: usize,
    pub error: Option<String>,
    pub budget_passed: bool,
    pub norms: Option<NormReport>,
    pub dual_l2_u: f64,
    pub dual_l2_p: f64,
    /// Divergence-curl product per coarse interval.
    pub divcurl: Vec<(f64, f64)>,
    pub reference_error: Option<f64>,
    trajectory: Trajectory,
}

impl Rung {
    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }
}

#[derive(Clone, Debug)]
pub struct LadderReport {
    pub param: LadderParam,
    pub values: Vec<f64>,
    pub rungs: Vec<Rung>,
    /// `||u_i - u_{i+1}||_{L^2(Q_R)}` for consecutive rungs.
    pub cauchy_u: Vec<f64>,
    pub cauchy_p: Vec<f64>,
    /// `log(d_i / d_{i+1}) / log(1/ratio)`.
    pub orders_u: Vec<f64>,
    pub orders_p: Vec<f64>,
    /// Largest difference of consecutive divergence-curl series.
    pub cauchy_divcurl: Vec<f64>,
    pub reference_orders: Vec<f64>,
    /// Growth of `||u||_{L^{beta+1}}` and `sup H` as the swept value decreases.
    pub growth_u_lbeta1: f64,
    pub growth_energy: f64,
    pub passed: bool,
    pub failure: Option<String>,
}

impl LadderReport {
    pub fn norm_uniform(&self) -> bool {
        self.growth_u_lbeta1 <= GROWTH_SLOPE_MAX && self.growth_energy <= GROWTH_SLOPE_MAX
    }

    pub fn reference_order_in(&self, lo: f64, hi: f64) -> bool {
        !self.reference_orders.is_empty() && self.reference_orders.iter().all(|o| (lo..=hi).contains(o))
    }

    pub fn write_csv(&self, dir: &Path) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(dir.join(format!("ladder_{}_pairs.csv", self.param)))?;
        w.write_record([
            "pair",
            "value_a",
            "value_b",
            "cauchy_u",
            "cauchy_p",
            "order_u",
            "order_p",
            "cauchy_divcurl",
        ])?;
        for i in 0..self.cauchy_u.len() {
            let order = |o: &[f64]| {
                i.checked_sub(1)
                    .and_then(|j| o.get(j))
                    .map_or(String::new(), |v| v.to_string())
            };
            w.write_record([
                i.to_string(),
                self.values[i].to_string(),
                self.values[i + 1].to_string(),
                self.cauchy_u[i].to_string(),
                self.cauchy_p[i].to_string(),
                order(&self.orders_u),
                order(&self.orders_p),
                self.cauchy_divcurl.get(i).map_or(String::new(), |v| v.to_string()),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join(format!("ladder_{}_rungs.csv", self.param)))?;
        w.write_record([
            "value",
            "steps",
            "status",
            "budget",
            "u_lbeta1",
            "sup_energy",
            "sup_u_l1",
            "p_l2_hs1",
            "dual_l2_u",
            "dual_l2_p",
            "reference_error",
        ])?;
        for r in &self.rungs {
            let n = r.norms.unwrap_or_default();
            w.write_record([
                r.value.to_string(),
                r.steps.to_string(),
                r.error.clone().unwrap_or_else(|| "ok".into()),
                if r.budget_passed { "pass" } else { "fail" }.into(),
                n.u_lbeta1.to_string(),
                n.sup_energy.to_string(),
                n.sup_u_l1.to_string(),
                n.p_l2_hs1.to_string(),
                r.dual_l2_u.to_string(),
                r.dual_l2_p.to_string(),
                r.reference_error.map_or(String::new(), |v| v.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "ladder {}: {}",
            self.param,
            if self.passed { "PASS" } else { "FAIL" }
        );
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "  reason: {f}");
        }
        let _ = writeln!(s, "  values: {}", fmt_list(&self.values));
        let _ = writeln!(s, "  cauchy u: {}", fmt_list(&self.cauchy_u));
        let _ = writeln!(s, "  cauchy p: {}", fmt_list(&self.cauchy_p));
        let _ = writeln!(s, "  order u: {}", fmt_list(&self.orders_u));
        let _ = writeln!(s, "  order p: {}", fmt_list(&self.orders_p));
        let _ = writeln!(s, "  cauchy divcurl: {}", fmt_list(&self.cauchy_divcurl));
        if !self.reference_orders.is_empty() {
            let errs: Vec<f64> = self.rungs.iter().filter_map(|r| r.reference_error).collect();
            let _ = writeln!(s, "  reference error: {}", fmt_list(&errs));
            let _ = writeln!(s, "  reference order: {}", fmt_list(&self.reference_orders));
        }
        let _ = writeln!(
            s,
            "  growth slope: u_lbeta1 {:.4}, sup_energy {:.4}",
            self.growth_u_lbeta1, self.growth_energy
        );
        let _ = writeln!(
            s,
            "  pass rule: d[i+1] <= {BAND} d[i] (harness policy; no rate is claimed)"
        );
        s
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(" ")
}

/// Exact pressure for `u = 0` at time `t`, mode by mode.
pub fn linear_flow_solution(p0: &ScalarField, t: f64, s: f64, rho2: f64) -> ScalarField {
    let g = p0.grid().clone();
    spectral::forward(p0).apply_indexed(|i| {
        (-(spectral::fractional_symbol(g.k_squared(i), s) + rho2 * g.difference_symbol(i)) * t).exp()
    })
}

fn run_rung(spec: &LadderSpec, value: f64) -> Rung {
    let mut params = spec.base.clone();
    spec.param.set(&mut params, value);
    let every = (spec.coarse_step() / params.tau).round().max(1.0) as usize;
    let opts = EvolveOptions {
        horizon: spec.horizon,
        snapshot_every: every,
    };
    let mut series = SeriesRecorder::new(&params);
    let mut traj = TrajectoryRecorder::default();
    let state = StepState::new(spec.u0.clone(), spec.p0.clone(), 0.0);
    let outcome = evolve(state, &params, &opts, (&mut series, &mut traj));
    let trajectory = traj.trajectory;
    let mut rung = Rung {
        value,
        steps: 0,
        error: None,
        budget_passed: false,
        norms: None,
        dual_l2_u: f64::NAN,
        dual_l2_p: f64::NAN,
        divcurl: Vec::new(),
        reference_error: None,
        trajectory: Trajectory::default(),
    };
    match outcome {
        Ok((_, summary)) => rung.steps = summary.steps,
        Err(e) => {
            rung.error = Some(e.to_string());
            return rung;
        }
    }
    if let Some(s) = series.series() {
        rung.budget_passed = check_energy_budget(s).passed;
    }
    rung.norms = check_theorem_norms(&trajectory, params.beta, params.s).ok();
    if let Ok(d) = dual_norm_surrogate(&trajectory, params.beta, params.s) {
        rung.dual_l2_u = d.l2_u;
        rung.dual_l2_p = d.l2_p;
    }
    rung.divcurl = divcurl_monitor(&trajectory);
    rung.trajectory = trajectory;
    rung
}

/// Frames inside the time window `[dt, T - dt]`, keyed by coarse index.
fn window(spec: &LadderSpec, traj: &Trajectory) -> Vec<(i64, usize)> {
    let dt = spec.coarse_step();
    traj.frames
        .iter()
        .enumerate()
        .filter_map(|(i, f)| {
            let k = (f.time / dt).round();
            let on_grid = (f.time - k * dt).abs() <= 1e-9 * dt;
            let inside = f.time >= dt * (1.0 - 1e-9) && f.time <= spec.horizon - dt * (1.0 - 1e-9);
            (on_grid && inside).then_some((k as i64, i))
        })
        .collect()
}

/// `(sum_frames dt int_box |a - b|^2)^{1/2}` over frames present in both.
fn box_distance<F>(spec: &LadderSpec, a: &Trajectory, b: &Trajectory, pick: F) -> f64
where
    F: Fn(&crate::diagnostics::Frame) -> &ScalarField,
{
    let dt = spec.coarse_step();
    let half = spec.box_fraction * spec.u0.grid().half_width();
    let wb = window(spec, b);
    let mut total = 0.0;
    for (k, i) in window(spec, a) {
        let Some(&(_, j)) = wb.iter().find(|(kb, _)| *kb == k) else {
            continue;
        };
        let diff = pick(&a.frames[i]).sub(pick(&b.frames[j]));
        total += dt * box_l2_sq(&diff, half);
    }
    total.sqrt()
}

fn box_l2_sq(f: &ScalarField, half: f64) -> f64 {
    f.integrate_with_position(|x, y, v| if x.abs() <= half && y.abs() <= half { v * v } else { 0.0 })
}

fn orders(d: &[f64], ratio: f64) -> Vec<f64> {
    d.windows(2).map(|w| (w[0] / w[1]).ln() / (1.0 / ratio).ln()).collect()
}

fn growth(values: &[f64], norms: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .zip(norms)
        .filter(|(_, n)| **n > 0.0)
        .map(|(v, n)| ((1.0 / v).ln(), n.ln()))
        .collect();
    least_squares_slope(&pts)
}

fn monotone(d: &[f64]) -> bool {
    d.windows(2).all(|w| w[1] <= BAND * w[0])
}

/// Runs every rung from the same initial data and compares consecutive rungs.
pub fn run_ladder(spec: &LadderSpec) -> Result<LadderReport, LadderError> {
    spec.validate()?;
    let values = spec.values();
    let mut rungs = exec::map_with_jobs(&values, spec.jobs, |&v| run_rung(spec, v));
    if spec.reference == Reference::LinearFlow {
        let dt = spec.coarse_step();
        let half = spec.box_fraction * spec.u0.grid().half_width();
        for rung in rungs.iter_mut().filter(|r| r.error.is_none()) {
            let mut params = spec.base.clone();
            spec.param.set(&mut params, rung.value);
            let total: f64 = window(spec, &rung.trajectory)
                .into_iter()
                .map(|(_, i)| {
                    let f = &rung.trajectory.frames[i];
                    let exact = linear_flow_solution(&spec.p0, f.time, params.s, params.rho2);
                    dt * box_l2_sq(&f.p.sub(&exact), half)
                })
                .sum();
            rung.reference_error = Some(total.sqrt());
        }
    }

    let failed: Vec<String> = rungs
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{} = {}: {e}", spec.param, r.value)))
        .collect();
    let mut cauchy_u = Vec::new();
    let mut cauchy_p = Vec::new();
    let mut cauchy_divcurl = Vec::new();
    if failed.is_empty() {
        for w in rungs.windows(2) {
            let (a, b) = (&w[0].trajectory, &w[1].trajectory);
            cauchy_u.push(box_distance(spec, a, b, |f| &f.u));
            cauchy_p.push(box_distance(spec, a, b, |f| &f.p));
            let m = w[0]
                .divcurl
                .iter()
                .filter_map(|(t, v)| {
                    let other = w[1]
                        .divcurl
                        .iter()
                        .find(|(s, _)| (s - t).abs() <= 1e-9 * spec.coarse_step())?;
                    Some((v - other.1).abs())
                })
                .fold(0.0, f64::max);
            cauchy_divcurl.push(m);
        }
    }
    let reference: Vec<f64> = rungs.iter().filter_map(|r| r.reference_error).collect();
    let pick = |f: fn(&NormReport) -> f64| {
        rungs
            .iter()
            .map(|r| r.norms.as_ref().map_or(f64::NAN, f))
            .collect::<Vec<_>>()
    };
    let growth_u_lbeta1 = growth(&values, &pick(|n| n.u_lbeta1));
    let growth_energy = growth(&values, &pick(|n| n.sup_energy));

    let failure = if !failed.is_empty() {
        Some(format!("rung aborted: {}", failed.join("; ")))
    } else if let Some(r) = rungs.iter().find(|r| !r.budget_passed) {
        Some(format!("energy budget failed at {} = {}", spec.param, r.value))
    } else if spec.param == LadderParam::DeltaGrad {
        let scale = rungs[0]
            .trajectory
            .frames
            .iter()
            .map(|f| f.u.l2_norm())
            .fold(0.0, f64::max);
        let worst = cauchy_u.iter().copied().fold(0.0, f64::max);
        (worst > INSENSITIVE_REL * scale.max(f64::MIN_POSITIVE) * spec.horizon.sqrt())
            .then(|| format!("delta_grad changes u by {worst:e}"))
    } else if !monotone(&cauchy_u) {
        Some(format!("u differences not decreasing: {}", fmt_list(&cauchy_u)))
    } else if !monotone(&cauchy_p) {
        Some(format!("p differences not decreasing: {}", fmt_list(&cauchy_p)))
    } else {
        None
    };
    Ok(LadderReport {
        param: spec.param,
        values,
        orders_u: orders(&cauchy_u, spec.ratio),
        orders_p: orders(&cauchy_p, spec.ratio),
        reference_orders: orders(&reference, spec.ratio),
        cauchy_u,
        cauchy_p,
        cauchy_divcurl,
        growth_u_lbeta1,
        growth_energy,
        passed: failure.is_none(),
        failure,
        rungs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;

    fn spec(param: LadderParam, u0: ScalarField, p0: ScalarField) -> LadderSpec {
        let base = SchemeParams {
            eps: 0.0,
            tau: 0.01,
            ..SchemeParams::default()
        };
        let mut s = LadderSpec::new(base, param, 0.04, u0, p0);
        s.terminal.tau = 0.01;
        if param == LadderParam::Eps {
            s.start = 1e-3;
        }
        s
    }

    #[test]
    fn limit_order_is_enforced() {
        let g = make_grid(8, 4.0).unwrap();
        let z = ScalarField::zeros(&g);
        let mut s = spec(LadderParam::Rho1, z.clone(), z.clone());
        assert!(s.validate().is_ok());
        s.base.eps = 1e-3;
        assert!(s.validate().is_err());
        let mut s = spec(LadderParam::Eps, z.clone(), z.clone());
        s.base.tau = 1.0;
        assert!(s.validate().is_ok());
        s.ratio = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn zero_data_differences_vanish() {
        let g = make_grid(16, 4.0).unwrap();
        let z = ScalarField::zeros(&g);
        for param in LadderParam::ORDER {
            let r = run_ladder(&spec(param, z.clone(), z.clone())).unwrap();
            assert!(r.passed, "{}", r.summary());
            assert!(r.cauchy_u.iter().chain(&r.cauchy_p).all(|&d| d == 0.0));
        }
    }

    #[test]
    fn linear_flow_is_first_order() {
        let g = make_grid(32, 8.0).unwrap();
        let p0 = ScalarField::from_fn(&g, |x, y| (-(x * x + y * y) / 2.0).exp());
        let mut s = spec(LadderParam::Tau, ScalarField::zeros(&g), p0);
        s.horizon = 0.2;
        s.start = 0.02;
        s.reference = Reference::LinearFlow;
        let r = run_ladder(&s).unwrap();
        assert!(r.passed, "{}", r.summary());
        assert!(r.reference_order_in(0.8, 1.2), "{}", r.summary());
    }
}
