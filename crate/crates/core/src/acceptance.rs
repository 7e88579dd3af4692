//! The acceptance suite: ten property checks at desk scale (`N = 128`,
//! `L = 20`, `beta = 2`, `s = 0.75` unless stated otherwise).
//!
//! Each criterion returns a [`CriterionResult`]; `fpm selftest` and the
//! `acceptance` test target print one line per criterion. The long runs and
//! ladders are computed once per process and shared between criteria.

use std::fmt::Write as _;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cli::config::{InitialData, RunConfig};
use crate::cli::ladder_spec;
use crate::diagnostics::{
    check_density_mass, check_energy_budget, check_pressure_mass, BudgetSeries, SeriesRecorder, DENSITY_MASS_REL,
};
use crate::energy::{interpolation_exponent, WeightField};
use crate::exec;
use crate::ladder::{gdelta_probe, run_ladder, truncation_probe, LadderParam, LadderReport, Reference};
use crate::lattice::{cutoff_decay_study, quadrature, spectral, Grid, ScalarField};
use crate::stepper::{
    density_step, evolve, signed_pow, transport_term, EvolveOptions, Observer, SchemeParams, StepDiagnostics, StepState,
};

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        format!("criterion {:>2} {:<28} {status}  {}", self.id, self.name, self.detail)
    }
}

#[derive(Clone, Copy)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub run: fn() -> CriterionResult,
}

pub const CRITERIA: [Criterion; 10] = [
    Criterion {
        id: 1,
        name: "operator",
        run: operator,
    },
    Criterion {
        id: 2,
        name: "cutoff_decay",
        run: cutoff_decay,
    },
    Criterion {
        id: 3,
        name: "energy_inequality",
        run: energy_inequality,
    },
    Criterion {
        id: 4,
        name: "mass_laws",
        run: mass_laws,
    },
    Criterion {
        id: 5,
        name: "nonnegativity",
        run: nonnegativity,
    },
    Criterion {
        id: 6,
        name: "density_oracle",
        run: density_oracle,
    },
    Criterion {
        id: 7,
        name: "linear_flow_ladder",
        run: linear_flow_ladder,
    },
    Criterion {
        id: 8,
        name: "nonlinear_ladders",
        run: nonlinear_ladders,
    },
    Criterion {
        id: 9,
        name: "norm_monitors",
        run: norm_monitors,
    },
    Criterion {
        id: 10,
        name: "device_checks",
        run: device_checks,
    },
];

/// Runs one criterion by id.
pub fn run_criterion(id: u8) -> Option<CriterionResult> {
    CRITERIA.iter().find(|c| c.id == id).map(|c| (c.run)())
}

fn result(id: u8, passed: bool, detail: String) -> CriterionResult {
    let name = CRITERIA[usize::from(id) - 1].name;
    CriterionResult {
        id,
        name,
        passed,
        detail,
    }
}

fn failure(id: u8, err: impl std::fmt::Display) -> CriterionResult {
    result(id, false, format!("error: {err}"))
}

// 1

const PROBES: [(f64, f64); 10] = [
    (0.0, 0.0),
    (0.625, 0.0),
    (1.25, 0.625),
    (-1.875, 1.25),
    (2.5, -0.625),
    (0.0, -2.5),
    (-3.125, -1.25),
    (3.75, 1.875),
    (-1.25, -3.75),
    (1.875, 3.125),
];

fn operator() -> CriterionResult {
    let mut detail = String::new();
    let mut passed = true;
    let g = match Grid::new(128, std::f64::consts::PI) {
        Ok(g) => g,
        Err(e) => return failure(1, e),
    };
    let f = ScalarField::from_fn(&g, |x, _| (2.0 * x).cos());
    let mut worst_cos = 0f64;
    for s in [0.3, 0.5, 0.75, 1.0] {
        let out = match spectral::fractional_laplacian(&f, s) {
            Ok(o) => o,
            Err(e) => return failure(1, e),
        };
        let c = 4f64.powf(s);
        let err = out.zip_map(&f, |a, b| a - c * b).max_abs() / c;
        worst_cos = worst_cos.max(err);
    }
    passed &= worst_cos <= 1e-12;
    let _ = write!(detail, "cos2x rel {worst_cos:.2e}");

    let bump = |x: f64, y: f64| (-(x * x + y * y) / 2.0).exp();
    let compare = |n: usize, l: f64, q: &quadrature::PvQuadrature| -> Result<f64, String> {
        let g = Grid::new(n, l).map_err(|e| e.to_string())?;
        let spec = spectral::fractional_laplacian(&ScalarField::from_fn(&g, bump), 0.75).map_err(|e| e.to_string())?;
        let h = g.spacing();
        let at = |x: f64| ((x + g.half_width()) / h).round() as usize;
        let pairs = exec::map(&PROBES, |&(x, y)| {
            let sv = spec.get(at(x), at(y));
            quadrature::evaluate(q, &bump, 0.75, (x, y)).map(|e| (sv, e.value))
        });
        let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let scale = pairs.iter().fold(0f64, |m, p| m.max(p.0.abs()));
        Ok(pairs.iter().fold(0f64, |m, p| m.max((p.0 - p.1).abs())) / scale)
    };
    let coarse_q = quadrature::PvQuadrature::new(20.0);
    let fine_q = quadrature::PvQuadrature::new(40.0).refined();
    let (coarse, fine) = match (compare(128, 20.0, &coarse_q), compare(512, 40.0, &fine_q)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return failure(1, e),
    };
    passed &= coarse <= 1e-3 && fine <= 1e-3 && fine < coarse;
    let _ = write!(detail, ", pv vs spectral rel {coarse:.2e} -> {fine:.2e}");
    result(1, passed, detail)
}

// 2

fn cutoff_decay() -> CriterionResult {
    let study = Grid::new(512, 40.0)
        .map_err(|e| e.to_string())
        .and_then(|g| cutoff_decay_study(5.0, 0.75, &[1.0, 2.0, 4.0, 8.0], &g).map_err(|e| e.to_string()));
    match study {
        Ok(st) => {
            let sups: Vec<String> = st.rows.iter().map(|r| format!("{:.3e}", r.sup_norm)).collect();
            let passed = st.strictly_decreasing() && st.fitted_exponent >= 0.8;
            result(
                2,
                passed,
                format!("sup [{}], exponent {:.3}", sups.join(", "), st.fitted_exponent),
            )
        }
        Err(e) => failure(2, e),
    }
}

// 3, 4, 5

/// Per-step extremes of `min f / max|f|`.
struct SignMonitor {
    worst_u: f64,
    worst_p: f64,
}

impl Default for SignMonitor {
    fn default() -> Self {
        Self {
            worst_u: f64::INFINITY,
            worst_p: f64::INFINITY,
        }
    }
}

impl Observer for SignMonitor {
    fn on_step(&mut self, _: usize, state: &StepState, _: &StepDiagnostics) -> std::io::Result<()> {
        let ratio = |f: &ScalarField| {
            let m = f.max_abs();
            if m > 0.0 {
                f.min() / m
            } else {
                0.0
            }
        };
        self.worst_u = self.worst_u.min(ratio(&state.u));
        self.worst_p = self.worst_p.min(ratio(&state.p));
        Ok(())
    }
}

struct DefaultRun {
    series: Option<BudgetSeries>,
    steps: usize,
    error: Option<String>,
    worst_u: f64,
    worst_p: f64,
}

fn simulate(eps: f64) -> DefaultRun {
    let mut cfg = RunConfig::default();
    cfg.scheme.eps = eps;
    let (u, p) = match cfg.initial_state() {
        Ok(f) => f,
        Err(e) => {
            return DefaultRun {
                series: None,
                steps: 0,
                error: Some(e.to_string()),
                worst_u: 0.0,
                worst_p: 0.0,
            }
        }
    };
    let params = cfg.scheme.clone();
    let options = EvolveOptions {
        horizon: 200.0 * params.tau,
        snapshot_every: 0,
    };
    let mut rec = SeriesRecorder::new(&params);
    let mut sign = SignMonitor::default();
    let out = evolve(StepState::new(u, p, 0.0), &params, &options, (&mut rec, &mut sign));
    let series = rec.into_series();
    DefaultRun {
        steps: series.as_ref().map_or(0, |s| s.rows.len()),
        series,
        error: out.err().map(|e| e.to_string()),
        worst_u: sign.worst_u,
        worst_p: sign.worst_p,
    }
}

fn default_run() -> &'static DefaultRun {
    static RUN: OnceLock<DefaultRun> = OnceLock::new();
    RUN.get_or_init(|| simulate(SchemeParams::default().eps))
}

fn conservative_run() -> &'static DefaultRun {
    static RUN: OnceLock<DefaultRun> = OnceLock::new();
    RUN.get_or_init(|| simulate(0.0))
}

fn completed(id: u8, run: &DefaultRun) -> Result<&BudgetSeries, CriterionResult> {
    match (&run.error, &run.series) {
        (None, Some(s)) if run.steps == 200 => Ok(s),
        (Some(e), _) => Err(result(id, false, format!("run aborted after {} steps: {e}", run.steps))),
        _ => Err(result(id, false, format!("run stopped after {} steps", run.steps))),
    }
}

fn energy_inequality() -> CriterionResult {
    let series = match completed(3, default_run()) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let h0 = series.initial.energy;
    let worst = series.rows.iter().map(|r| r.energy_slack).fold(f64::INFINITY, f64::min) / h0;
    let budget = check_energy_budget(series);
    let passed = worst >= -1e-8 && budget.passed;
    result(
        3,
        passed,
        format!(
            "min slack/H0 {worst:.3e}, budget check {}",
            if budget.passed { "ok" } else { "failed" }
        ),
    )
}

fn mass_laws() -> CriterionResult {
    let cons = match completed(4, conservative_run()) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let m0 = cons.initial.mass_u;
    let drift = cons.rows.iter().fold(0f64, |m, r| m.max((r.mass_u - m0).abs())) / m0;
    let density = check_density_mass(cons, DENSITY_MASS_REL);
    let mut passed = drift <= 1e-10 && density.passed;
    let mut detail = format!("density drift {drift:.2e}");
    for (label, run) in [("eps=0", conservative_run()), ("default", default_run())] {
        let Some(series) = &run.series else { continue };
        let pressure = check_pressure_mass(series);
        passed &= pressure.passed;
        let _ = write!(
            detail,
            ", pressure {label} {}={:.2e}",
            pressure.statistic, pressure.worst
        );
    }
    passed &= default_run().error.is_none();
    result(4, passed, detail)
}

fn nonnegativity() -> CriterionResult {
    let run = default_run();
    if let Err(r) = completed(5, run) {
        return r;
    }
    let passed = run.worst_u >= -1e-9 && run.worst_p >= -1e-9;
    result(
        5,
        passed,
        format!("min u/max|u| {:.2e}, min p/max|p| {:.2e}", run.worst_u, run.worst_p),
    )
}

// 6

/// Independent evaluation of the density functional divided by `h^2`.
struct Functional<'a> {
    n: usize,
    h: f64,
    beta: f64,
    tau: f64,
    eps: f64,
    rho1: f64,
    delta: f64,
    u_prev: &'a [f64],
    b: &'a [f64],
    gamma: &'a [f64],
}

impl Functional<'_> {
    fn faces(&self, w: &[f64]) -> Vec<(usize, usize, f64, f64)> {
        let n = self.n;
        (0..n * n)
            .map(|i| {
                let (iy, ix) = (i / n, i % n);
                let ex = iy * n + (ix + 1) % n;
                let ey = ((iy + 1) % n) * n + ix;
                (ex, ey, (w[ex] - w[i]) / self.h, (w[ey] - w[i]) / self.h)
            })
            .collect()
    }

    fn value(&self, w: &[f64]) -> f64 {
        let b = self.beta;
        let (cj, cr, er) = ((b - 1.0) / b, b / (b + 1.0), (b + 1.0) / (2.0 * b));
        let d2 = self.delta * self.delta;
        let mut v = 0.0;
        for (i, &wi) in w.iter().enumerate() {
            v += cj * wi.abs().powf(b / (b - 1.0)) / self.tau
                + self.eps * cr * (wi * wi + d2).powf(er) * self.gamma[i]
                + (self.b[i] - self.u_prev[i] / self.tau) * wi;
        }
        for (_, _, gx, gy) in self.faces(w) {
            v += self.rho1 * cr * (gx * gx + gy * gy + d2).powf(er);
        }
        v
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let b = self.beta;
        let e = (1.0 - b) / (2.0 * b);
        let d2 = self.delta * self.delta;
        let mut g: Vec<f64> = w
            .iter()
            .enumerate()
            .map(|(i, &wi)| {
                signed_pow(wi, 1.0 / (b - 1.0)) / self.tau
                    + self.eps * self.gamma[i] * wi * (wi * wi + d2).powf(e)
                    + self.b[i]
                    - self.u_prev[i] / self.tau
            })
            .collect();
        if self.rho1 > 0.0 {
            for (i, (ex, ey, gx, gy)) in self.faces(w).into_iter().enumerate() {
                let a = self.rho1 * (gx * gx + gy * gy + d2).powf(e) / self.h;
                g[ex] += a * gx;
                g[ey] += a * gy;
                g[i] -= a * (gx + gy);
            }
        }
        g
    }

    /// Damped Newton with a difference Hessian of the exact gradient.
    fn minimize(&self, mut w: Vec<f64>) -> Vec<f64> {
        let m = w.len();
        for _ in 0..200 {
            let g = self.gradient(&w);
            let gnorm = g.iter().fold(0f64, |a, x| a.max(x.abs()));
            let scale = self.u_prev.iter().fold(0f64, |a, x| a.max(x.abs())) / self.tau;
            if gnorm <= 1e-13 * scale {
                break;
            }
            let mut hess = DMatrix::<f64>::zeros(m, m);
            for j in 0..m {
                let step = 1e-6 * w[j].abs().max(1e-3);
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[j] += step;
                wm[j] -= step;
                let (gp, gm) = (self.gradient(&wp), self.gradient(&wm));
                for i in 0..m {
                    hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
                }
            }
            let hess = (&hess + hess.transpose()) * 0.5;
            let gv = DVector::from_vec(g.clone());
            let mut d = hess.lu().solve(&(-&gv)).unwrap_or_else(|| -&gv);
            if d.dot(&gv) >= 0.0 {
                d = -&gv;
            }
            let j0 = self.value(&w);
            let slope = d.dot(&gv);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial: Vec<f64> = w.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
                if self.value(&trial) <= j0 + 1e-4 * t * slope {
                    w = trial;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        w
    }
}

fn density_oracle() -> CriterionResult {
    let g = match Grid::new(8, 2.0) {
        Ok(g) => g,
        Err(e) => return failure(6, e),
    };
    let gamma = WeightField::new(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0f64;
    for k in 0..20 {
        let params = SchemeParams {
            beta: rng.random_range(1.5..3.0),
            tau: rng.random_range(0.01..0.1),
            eps: rng.random_range(0.0..0.05),
            rho1: rng.random_range(0.0..0.05),
            ..SchemeParams::default()
        };
        let mut field = |lo: f64, hi: f64| {
            let v: Vec<f64> = (0..g.len()).map(|_| rng.random_range(lo..hi)).collect();
            ScalarField::from_values(&g, v).expect("grid-sized values")
        };
        let u_prev = field(0.2, 1.2);
        let p = field(0.0, 1.0);
        let z = u_prev.clone();
        let solved = match density_step(&u_prev, &p, &z, &params, None) {
            Ok(s) => s,
            Err(e) => return failure(6, format!("instance {k}: {e}")),
        };
        let b = transport_term(&z, &p, params.beta);
        let j = Functional {
            n: g.n(),
            h: g.spacing(),
            beta: params.beta,
            tau: params.tau,
            eps: params.eps,
            rho1: params.rho1,
            delta: params.delta_grad,
            u_prev: u_prev.values(),
            b: b.values(),
            gamma: gamma.values(),
        };
        let w0: Vec<f64> = u_prev.values().iter().map(|&v| v.powf(params.beta - 1.0)).collect();
        let w = j.minimize(w0);
        let e = 1.0 / (params.beta - 1.0);
        let diff: f64 = w
            .iter()
            .zip(solved.u.values())
            .map(|(&wi, &ui)| (signed_pow(wi, e) - ui).powi(2))
            .sum::<f64>();
        worst = worst.max((g.cell_area() * diff).sqrt());
    }
    result(
        6,
        worst <= 1e-6,
        format!("max L2 difference {worst:.2e} over 20 instances"),
    )
}

// 7

fn linear_flow_ladder() -> CriterionResult {
    let mut cfg = RunConfig {
        u0: InitialData::Zero,
        scheme: SchemeParams {
            eps: 0.0,
            rho2: 0.0,
            ..SchemeParams::default()
        },
        ..RunConfig::default()
    };
    let (u0, p0) = match cfg.initial_state() {
        Ok(f) => f,
        Err(e) => return failure(7, e),
    };
    let mut spec = ladder_spec(&cfg, LadderParam::Tau, &u0, &p0, 4);
    spec.start = 1e-3;
    spec.reference = Reference::LinearFlow;
    match run_ladder(&spec) {
        Ok(r) => {
            let orders: Vec<String> = r.reference_orders.iter().map(|o| format!("{o:.3}")).collect();
            result(
                7,
                r.reference_order_in(0.8, 1.2),
                format!("orders vs exact [{}]", orders.join(", ")),
            )
        }
        Err(e) => failure(7, e),
    }
}

// 8, 9

const LADDERS: [LadderParam; 4] = [LadderParam::Rho1, LadderParam::Rho2, LadderParam::Eps, LadderParam::Tau];

fn ladder_report(param: LadderParam) -> &'static Result<LadderReport, String> {
    static CELLS: [OnceLock<Result<LadderReport, String>>; 4] =
        [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let slot = LADDERS.iter().position(|&p| p == param).expect("swept parameter");
    CELLS[slot].get_or_init(|| {
        let mut cfg = RunConfig::default();
        let (u0, p0) = cfg.initial_state().map_err(|e| e.to_string())?;
        run_ladder(&ladder_spec(&cfg, param, &u0, &p0, 1)).map_err(|e| e.to_string())
    })
}

fn nonlinear_ladders() -> CriterionResult {
    let reports = exec::map(&LADDERS, |&p| ladder_report(p));
    let mut passed = true;
    let mut parts = Vec::new();
    for (param, report) in LADDERS.iter().zip(reports) {
        match report {
            Ok(r) => {
                passed &= r.passed;
                let d: Vec<String> = r.cauchy_u.iter().map(|d| format!("{d:.2e}")).collect();
                parts.push(format!(
                    "{param} [{}]{}",
                    d.join(" "),
                    if r.passed { "" } else { " failed" }
                ));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("{param} error: {e}"));
            }
        }
    }
    result(8, passed, parts.join("; "))
}

fn norm_monitors() -> CriterionResult {
    match ladder_report(LadderParam::Rho1) {
        Ok(r) => result(
            9,
            r.norm_uniform(),
            format!(
                "slopes u_lbeta1 {:.4}, sup_energy {:.4}",
                r.growth_u_lbeta1, r.growth_energy
            ),
        ),
        Err(e) => failure(9, e),
    }
}

// 10

fn device_checks() -> CriterionResult {
    let g = match Grid::new(32, 4.0) {
        Ok(g) => g,
        Err(e) => return failure(10, e),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut random_field = |hi: f64| {
        let v: Vec<f64> = (0..g.len()).map(|_| rng.random_range(0.0..hi)).collect();
        ScalarField::from_values(&g, v).expect("grid-sized values")
    };
    let ks = [0.25, 0.5, 1.0, 2.0, 4.0];
    let mut truncation_ok = 0;
    for _ in 0..20 {
        let (a, b) = (random_field(3.0), random_field(3.0));
        let t = truncation_probe(
            &crate::diagnostics::Trajectory::single(a.clone(), a),
            &crate::diagnostics::Trajectory::single(b.clone(), b),
            &ks,
            2.0,
        );
        truncation_ok += usize::from(t.monotone && t.nonnegative);
    }
    let deltas = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-6];
    let mut gdelta_ok = 0;
    for _ in 0..20 {
        let p = random_field(1.0).map(|x| (x - 0.1).max(0.0));
        let t = gdelta_probe(&p, &deltas);
        let gap = t.limit - t.rows.last().map_or(0.0, |r| r.1);
        gdelta_ok += usize::from(t.monotone && t.bounded && gap <= 1e-6 * g.area() + 1e-12 * t.limit);
    }
    let r2 = interpolation_exponent(2.0).ok();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sampled = (0..1000).all(|_| {
        let beta = 1.0 + rng.random_range(f64::EPSILON..=9.0);
        interpolation_exponent(beta).is_ok_and(|r| r > beta)
    });
    let passed = truncation_ok == 20 && gdelta_ok == 20 && r2 == Some(3.0) && sampled;
    result(
        10,
        passed,
        format!(
            "truncation {truncation_ok}/20, gdelta {gdelta_ok}/20, r(2) = {}, r > beta on samples {sampled}",
            r2.map_or("error".to_string(), |r| r.to_string())
        ),
    )
}
