//! Per-step budget rows and their CSV files.
//!
//! `series.csv` holds the fixed columns of [`SERIES_COLUMNS`]; `terms.csv`
//! holds the remaining budget integrals of [`TERMS_COLUMNS`], keyed by the same
//! step numbers. Row `0` of both files is the initial state. Floats are
//! written in shortest round-trip form, so reading the files back gives
//! bit-identical rows.

use std::io;
use std::path::Path;

use thiserror::Error;

use crate::energy::{self, EnergyReport};
use crate::stepper::{BudgetTerms, Observer, SchemeParams, StepDiagnostics, StepState};

pub const SERIES_COLUMNS: [&str; 14] = [
    "step",
    "time",
    "mass_u",
    "mass_p",
    "energy",
    "dissipation",
    "energy_slack",
    "min_u",
    "min_p",
    "picard_iters",
    "inner_iters",
    "residual_u",
    "residual_p",
    "boundary_indicator",
];

pub const TERMS_COLUMNS: [&str; 10] = [
    "step",
    "tau",
    "rho1_term",
    "eps_term",
    "rho2_term",
    "power_integral",
    "eps_leak",
    "divcurl",
    "slack_tolerance",
    "cg_iters",
];

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Scheme constants needed to evaluate the budgets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BudgetParams {
    pub beta: f64,
    pub s: f64,
    pub eps: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub slack_rel: f64,
}

impl From<&SchemeParams> for BudgetParams {
    fn from(p: &SchemeParams) -> Self {
        Self {
            beta: p.beta,
            s: p.s,
            eps: p.eps,
            rho1: p.rho1,
            rho2: p.rho2,
            slack_rel: p.slack_rel,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeriesRow {
    pub step: usize,
    pub time: f64,
    pub tau: f64,
    pub mass_u: f64,
    pub mass_p: f64,
    pub energy: f64,
    pub energy_slack: f64,
    pub slack_tolerance: f64,
    pub min_u: f64,
    pub min_p: f64,
    pub picard_iters: usize,
    pub inner_iters: usize,
    pub cg_iters: usize,
    pub residual_u: f64,
    pub residual_p: f64,
    pub boundary_indicator: f64,
    pub terms: BudgetTerms,
}

impl SeriesRow {
    pub fn initial(state: &StepState, report: &EnergyReport, beta: f64) -> Self {
        Self {
            step: 0,
            time: state.t,
            mass_u: report.mass_u,
            mass_p: report.mass_p,
            energy: report.energy,
            min_u: state.u.min(),
            min_p: state.p.min(),
            boundary_indicator: state.u.boundary_indicator().max(state.p.boundary_indicator()),
            terms: BudgetTerms {
                dissipation: report.dissipation,
                power_integral: energy::power_integral(&state.u, beta).unwrap_or(f64::NAN),
                ..BudgetTerms::default()
            },
            ..Self::default()
        }
    }

    pub fn from_step(step: usize, d: &StepDiagnostics) -> Self {
        Self {
            step,
            time: d.time,
            tau: d.tau,
            mass_u: d.mass_u_after,
            mass_p: d.mass_p_after,
            energy: d.energy_after,
            energy_slack: d.energy_slack,
            slack_tolerance: d.slack_tolerance,
            min_u: d.min_u,
            min_p: d.min_p,
            picard_iters: d.picard_iters,
            inner_iters: d.inner_iters,
            cg_iters: d.cg_iters,
            residual_u: d.residual_u,
            residual_p: d.residual_p,
            boundary_indicator: d.boundary_indicator,
            terms: d.terms,
        }
    }

    fn series_record(&self) -> Vec<String> {
        let f = |v: f64| v.to_string();
        vec![
            self.step.to_string(),
            f(self.time),
            f(self.mass_u),
            f(self.mass_p),
            f(self.energy),
            f(self.terms.dissipation),
            f(self.energy_slack),
            f(self.min_u),
            f(self.min_p),
            self.picard_iters.to_string(),
            self.inner_iters.to_string(),
            f(self.residual_u),
            f(self.residual_p),
            f(self.boundary_indicator),
        ]
    }

    fn terms_record(&self) -> Vec<String> {
        let f = |v: f64| v.to_string();
        let t = &self.terms;
        vec![
            self.step.to_string(),
            f(self.tau),
            f(t.rho1_term),
            f(t.eps_term),
            f(t.rho2_term),
            f(t.power_integral),
            f(t.eps_leak),
            f(t.divcurl),
            f(self.slack_tolerance),
            self.cg_iters.to_string(),
        ]
    }
}

/// Budget rows of one run: the initial state and one row per accepted step.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetSeries {
    pub params: BudgetParams,
    pub initial: SeriesRow,
    pub rows: Vec<SeriesRow>,
}

impl BudgetSeries {
    pub fn new(params: BudgetParams, initial: SeriesRow) -> Self {
        Self {
            params,
            initial,
            rows: Vec::new(),
        }
    }

    fn all_rows(&self) -> impl Iterator<Item = &SeriesRow> {
        std::iter::once(&self.initial).chain(&self.rows)
    }

    pub fn budget_rate(&self, row: &SeriesRow) -> f64 {
        let p = &self.params;
        row.terms.budget_rate(p.beta, p.eps, p.rho1, p.rho2)
    }

    /// `sum tau_k Q_k` after each step.
    pub fn cumulative_dissipation(&self) -> Vec<f64> {
        self.rows
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r.tau * self.budget_rate(r);
                Some(*acc)
            })
            .collect()
    }

    /// Mass absorbed by the `eps` term, `eps sum tau_k leak_k`, after each step.
    pub fn cumulative_leak(&self) -> Vec<f64> {
        self.rows
            .iter()
            .scan(0.0, |acc, r| {
                *acc += self.params.eps * r.tau * r.terms.eps_leak;
                Some(*acc)
            })
            .collect()
    }

    pub fn slack_history(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.energy_slack).collect()
    }

    pub fn write_csv(&self, series: &Path, terms: &Path) -> Result<(), SeriesError> {
        let csv_err = |path: &Path| {
            let path = path.display().to_string();
            move |source| SeriesError::Csv { path, source }
        };
        let mut w = csv::Writer::from_path(series).map_err(csv_err(series))?;
        w.write_record(SERIES_COLUMNS).map_err(csv_err(series))?;
        for r in self.all_rows() {
            w.write_record(r.series_record()).map_err(csv_err(series))?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(terms).map_err(csv_err(terms))?;
        w.write_record(TERMS_COLUMNS).map_err(csv_err(terms))?;
        for r in self.all_rows() {
            w.write_record(r.terms_record()).map_err(csv_err(terms))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(params: BudgetParams, series: &Path, terms: &Path) -> Result<Self, SeriesError> {
        let a = read_table(series, &SERIES_COLUMNS)?;
        let b = read_table(terms, &TERMS_COLUMNS)?;
        let bad = |reason: String| SeriesError::Malformed {
            path: terms.display().to_string(),
            reason,
        };
        if a.len() != b.len() {
            return Err(bad(format!("{} rows, series has {}", b.len(), a.len())));
        }
        if a.is_empty() {
            return Err(bad("no rows".into()));
        }
        let mut rows = Vec::with_capacity(a.len());
        for (k, (x, y)) in a.iter().zip(&b).enumerate() {
            if x[0] != k as f64 || y[0] != k as f64 {
                return Err(bad(format!("row {k} has step {} / {}", x[0], y[0])));
            }
            rows.push(SeriesRow {
                step: k,
                time: x[1],
                mass_u: x[2],
                mass_p: x[3],
                energy: x[4],
                energy_slack: x[6],
                min_u: x[7],
                min_p: x[8],
                picard_iters: x[9] as usize,
                inner_iters: x[10] as usize,
                residual_u: x[11],
                residual_p: x[12],
                boundary_indicator: x[13],
                tau: y[1],
                slack_tolerance: y[8],
                cg_iters: y[9] as usize,
                terms: BudgetTerms {
                    dissipation: x[5],
                    rho1_term: y[2],
                    eps_term: y[3],
                    rho2_term: y[4],
                    power_integral: y[5],
                    eps_leak: y[6],
                    divcurl: y[7],
                },
            });
        }
        let initial = rows.remove(0);
        if rows.windows(2).any(|w| w[1].time <= w[0].time) || rows.first().is_some_and(|r| r.time <= initial.time) {
            return Err(SeriesError::Malformed {
                path: series.display().to_string(),
                reason: "time column is not increasing".into(),
            });
        }
        Ok(Self { params, initial, rows })
    }
}

fn read_table(path: &Path, columns: &[&str]) -> Result<Vec<Vec<f64>>, SeriesError> {
    let name = path.display().to_string();
    let csv_err = |source| SeriesError::Csv {
        path: name.clone(),
        source,
    };
    let bad = |reason: String| SeriesError::Malformed {
        path: name.clone(),
        reason,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?;
    if header.iter().ne(columns.iter().copied()) {
        return Err(bad(format!("expected columns {}", columns.join(","))));
    }
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("row {k}: {e}")))?;
        out.push(row);
    }
    Ok(out)
}

/// Observer that accumulates a [`BudgetSeries`].
#[derive(Clone, Debug)]
pub struct SeriesRecorder {
    params: BudgetParams,
    series: Option<BudgetSeries>,
}

impl SeriesRecorder {
    pub fn new(params: &SchemeParams) -> Self {
        Self {
            params: params.into(),
            series: None,
        }
    }

    pub fn series(&self) -> Option<&BudgetSeries> {
        self.series.as_ref()
    }

    pub fn into_series(self) -> Option<BudgetSeries> {
        self.series
    }
}

impl Observer for SeriesRecorder {
    fn on_start(&mut self, state: &StepState, report: &EnergyReport) -> io::Result<()> {
        let initial = SeriesRow::initial(state, report, self.params.beta);
        self.series = Some(BudgetSeries::new(self.params, initial));
        Ok(())
    }

    fn on_step(&mut self, step: usize, _: &StepState, diag: &StepDiagnostics) -> io::Result<()> {
        if let Some(s) = self.series.as_mut() {
            s.rows.push(SeriesRow::from_step(step, diag));
        }
        Ok(())
    }
}
