//! Command-line driver.
//!
//! A run directory holds:
//!
//! | file                       | content                                       |
//! |----------------------------|-----------------------------------------------|
//! | `config.resolved`          | every config key with its effective value     |
//! | `series.csv`               | [`SERIES_COLUMNS`](crate::diagnostics::SERIES_COLUMNS), row 0 is the initial state |
//! | `terms.csv`                | [`TERMS_COLUMNS`](crate::diagnostics::TERMS_COLUMNS), the remaining budget integrals |
//! | `snap_<step>_{u,p}.fpm`    | snapshots in the lattice snapshot format      |
//! | `report.toml`              | check name -> status and worst statistic      |
//! | `PARTIAL`                  | present when the run aborted; holds the error |

pub mod config;

use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{ConfigError, InitialData, LadderConfig, RunConfig};

use crate::acceptance;
use crate::diagnostics::{
    run_checks, write_frame, write_report, BudgetParams, BudgetSeries, CheckReport, SeriesRecorder, Trajectory,
    TrajectoryRecorder,
};
use crate::energy::EnergyReport;
use crate::exec;
use crate::ladder::{run_ladder, LadderParam, LadderReport, LadderSpec};
use crate::lattice::ScalarField;
use crate::stepper::{evolve, EvolveOptions, Observer, SchemeParams, StepDiagnostics, StepError, StepState};

pub const CONFIG_ECHO: &str = "config.resolved";
pub const SERIES_FILE: &str = "series.csv";
pub const TERMS_FILE: &str = "terms.csv";
pub const REPORT_FILE: &str = "report.toml";
pub const VALIDATE_FILE: &str = "validate.toml";
pub const PARTIAL_FILE: &str = "PARTIAL";

#[derive(Debug, Parser)]
#[command(
    name = "fpm",
    version,
    about = "Regularized solver and estimate checks for a nonlocal porous-medium system"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat dotted-key config file; defaults apply to missing keys.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `run.out`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    /// Retry a failed step with half the time step.
    #[arg(long)]
    pub retry_halve_tau: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full simulation with diagnostics written alongside.
    Run(Common),
    /// Parameter sweeps in the limit order.
    Ladder {
        #[command(flatten)]
        common: Common,
        /// Swept parameter(s); `all` runs eps, tau, rho2, rho1. Defaults to `ladder.param`.
        #[arg(long, value_name = "NAME")]
        param: Vec<String>,
    },
    /// Reruns every check from the files of a run directory.
    Validate { dir: PathBuf },
    /// Writes a plotting series from a run directory as CSV.
    Plotdata {
        dir: PathBuf,
        what: PlotKind,
        /// Output file; stdout when absent.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Runs the acceptance suite.
    Selftest {
        #[arg(long, value_name = "N")]
        jobs: Option<usize>,
        /// Comma-separated criterion numbers; all when absent.
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        only: Vec<u8>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Energy,
    Masses,
    Slack,
    Radial,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Runs one command; `Ok(false)` means a check failed.
pub fn dispatch(command: Command) -> Result<bool, CliError> {
    match command {
        Command::Run(c) => {
            let cfg = load_config(&c)?;
            run(cfg)
        }
        Command::Ladder { common, param } => {
            let cfg = load_config(&common)?;
            ladder(cfg, &param, common.jobs.unwrap_or(1))
        }
        Command::Validate { dir } => validate(&dir),
        Command::Plotdata { dir, what, out } => plotdata(&dir, what, out.as_deref()).map(|_| true),
        Command::Selftest { jobs, only } => {
            if let Some(j) = jobs {
                exec::configure_threads(j);
            }
            Ok(selftest(&only))
        }
    }
}

fn load_config(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if c.retry_halve_tau {
        cfg.scheme.retry_halve_tau = true;
    }
    if let Some(j) = c.jobs {
        exec::configure_threads(j);
    }
    Ok(cfg)
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", dir.display())))
}

struct SnapshotWriter<'a> {
    dir: &'a Path,
}

impl Observer for SnapshotWriter<'_> {
    fn on_step(&mut self, _: usize, _: &StepState, _: &StepDiagnostics) -> io::Result<()> {
        Ok(())
    }

    fn on_snapshot(&mut self, step: usize, state: &StepState) -> io::Result<()> {
        write_frame(self.dir, step, state.t, &state.u, &state.p)
    }
}

struct Progress {
    every: usize,
}

impl Observer for Progress {
    fn on_start(&mut self, _: &StepState, e: &EnergyReport) -> io::Result<()> {
        eprintln!(
            "start: H = {:.6e}, mass u = {:.6e}, mass p = {:.6e}",
            e.energy, e.mass_u, e.mass_p
        );
        Ok(())
    }

    fn on_step(&mut self, step: usize, _: &StepState, d: &StepDiagnostics) -> io::Result<()> {
        if self.every > 0 && step.is_multiple_of(self.every) {
            eprintln!(
                "step {step}: t = {:.4e}, H = {:.6e}, slack = {:.3e}, picard = {}",
                d.time, d.energy_after, d.energy_slack, d.picard_iters
            );
        }
        Ok(())
    }

    fn on_abort(&mut self, step: usize, error: &StepError) {
        eprintln!("step {step} rejected: {error}");
    }
}

fn print_checks(checks: &[CheckReport]) -> bool {
    for c in checks {
        println!("{}", c.line());
        if !c.passed {
            eprintln!("  {}: {}", c.name, c.detail);
        }
    }
    checks.iter().all(|c| c.passed)
}

/// Simulation plus checks; writes the run directory.
pub fn run(mut cfg: RunConfig) -> Result<bool, CliError> {
    let (u, p) = cfg.initial_state()?;
    let out = cfg.out.clone();
    create_out(&out)?;
    std::fs::write(out.join(CONFIG_ECHO), cfg.resolved())?;
    let _ = std::fs::remove_file(out.join(PARTIAL_FILE));

    let params = cfg.scheme.clone();
    let options = EvolveOptions {
        horizon: cfg.horizon,
        snapshot_every: cfg.snapshot_every,
    };
    let mut series = SeriesRecorder::new(&params);
    let mut traj = TrajectoryRecorder::default();
    let observer = (
        (&mut series, &mut traj),
        (
            SnapshotWriter { dir: &out },
            Progress {
                every: cfg.snapshot_every,
            },
        ),
    );
    let outcome = evolve(StepState::new(u, p, 0.0), &params, &options, observer);
    let mut checks = Vec::new();
    match &outcome {
        Ok((_, summary)) => {
            let mut s = String::new();
            let _ = std::fmt::Write::write_fmt(
                &mut s,
                format_args!(
                    "steps = {}\nfinal_time = {}\ninitial_energy = {}\nfinal_energy = {}\ncumulative_budget = {}\ncumulative_slack = {}\nmin_step_slack = {}\ntau_halvings = {}\nmax_picard_iters = {}\nbeta_below_two = {}\n",
                    summary.steps,
                    summary.final_time,
                    summary.initial_energy,
                    summary.final_energy,
                    summary.cumulative_budget,
                    summary.cumulative_slack,
                    summary.min_step_slack,
                    summary.tau_halvings,
                    summary.max_picard_iters,
                    summary.beta_below_two
                ),
            );
            std::fs::write(out.join("summary.txt"), s)?;
        }
        Err(e) => {
            std::fs::write(out.join(PARTIAL_FILE), format!("{e}\n"))?;
            checks.push(CheckReport::from_failure(
                "run_completed",
                "steps",
                series.series().map_or(0.0, |s| s.rows.len() as f64),
                String::new(),
                Some((series.series().map_or(0, |s| s.rows.len() + 1), e.to_string())),
            ));
        }
    }
    if let Some(s) = series.series() {
        s.write_csv(&out.join(SERIES_FILE), &out.join(TERMS_FILE))
            .map_err(|e| CliError::Input(e.to_string()))?;
        checks.splice(0..0, run_checks(s, &traj.trajectory, params.tol_neg));
    }
    write_report(&out.join(REPORT_FILE), &checks)?;
    Ok(print_checks(&checks))
}

/// Reads a run directory back.
pub fn load_run(dir: &Path) -> Result<(RunConfig, BudgetSeries, Trajectory), CliError> {
    let cfg = RunConfig::load(&dir.join(CONFIG_ECHO))?;
    let series = load_series(dir)?;
    let traj = Trajectory::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    Ok((cfg, series, traj))
}

pub fn validate(dir: &Path) -> Result<bool, CliError> {
    let (cfg, series, traj) = load_run(dir)?;
    let mut checks = run_checks(&series, &traj, cfg.scheme.tol_neg);
    if let Ok(why) = std::fs::read_to_string(dir.join(PARTIAL_FILE)) {
        checks.push(CheckReport::from_failure(
            "run_completed",
            "steps",
            series.rows.len() as f64,
            String::new(),
            Some((series.rows.len() + 1, why.trim().to_string())),
        ));
    }
    write_report(&dir.join(VALIDATE_FILE), &checks)?;
    let ok = print_checks(&checks);
    if !ok {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        eprintln!("failed checks: {}", failed.join(", "));
    }
    Ok(ok)
}

pub fn plotdata(dir: &Path, what: PlotKind, out: Option<&Path>) -> Result<(), CliError> {
    let sink: Box<dyn io::Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| CliError::Input(e.to_string());
    if what == PlotKind::Radial {
        let traj = Trajectory::read_dir(dir).map_err(|e| CliError::Input(e.to_string()))?;
        let last = traj
            .frames
            .last()
            .ok_or_else(|| CliError::Input(format!("no snapshots in {}", dir.display())))?;
        w.write_record(["r", "u", "p"]).map_err(csv_err)?;
        for (r, u, p) in radial_profile(&last.u, &last.p) {
            w.write_record([r.to_string(), u.to_string(), p.to_string()])
                .map_err(csv_err)?;
        }
    } else {
        let series = load_series(dir)?;
        let rows = std::iter::once(&series.initial).chain(&series.rows);
        match what {
            PlotKind::Energy => {
                w.write_record(["time", "energy"]).map_err(csv_err)?;
                for r in rows {
                    w.write_record([r.time.to_string(), r.energy.to_string()])
                        .map_err(csv_err)?;
                }
            }
            PlotKind::Masses => {
                w.write_record(["time", "mass_u", "mass_p"]).map_err(csv_err)?;
                for r in rows {
                    w.write_record([r.time.to_string(), r.mass_u.to_string(), r.mass_p.to_string()])
                        .map_err(csv_err)?;
                }
            }
            PlotKind::Slack => {
                w.write_record(["time", "energy_slack", "cumulative_slack"])
                    .map_err(csv_err)?;
                let mut acc = 0.0;
                for r in rows {
                    acc += r.energy_slack;
                    w.write_record([r.time.to_string(), r.energy_slack.to_string(), acc.to_string()])
                        .map_err(csv_err)?;
                }
            }
            PlotKind::Radial => unreachable!(),
        }
    }
    w.flush()?;
    Ok(())
}

fn load_series(dir: &Path) -> Result<BudgetSeries, CliError> {
    let cfg = RunConfig::load(&dir.join(CONFIG_ECHO))?;
    BudgetSeries::read_csv(
        BudgetParams::from(&cfg.scheme),
        &dir.join(SERIES_FILE),
        &dir.join(TERMS_FILE),
    )
    .map_err(|e| CliError::Input(e.to_string()))
}

/// Shell averages about the origin with width `h`.
pub fn radial_profile(u: &ScalarField, p: &ScalarField) -> Vec<(f64, f64, f64)> {
    let g = u.grid();
    let h = g.spacing();
    let bins = (g.half_width() / h).floor() as usize;
    let mut acc = vec![(0.0, 0.0, 0usize); bins];
    for i in 0..g.len() {
        let (x, y) = g.position(i);
        let b = ((x * x + y * y).sqrt() / h).floor() as usize;
        if b < bins {
            acc[b].0 += u.values()[i];
            acc[b].1 += p.values()[i];
            acc[b].2 += 1;
        }
    }
    acc.into_iter()
        .enumerate()
        .filter(|(_, a)| a.2 > 0)
        .map(|(b, (su, sp, n))| ((b as f64 + 0.5) * h, su / n as f64, sp / n as f64))
        .collect()
}

/// Base parameters for a sweep: parameters preceding `param` in the limit
/// order are lowered to their terminal values.
pub fn ladder_base(cfg: &RunConfig, param: LadderParam) -> SchemeParams {
    let mut base = cfg.scheme.clone();
    let t = cfg.ladder.terminal;
    let pos = LadderParam::ORDER.iter().position(|&p| p == param).unwrap_or(0);
    if pos > 0 {
        base.eps = base.eps.min(t.eps);
    }
    if pos > 1 {
        base.tau = base.tau.min(t.tau);
    }
    if pos > 2 {
        base.rho2 = base.rho2.min(t.rho2);
    }
    base
}

pub fn ladder_spec(cfg: &RunConfig, param: LadderParam, u0: &ScalarField, p0: &ScalarField, jobs: usize) -> LadderSpec {
    let l = &cfg.ladder;
    let base = ladder_base(cfg, param);
    let mut spec = LadderSpec::new(base, param, l.horizon, u0.clone(), p0.clone());
    if let Some(start) = l.start.filter(|_| param == l.param) {
        spec.start = start;
    }
    spec.ratio = l.ratio;
    spec.count = l.count;
    spec.box_fraction = l.box_fraction;
    spec.terminal = l.terminal;
    spec.reference = l.reference;
    spec.jobs = jobs;
    spec
}

pub fn ladder(mut cfg: RunConfig, names: &[String], jobs: usize) -> Result<bool, CliError> {
    let (u0, p0) = cfg.initial_state()?;
    let mut params = Vec::new();
    for n in names {
        if n == "all" {
            params.extend(LadderParam::ORDER);
        } else {
            params
                .push(LadderParam::parse(n).ok_or_else(|| CliError::Input(format!("unknown ladder parameter `{n}`")))?);
        }
    }
    if params.is_empty() {
        params.push(cfg.ladder.param);
    }
    let out = cfg.out.clone();
    create_out(&out)?;
    std::fs::write(out.join(CONFIG_ECHO), cfg.resolved())?;
    let mut checks = Vec::new();
    let mut summary = String::new();
    for param in params {
        let spec = ladder_spec(&cfg, param, &u0, &p0, jobs);
        let report = match run_ladder(&spec) {
            Ok(r) => r,
            Err(e) => {
                checks.push(CheckReport::from_failure(
                    &format!("ladder_{param}"),
                    "cauchy_u",
                    f64::NAN,
                    String::new(),
                    Some((0, e.to_string())),
                ));
                continue;
            }
        };
        report.write_csv(&out).map_err(|e| CliError::Input(e.to_string()))?;
        summary.push_str(&report.summary());
        eprint!("{}", report.summary());
        checks.push(ladder_check(&report));
    }
    std::fs::write(out.join("ladder_summary.txt"), &summary)?;
    write_report(&out.join(REPORT_FILE), &checks)?;
    Ok(print_checks(&checks))
}

fn ladder_check(r: &LadderReport) -> CheckReport {
    CheckReport::from_failure(
        &format!("ladder_{}", r.param),
        "last_cauchy_u",
        r.cauchy_u.last().copied().unwrap_or(f64::NAN),
        format!(
            "growth u_lbeta1 {:.4}, sup_energy {:.4}",
            r.growth_u_lbeta1, r.growth_energy
        ),
        r.failure.clone().map(|f| (0, f)),
    )
}

/// Prints one line per criterion; true when all pass.
pub fn selftest(only: &[u8]) -> bool {
    let mut ok = true;
    for c in acceptance::CRITERIA {
        if !only.is_empty() && !only.contains(&c.id) {
            continue;
        }
        let r = (c.run)();
        println!("{}", r.line());
        let _ = io::stdout().flush();
        ok &= r.passed;
    }
    ok
}
