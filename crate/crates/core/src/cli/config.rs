//! Run configuration.
//!
//! The file is flat `key = value` text with dotted keys, read as TOML. Every
//! key has a default; unknown keys are errors. [`RunConfig::resolved`] writes
//! every key back with defaults materialized, and parsing that text yields the
//! same configuration.
//!
//! | key                         | default          |
//! |-----------------------------|------------------|
//! | `grid.N`                    | 128              |
//! | `grid.L`                    | 20               |
//! | `scheme.beta`               | 2                |
//! | `scheme.s`                  | 0.75             |
//! | `scheme.tau`                | 1e-3             |
//! | `scheme.eps`                | 1e-3             |
//! | `scheme.rho1`               | 1e-3             |
//! | `scheme.rho2`               | 1e-3             |
//! | `scheme.delta_grad`         | `1e-8 max u0^(beta-1)`, or 1e-8 for zero data |
//! | `scheme.theta`              | 0.5              |
//! | `scheme.picard_tol`         | 1e-9             |
//! | `scheme.picard_max`         | 200              |
//! | `scheme.inner_tol`          | 1e-10            |
//! | `scheme.inner_max`          | 50               |
//! | `scheme.tol_neg`            | 1e-9             |
//! | `scheme.slack_rel`          | 1e-8             |
//! | `scheme.retry_halve_tau`    | false            |
//! | `scheme.tau_floor`          | 1e-6             |
//! | `initial.u.preset`          | `gaussian_bump`  |
//! | `initial.u.center`          | `[0, 0]`         |
//! | `initial.u.width`           | 2                |
//! | `initial.u.amplitude`       | 1                |
//! | `initial.u.count`           | 4 (`random_bumps` only) |
//! | `initial.u.path`            | none (`file` only) |
//! | `initial.p.*`               | as `u`, amplitude 0.5 |
//! | `run.horizon`               | 0.2              |
//! | `run.snapshot_every`        | 50               |
//! | `run.out`                   | `out`            |
//! | `run.seed`                  | 0                |
//! | `ladder.param`              | `rho1`           |
//! | `ladder.start`              | current value of the parameter |
//! | `ladder.ratio`              | 0.5              |
//! | `ladder.count`              | 4                |
//! | `ladder.horizon`            | 0.05             |
//! | `ladder.box_fraction`       | 0.9              |
//! | `ladder.terminal_eps`       | 0                |
//! | `ladder.terminal_tau`       | 1e-3             |
//! | `ladder.terminal_rho2`      | 1e-3             |
//! | `ladder.reference`          | `none` or `linear_flow` |
//!
//! Presets: `zero`; `gaussian_bump`, `amplitude exp(-|x - center|^2 / (2 width^2))`;
//! `random_bumps`, `count` bumps with centers in `[-L/2, L/2]^2`, widths in
//! `[width/2, width]` and heights in `[0, amplitude]` drawn from `run.seed`;
//! `file`, a snapshot at `path` on the configured grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::energy::NEG_TOLERANCE;
use crate::ladder::{LadderParam, Reference, TerminalValues};
use crate::lattice::{read_snapshot, Grid, ScalarField};
use crate::stepper::SchemeParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Syntax(String),
    #[error("config key `{key}`: {reason}")]
    Field { key: String, reason: String },
    #[error("config: cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn field(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    Zero,
    GaussianBump {
        center: (f64, f64),
        width: f64,
        amplitude: f64,
    },
    RandomBumps {
        count: usize,
        width: f64,
        amplitude: f64,
    },
    File(PathBuf),
}

impl InitialData {
    fn bump(amplitude: f64) -> Self {
        InitialData::GaussianBump {
            center: (0.0, 0.0),
            width: 2.0,
            amplitude,
        }
    }

    /// Builds the field; `salt` separates the random streams of `u` and `p`.
    pub fn build(&self, grid: &Grid, seed: u64, salt: u64, key: &str) -> Result<ScalarField, ConfigError> {
        Ok(match self {
            InitialData::Zero => ScalarField::zeros(grid),
            InitialData::GaussianBump {
                center,
                width,
                amplitude,
            } => gaussian(grid, *center, *width, *amplitude),
            InitialData::RandomBumps {
                count,
                width,
                amplitude,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let half = grid.half_width() / 2.0;
                let mut f = ScalarField::zeros(grid);
                for _ in 0..*count {
                    let c = (rng.random_range(-half..=half), rng.random_range(-half..=half));
                    let w = rng.random_range(width / 2.0..=*width);
                    let a = rng.random_range(0.0..=*amplitude);
                    f = f.add(&gaussian(grid, c, w, a));
                }
                f
            }
            InitialData::File(path) => {
                let snap = read_snapshot(path).map_err(|e| field(&format!("{key}.path"), e.to_string()))?;
                if snap.field.grid() != grid {
                    return Err(field(
                        &format!("{key}.path"),
                        format!(
                            "snapshot grid N = {}, L = {} differs from the configured grid",
                            snap.field.grid().n(),
                            snap.field.grid().half_width()
                        ),
                    ));
                }
                snap.field
            }
        })
    }
}

pub fn gaussian(grid: &Grid, center: (f64, f64), width: f64, amplitude: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x, y| {
        let (dx, dy) = (x - center.0, y - center.1);
        amplitude * (-(dx * dx + dy * dy) / (2.0 * width * width)).exp()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LadderConfig {
    pub param: LadderParam,
    pub start: Option<f64>,
    pub ratio: f64,
    pub count: usize,
    pub horizon: f64,
    pub box_fraction: f64,
    pub terminal: TerminalValues,
    pub reference: Reference,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            param: LadderParam::Rho1,
            start: None,
            ratio: 0.5,
            count: 4,
            horizon: 0.05,
            box_fraction: 0.9,
            terminal: TerminalValues::default(),
            reference: Reference::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub l: f64,
    pub scheme: SchemeParams,
    /// `None` until resolved from the initial data.
    pub delta_grad: Option<f64>,
    pub u0: InitialData,
    pub p0: InitialData,
    pub horizon: f64,
    pub snapshot_every: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub ladder: LadderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 128,
            l: 20.0,
            scheme: SchemeParams::default(),
            delta_grad: None,
            u0: InitialData::bump(1.0),
            p0: InitialData::bump(0.5),
            horizon: 0.2,
            snapshot_every: 50,
            out: PathBuf::from("out"),
            seed: 0,
            ladder: LadderConfig::default(),
        }
    }
}

/// Dotted-key view of a parsed file; lookups consume keys.
struct Keys(BTreeMap<String, toml::Value>);

impl Keys {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        let mut map = BTreeMap::new();
        flatten("", table, &mut map);
        Ok(Self(map))
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.0.remove(key) {
            None => Ok(default),
            Some(toml::Value::Float(v)) => Ok(v),
            Some(toml::Value::Integer(v)) => Ok(v as f64),
            Some(toml::Value::String(s)) => s.parse().map_err(|_| field(key, format!("`{s}` is not a number"))),
            Some(v) => Err(field(key, format!("expected a number, got {v}"))),
        }
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        if self.0.contains_key(key) {
            self.f64(key, 0.0).map(Some)
        } else {
            Ok(None)
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.0.remove(key) {
            None => Ok(default),
            Some(toml::Value::Integer(v)) if v >= 0 => Ok(v as usize),
            Some(v) => Err(field(key, format!("expected a nonnegative integer, got {v}"))),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.0.remove(key) {
            None => Ok(default),
            Some(toml::Value::Boolean(b)) => Ok(b),
            Some(v) => Err(field(key, format!("expected true or false, got {v}"))),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.0.remove(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(field(key, format!("expected a string, got {v}"))),
        }
    }

    fn pair(&mut self, key: &str, default: (f64, f64)) -> Result<(f64, f64), ConfigError> {
        match self.0.remove(key) {
            None => Ok(default),
            Some(toml::Value::Array(a)) if a.len() == 2 => {
                let num = |v: &toml::Value| match v {
                    toml::Value::Float(x) => Some(*x),
                    toml::Value::Integer(x) => Some(*x as f64),
                    _ => None,
                };
                match (num(&a[0]), num(&a[1])) {
                    (Some(x), Some(y)) => Ok((x, y)),
                    _ => Err(field(key, "expected two numbers")),
                }
            }
            Some(v) => Err(field(key, format!("expected [x, y], got {v}"))),
        }
    }

    fn initial(&mut self, key: &str, default: &InitialData) -> Result<InitialData, ConfigError> {
        let preset = self.string(&format!("{key}.preset"))?;
        let (dc, dw, da) = match default {
            InitialData::GaussianBump {
                center,
                width,
                amplitude,
            } => (*center, *width, *amplitude),
            _ => ((0.0, 0.0), 2.0, 1.0),
        };
        let center = self.pair(&format!("{key}.center"), dc)?;
        let width = self.f64(&format!("{key}.width"), dw)?;
        let amplitude = self.f64(&format!("{key}.amplitude"), da)?;
        let count = self.usize(&format!("{key}.count"), 4)?;
        let path = self.string(&format!("{key}.path"))?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(field(&format!("{key}.{name}"), format!("must be positive, got {v}")))
            }
        };
        let data = match preset.as_deref() {
            None if !matches!(default, InitialData::GaussianBump { .. }) => default.clone(),
            Some("zero") => InitialData::Zero,
            None | Some("gaussian_bump") => InitialData::GaussianBump {
                center,
                width,
                amplitude,
            },
            Some("random_bumps") => InitialData::RandomBumps {
                count,
                width,
                amplitude,
            },
            Some("file") => {
                let Some(p) = path else {
                    return Err(field(&format!("{key}.path"), "required by preset `file`"));
                };
                let p = PathBuf::from(p);
                if !p.exists() {
                    return Err(field(&format!("{key}.path"), format!("{} does not exist", p.display())));
                }
                InitialData::File(p)
            }
            Some(other) => {
                return Err(field(
                    &format!("{key}.preset"),
                    format!("unknown preset `{other}` (zero, gaussian_bump, random_bumps, file)"),
                ))
            }
        };
        match &data {
            InitialData::GaussianBump { width, amplitude, .. } | InitialData::RandomBumps { width, amplitude, .. } => {
                positive("width", *width)?;
                if !(*amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(field(&format!("{key}.amplitude"), "must be nonnegative"));
                }
            }
            _ => {}
        }
        Ok(data)
    }
}

fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            v => {
                out.insert(key, v);
            }
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut k = Keys::parse(text)?;
        let d = RunConfig::default();
        let ds = &d.scheme;
        let scheme = SchemeParams {
            beta: k.f64("scheme.beta", ds.beta)?,
            s: k.f64("scheme.s", ds.s)?,
            tau: k.f64("scheme.tau", ds.tau)?,
            eps: k.f64("scheme.eps", ds.eps)?,
            rho1: k.f64("scheme.rho1", ds.rho1)?,
            rho2: k.f64("scheme.rho2", ds.rho2)?,
            delta_grad: ds.delta_grad,
            theta: k.f64("scheme.theta", ds.theta)?,
            picard_tol: k.f64("scheme.picard_tol", ds.picard_tol)?,
            picard_max: k.usize("scheme.picard_max", ds.picard_max)?,
            inner_tol: k.f64("scheme.inner_tol", ds.inner_tol)?,
            inner_max: k.usize("scheme.inner_max", ds.inner_max)?,
            tol_neg: k.f64("scheme.tol_neg", ds.tol_neg)?,
            slack_rel: k.f64("scheme.slack_rel", ds.slack_rel)?,
            retry_halve_tau: k.bool("scheme.retry_halve_tau", ds.retry_halve_tau)?,
            tau_floor: k.f64("scheme.tau_floor", ds.tau_floor)?,
        };
        let dl = &d.ladder;
        let param = match k.string("ladder.param")? {
            None => dl.param,
            Some(s) => LadderParam::parse(&s).ok_or_else(|| {
                field(
                    "ladder.param",
                    format!("unknown parameter `{s}` (eps, tau, rho2, rho1, delta_grad)"),
                )
            })?,
        };
        let reference = match k.string("ladder.reference")?.as_deref() {
            None | Some("none") => Reference::None,
            Some("linear_flow") => Reference::LinearFlow,
            Some(s) => {
                return Err(field(
                    "ladder.reference",
                    format!("unknown reference `{s}` (none, linear_flow)"),
                ))
            }
        };
        let ladder = LadderConfig {
            param,
            start: k.opt_f64("ladder.start")?,
            ratio: k.f64("ladder.ratio", dl.ratio)?,
            count: k.usize("ladder.count", dl.count)?,
            horizon: k.f64("ladder.horizon", dl.horizon)?,
            box_fraction: k.f64("ladder.box_fraction", dl.box_fraction)?,
            terminal: TerminalValues {
                eps: k.f64("ladder.terminal_eps", dl.terminal.eps)?,
                tau: k.f64("ladder.terminal_tau", dl.terminal.tau)?,
                rho2: k.f64("ladder.terminal_rho2", dl.terminal.rho2)?,
            },
            reference,
        };
        let seed = match k.0.remove("run.seed") {
            None => d.seed,
            Some(toml::Value::Integer(v)) if v >= 0 => v as u64,
            Some(v) => return Err(field("run.seed", format!("expected a nonnegative integer, got {v}"))),
        };
        let cfg = RunConfig {
            n: k.usize("grid.N", d.n)?,
            l: k.f64("grid.L", d.l)?,
            delta_grad: k.opt_f64("scheme.delta_grad")?,
            scheme,
            u0: k.initial("initial.u", &d.u0)?,
            p0: k.initial("initial.p", &d.p0)?,
            horizon: k.f64("run.horizon", d.horizon)?,
            snapshot_every: k.usize("run.snapshot_every", d.snapshot_every)?,
            out: k.string("run.out")?.map_or(d.out, PathBuf::from),
            seed,
            ladder,
        };
        if let Some(key) = k.0.keys().next() {
            return Err(field(key, "unknown key"));
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parameter checks that need no initial data.
    pub fn check(&self) -> Result<(), ConfigError> {
        Grid::new(self.n, self.l).map_err(|e| field("grid", e.to_string()))?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(field(
                "run.horizon",
                format!("must be nonnegative, got {}", self.horizon),
            ));
        }
        if let Some(d) = self.delta_grad {
            if !(d > 0.0 && d.is_finite()) {
                return Err(field("scheme.delta_grad", format!("must be positive, got {d}")));
            }
        }
        let mut p = self.scheme.clone();
        p.delta_grad = self.delta_grad.unwrap_or(1e-8);
        p.validate().map_err(|e| field("scheme", e.to_string()))?;
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.n, self.l).expect("checked grid")
    }

    /// Builds the initial fields and fixes `delta_grad`.
    pub fn initial_state(&mut self) -> Result<(ScalarField, ScalarField), ConfigError> {
        let g = self.grid();
        let u = self.u0.build(&g, self.seed, 1, "initial.u")?;
        let p = self.p0.build(&g, self.seed, 2, "initial.p")?;
        for (key, f) in [("initial.u", &u), ("initial.p", &p)] {
            if f.min() < -NEG_TOLERANCE * f.max_abs() {
                return Err(field(
                    key,
                    format!("initial data must be nonnegative (min {:e})", f.min()),
                ));
            }
        }
        let scale = u.max_abs().powf(self.scheme.beta - 1.0);
        let dg = *self
            .delta_grad
            .get_or_insert(if scale > 0.0 { 1e-8 * scale } else { 1e-8 });
        self.scheme.delta_grad = dg;
        Ok((u, p))
    }

    /// Every key with its effective value.
    pub fn resolved(&self) -> String {
        let mut s = String::new();
        let f = |v: f64| format!("{v:?}");
        let p = &self.scheme;
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("grid.N", self.n.to_string());
        line("grid.L", f(self.l));
        line("scheme.beta", f(p.beta));
        line("scheme.s", f(p.s));
        line("scheme.tau", f(p.tau));
        line("scheme.eps", f(p.eps));
        line("scheme.rho1", f(p.rho1));
        line("scheme.rho2", f(p.rho2));
        if let Some(d) = self.delta_grad {
            line("scheme.delta_grad", f(d));
        }
        line("scheme.theta", f(p.theta));
        line("scheme.picard_tol", f(p.picard_tol));
        line("scheme.picard_max", p.picard_max.to_string());
        line("scheme.inner_tol", f(p.inner_tol));
        line("scheme.inner_max", p.inner_max.to_string());
        line("scheme.tol_neg", f(p.tol_neg));
        line("scheme.slack_rel", f(p.slack_rel));
        line("scheme.retry_halve_tau", p.retry_halve_tau.to_string());
        line("scheme.tau_floor", f(p.tau_floor));
        for (key, data) in [("initial.u", &self.u0), ("initial.p", &self.p0)] {
            match data {
                InitialData::Zero => line(&format!("{key}.preset"), "\"zero\"".into()),
                InitialData::GaussianBump {
                    center,
                    width,
                    amplitude,
                } => {
                    line(&format!("{key}.preset"), "\"gaussian_bump\"".into());
                    line(&format!("{key}.center"), format!("[{}, {}]", f(center.0), f(center.1)));
                    line(&format!("{key}.width"), f(*width));
                    line(&format!("{key}.amplitude"), f(*amplitude));
                }
                InitialData::RandomBumps {
                    count,
                    width,
                    amplitude,
                } => {
                    line(&format!("{key}.preset"), "\"random_bumps\"".into());
                    line(&format!("{key}.count"), count.to_string());
                    line(&format!("{key}.width"), f(*width));
                    line(&format!("{key}.amplitude"), f(*amplitude));
                }
                InitialData::File(path) => {
                    line(&format!("{key}.preset"), "\"file\"".into());
                    line(
                        &format!("{key}.path"),
                        toml::Value::from(path.display().to_string()).to_string(),
                    );
                }
            }
        }
        line("run.horizon", f(self.horizon));
        line("run.snapshot_every", self.snapshot_every.to_string());
        line("run.out", toml::Value::from(self.out.display().to_string()).to_string());
        line("run.seed", self.seed.to_string());
        let l = &self.ladder;
        line("ladder.param", format!("\"{}\"", l.param));
        if let Some(v) = l.start {
            line("ladder.start", f(v));
        }
        line("ladder.ratio", f(l.ratio));
        line("ladder.count", l.count.to_string());
        line("ladder.horizon", f(l.horizon));
        line("ladder.box_fraction", f(l.box_fraction));
        line("ladder.terminal_eps", f(l.terminal.eps));
        line("ladder.terminal_tau", f(l.terminal.tau));
        line("ladder.terminal_rho2", f(l.terminal.rho2));
        let reference = match l.reference {
            Reference::None => "none",
            Reference::LinearFlow => "linear_flow",
        };
        line("ladder.reference", format!("\"{reference}\""));
        s
    }
}
