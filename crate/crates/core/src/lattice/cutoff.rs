use std::f64::consts::PI;

use super::quadrature::{self, PvQuadrature};
use super::{spectral, Grid, LatticeError, ScalarField};

/// Tail value of an algebraic cutoff allowed at the box edge.
pub const EDGE_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CutoffKind {
    /// `(1 + |x/R|^2)^{-alpha/2}`.
    Algebraic { alpha: f64 },
    /// 1 inside `R`, 0 outside `2R`, half-cosine ramp in between.
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffSpec {
    pub kind: CutoffKind,
    pub radius: f64,
}

impl CutoffSpec {
    pub fn algebraic(alpha: f64, radius: f64) -> Result<Self, LatticeError> {
        let spec = Self {
            kind: CutoffKind::Algebraic { alpha },
            radius,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn cosine(radius: f64) -> Result<Self, LatticeError> {
        let spec = Self {
            kind: CutoffKind::Cosine,
            radius,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        if !(self.radius >= 1.0 && self.radius.is_finite()) {
            return Err(LatticeError::InvalidCutoff(format!(
                "radius must be >= 1, got {}",
                self.radius
            )));
        }
        if let CutoffKind::Algebraic { alpha } = self.kind {
            if !(alpha > 4.0) {
                return Err(LatticeError::InvalidCutoff(format!(
                    "algebraic exponent must exceed 4, got {alpha}"
                )));
            }
        }
        Ok(())
    }

    /// Cutoff value at distance `r` from the origin.
    pub fn value(&self, r: f64) -> f64 {
        let rr = self.radius;
        match self.kind {
            CutoffKind::Algebraic { alpha } => {
                let t = r / rr;
                (1.0 + t * t).powf(-alpha / 2.0)
            }
            CutoffKind::Cosine => {
                if r < rr {
                    1.0
                } else if r > 2.0 * rr {
                    0.0
                } else {
                    0.5 * ((PI * (r / rr - 1.0)).cos() + 1.0)
                }
            }
        }
    }
}

/// Samples the cutoff on the grid, centered at the origin.
pub fn cutoff_field(spec: &CutoffSpec, grid: &Grid) -> Result<ScalarField, LatticeError> {
    spec.validate()?;
    let l = grid.half_width();
    let fits = match spec.kind {
        CutoffKind::Cosine => 2.0 * spec.radius <= l,
        CutoffKind::Algebraic { .. } => spec.value(l) <= EDGE_TOLERANCE,
    };
    if !fits {
        return Err(LatticeError::SupportExceedsBox {
            radius: spec.radius,
            half_width: l,
        });
    }
    Ok(ScalarField::from_fn(grid, |x, y| spec.value((x * x + y * y).sqrt())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayRow {
    pub radius: f64,
    pub sup_norm: f64,
    /// `-log(sup_i / sup_{i-1}) / log(R_i / R_{i-1})`.
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayStudy {
    pub alpha: f64,
    pub s: f64,
    pub rows: Vec<DecayRow>,
    /// Least-squares decay exponent `p` in `sup ~ C R^{-p}`.
    pub fitted_exponent: f64,
}

impl DecayStudy {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_norm < w[0].sup_norm)
    }
}

/// Sup norms of `(-Delta)^s eta_R` on `grid` for each radius.
pub fn cutoff_decay_study(alpha: f64, s: f64, radii: &[f64], grid: &Grid) -> Result<DecayStudy, LatticeError> {
    if !(s > 0.0 && s < 1.0) {
        return Err(LatticeError::InvalidExponent(s));
    }
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LatticeError::InvalidCutoff(
            "radii must be nonempty and increasing".into(),
        ));
    }
    if grid.spacing() > radii[0] / 4.0 {
        return Err(LatticeError::GridTooSmall(format!(
            "spacing {} does not resolve R = {}",
            grid.spacing(),
            radii[0]
        )));
    }
    let mut rows: Vec<DecayRow> = Vec::with_capacity(radii.len());
    for &radius in radii {
        let spec = CutoffSpec::algebraic(alpha, radius)?;
        let eta = cutoff_field(&spec, grid).map_err(|e| match e {
            LatticeError::SupportExceedsBox { .. } => LatticeError::GridTooSmall(format!(
                "box half-width {} too small for R = {radius}",
                grid.half_width()
            )),
            other => other,
        })?;
        let sup_norm = spectral::fractional_laplacian(&eta, s)?.max_abs();
        let rate = rows
            .last()
            .map(|prev| -(sup_norm / prev.sup_norm).ln() / (radius / prev.radius).ln());
        rows.push(DecayRow { radius, sup_norm, rate });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.radius.ln(), r.sup_norm.ln())).collect();
    Ok(DecayStudy {
        alpha,
        s,
        rows,
        fitted_exponent: -least_squares_slope(&pts),
    })
}

/// `(-Delta)^s eta_R` at a point by the principal-value quadrature.
pub fn cutoff_fractional_laplacian_quadrature(
    spec: &CutoffSpec,
    s: f64,
    x: (f64, f64),
    q: &PvQuadrature,
) -> Result<quadrature::QuadratureEstimate, LatticeError> {
    spec.validate()?;
    let f = |a: f64, b: f64| spec.value((a * a + b * b).sqrt());
    quadrature::evaluate(q, &f, s, x)
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return 0.0;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}
