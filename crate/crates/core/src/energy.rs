//! Lyapunov functional, dissipation, masses and norm monitors.
//!
//! All integrals are `h^2`-weighted sums over the periodic grid. Gradients are
//! the forward differences of [`crate::lattice::stencil`], which is what the
//! time-stepping scheme differentiates with; quadratic pressure quantities are
//! evaluated mode by mode through Parseval, using the five-point symbol
//! `lambda_h(k)` for `|D^+ p|^2` and `|k|^{2s}` for the fractional part.

use thiserror::Error;

use crate::lattice::spectral::{self, fractional_symbol};
use crate::lattice::stencil;
use crate::lattice::{Grid, LatticeError, ScalarField};

/// Values of `u` below `-NEG_TOLERANCE * max|u|` are rejected.
pub const NEG_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("beta must exceed 1, got {0}")]
    InvalidBeta(f64),
    #[error("density is negative beyond tolerance (min {min:e}, scale {scale:e})")]
    NegativeDensity { min: f64, scale: f64 },
    #[error("invalid norm: {0}")]
    InvalidNorm(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// `H = bulk + dirichlet` with `bulk = int u^beta/(beta-1)` and
/// `dirichlet = int |D^+ p|^2 / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub energy: f64,
    pub bulk: f64,
    pub dirichlet: f64,
    /// `int |(-Delta)^{s/2} D^+ p|^2`, zero when no `s` was given.
    pub dissipation: f64,
    pub mass_u: f64,
    pub mass_p: f64,
}

fn check_beta(beta: f64) -> Result<(), EnergyError> {
    if beta > 1.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(EnergyError::InvalidBeta(beta))
    }
}

/// `int u_+^beta`, rejecting densities that are negative beyond tolerance.
pub fn power_integral(u: &ScalarField, beta: f64) -> Result<f64, EnergyError> {
    let scale = u.max_abs();
    let min = u.min();
    if min < -NEG_TOLERANCE * scale {
        return Err(EnergyError::NegativeDensity { min, scale });
    }
    Ok(u.integrate_with(|v| v.max(0.0).powf(beta)))
}

pub fn lyapunov_energy(
    u: &ScalarField,
    p: &ScalarField,
    beta: f64,
    s: Option<f64>,
) -> Result<EnergyReport, EnergyError> {
    check_beta(beta)?;
    u.ensure_finite()?;
    p.ensure_finite()?;
    if u.grid() != p.grid() {
        return Err(LatticeError::GridMismatch.into());
    }
    let bulk = power_integral(u, beta)? / (beta - 1.0);
    let spec = spectral::forward(p);
    let g = p.grid();
    let dirichlet = 0.5 * spec.weighted_energy_indexed(|i| g.difference_symbol(i));
    let dissipation = match s {
        Some(s) => {
            spectral::check_exponent(s)?;
            spec.weighted_energy_indexed(|i| fractional_symbol(g.k_squared(i), s) * g.difference_symbol(i))
        }
        None => 0.0,
    };
    Ok(EnergyReport {
        energy: bulk + dirichlet,
        bulk,
        dirichlet,
        dissipation,
        mass_u: u.integral(),
        mass_p: p.integral(),
    })
}

/// `int |(-Delta)^{s/2} D^+ p|^2 = h^2/N^2 sum |k|^{2s} lambda_h(k) |p_k|^2`.
pub fn dissipation(p: &ScalarField, s: f64) -> Result<f64, EnergyError> {
    spectral::check_exponent(s)?;
    p.ensure_finite()?;
    let g = p.grid();
    Ok(spectral::forward(p).weighted_energy_indexed(|i| fractional_symbol(g.k_squared(i), s) * g.difference_symbol(i)))
}

/// `int (D^-D^+ p)^2`.
pub fn laplacian_energy(p: &ScalarField) -> f64 {
    let g = p.grid();
    spectral::forward(p).weighted_energy_indexed(|i| g.difference_symbol(i).powi(2))
}

/// `int |D^+ f|^2`.
pub fn gradient_energy(f: &ScalarField) -> f64 {
    let g = f.grid();
    spectral::forward(f).weighted_energy_indexed(|i| g.difference_symbol(i))
}

/// Confinement weight `gamma(x) = sqrt(1 + |x|^2)` centered at the box center.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField(ScalarField);

impl WeightField {
    pub fn new(grid: &Grid) -> Self {
        Self(ScalarField::from_fn(grid, |x, y| (1.0 + x * x + y * y).sqrt()))
    }

    pub fn field(&self) -> &ScalarField {
        &self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Norm {
    /// `(int |f|^q)^{1/q}`.
    Lebesgue(f64),
    Sup,
    /// `(int |f|^q gamma)^{1/q}`.
    Weighted(f64),
    /// `(int |grad f|^q)^{1/q}`.
    GradientSeminorm(f64),
    /// `(int |f|^q + |grad f|^q)^{1/q}`.
    Sobolev1(f64),
    /// `(int (1 + |k|^2)^sigma |f_k|^2)^{1/2}`.
    Bessel(f64),
}

/// Discrete norm of `f`.
pub fn norm(f: &ScalarField, spec: Norm) -> Result<f64, EnergyError> {
    f.ensure_finite()?;
    let check_q = |q: f64| {
        if q >= 1.0 && q.is_finite() {
            Ok(q)
        } else {
            Err(EnergyError::InvalidNorm(format!("exponent q = {q} must be >= 1")))
        }
    };
    Ok(match spec {
        Norm::Lebesgue(q) => {
            let q = check_q(q)?;
            f.integrate_with(|v| v.abs().powf(q)).powf(1.0 / q)
        }
        Norm::Sup => f.max_abs(),
        Norm::Weighted(q) => {
            let q = check_q(q)?;
            let gamma = WeightField::new(f.grid());
            f.zip_map(gamma.field(), |v, w| v.abs().powf(q) * w)
                .integral()
                .powf(1.0 / q)
        }
        Norm::GradientSeminorm(q) => {
            let q = check_q(q)?;
            gradient_power_integral(f, q)?.powf(1.0 / q)
        }
        Norm::Sobolev1(q) => {
            let q = check_q(q)?;
            let grad = gradient_power_integral(f, q)?;
            (f.integrate_with(|v| v.abs().powf(q)) + grad).powf(1.0 / q)
        }
        Norm::Bessel(sigma) => spectral::forward(f)
            .weighted_energy(|kx, ky| (1.0 + kx * kx + ky * ky).powf(sigma))
            .sqrt(),
    })
}

fn gradient_power_integral(f: &ScalarField, q: f64) -> Result<f64, EnergyError> {
    let (gx, gy) = stencil::forward_gradient(f);
    Ok(gx.zip_map(&gy, |a, b| (a * a + b * b).sqrt().powf(q)).integral())
}

/// Space-time integrability exponent `r = (3 beta^2 + beta - 2) / (2 beta)`.
pub fn interpolation_exponent(beta: f64) -> Result<f64, EnergyError> {
    check_beta(beta)?;
    let r = (3.0 * beta * beta + beta - 2.0) / (2.0 * beta);
    debug_assert!(r > beta);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;
    use std::f64::consts::PI;

    #[test]
    fn zero_fields_have_zero_energy() {
        let g = make_grid(16, 4.0).unwrap();
        let z = ScalarField::zeros(&g);
        let r = lyapunov_energy(&z, &z, 2.0, Some(0.5)).unwrap();
        assert_eq!(r.energy, 0.0);
        assert_eq!(r.dissipation, 0.0);
    }

    #[test]
    fn constant_closed_form() {
        let g = make_grid(16, 3.0).unwrap();
        let (c, beta) = (1.7, 2.5);
        let u = ScalarField::constant(&g, c);
        let p = ScalarField::constant(&g, 4.0);
        let r = lyapunov_energy(&u, &p, beta, Some(0.6)).unwrap();
        let expect = 36.0 * c.powf(beta) / (beta - 1.0);
        assert!((r.energy - expect).abs() < 1e-12 * expect);
        assert!(r.dirichlet.abs() < 1e-20);
        assert!((r.mass_p - 144.0).abs() < 1e-11);
    }

    #[test]
    fn single_mode_dissipation() {
        let g = make_grid(32, PI).unwrap();
        let p = ScalarField::from_fn(&g, |x, _| x.cos());
        let h = g.spacing();
        let lambda = 4.0 * (h / 2.0).sin().powi(2) / (h * h);
        let d = dissipation(&p, 0.5).unwrap();
        assert!((d - 2.0 * PI * PI * lambda).abs() < 1e-11, "{d}");
        let e = gradient_energy(&p);
        assert!((e - 2.0 * PI * PI * lambda).abs() < 1e-11, "{e}");
        let (gx, gy) = stencil::forward_gradient(&p);
        assert!((gx.dot(&gx) + gy.dot(&gy) - e).abs() < 1e-11);
    }

    #[test]
    fn dissipation_translation_invariant() {
        let g = make_grid(32, 4.0).unwrap();
        let p = ScalarField::from_fn(&g, |x, y| (-(x * x + 2.0 * y * y)).exp());
        let n = g.n();
        let rolled = (0..n * n)
            .map(|i| p.values()[(i / n) * n + (i % n + n - 5) % n])
            .collect();
        let shifted = ScalarField::from_values(&g, rolled).unwrap();
        let (a, b) = (dissipation(&p, 0.7).unwrap(), dissipation(&shifted, 0.7).unwrap());
        assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = make_grid(8, 1.0).unwrap();
        let u = ScalarField::constant(&g, -1.0);
        let z = ScalarField::zeros(&g);
        assert!(matches!(
            lyapunov_energy(&z, &z, 1.0, None),
            Err(EnergyError::InvalidBeta(_))
        ));
        assert!(matches!(
            lyapunov_energy(&u, &z, 2.0, None),
            Err(EnergyError::NegativeDensity { .. })
        ));
        assert!(norm(&z, Norm::Lebesgue(0.5)).is_err());
        assert!(interpolation_exponent(1.0).is_err());
    }

    #[test]
    fn constant_lq_norm() {
        let g = make_grid(16, 2.0).unwrap();
        let one = ScalarField::constant(&g, 1.0);
        for q in [1.0, 2.0, 3.5] {
            let n = norm(&one, Norm::Lebesgue(q)).unwrap();
            assert!((n - 16f64.powf(1.0 / q)).abs() < 1e-12);
        }
        assert!(norm(&one, Norm::Weighted(2.0)).unwrap() >= norm(&one, Norm::Lebesgue(2.0)).unwrap());
    }

    #[test]
    fn interpolation_values() {
        assert_eq!(interpolation_exponent(2.0).unwrap(), 3.0);
        assert!((interpolation_exponent(3.0).unwrap() - 14.0 / 3.0).abs() < 1e-15);
    }
}
