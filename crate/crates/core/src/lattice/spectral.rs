//! Fourier-multiplier operators on the periodic lattice.
//!
//! All symbols use the operator wavenumbers of [`Grid`], so the Nyquist mode
//! is annihilated consistently by derivatives, the Laplacian and `(-Delta)^s`;
//! in particular `divergence(gradient(f)) == laplacian(f)` to round-off.

use num_complex::Complex64;

use super::{Grid, LatticeError, ScalarField};
use crate::exec;

/// Spectrum of a real field (unnormalized DFT coefficients).
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `sum_k weight(k) |f_k|^2` scaled so that `weight == 1` gives `h^2 sum f^2`.
    pub fn weighted_energy<W>(&self, weight: W) -> f64
    where
        W: Fn(f64, f64) -> f64 + Sync + Send,
    {
        let g = &self.grid;
        let c = &self.coeffs;
        let norm = g.cell_area() / g.len() as f64;
        norm * exec::sum(c.len(), |i| {
            let (kx, ky) = g.wavevector(i);
            weight(kx, ky) * c[i].norm_sqr()
        })
    }

    /// Like [`Spectrum::weighted_energy`] with the weight given per flat mode index.
    pub fn weighted_energy_indexed<W>(&self, weight: W) -> f64
    where
        W: Fn(usize) -> f64 + Sync + Send,
    {
        let g = &self.grid;
        let c = &self.coeffs;
        let norm = g.cell_area() / g.len() as f64;
        norm * exec::sum(c.len(), |i| weight(i) * c[i].norm_sqr())
    }

    /// Applies a real, even symbol and transforms back.
    pub fn apply<S>(&self, symbol: S) -> ScalarField
    where
        S: Fn(f64, f64) -> f64 + Sync + Send,
    {
        let g = &self.grid;
        self.apply_indexed(|idx| {
            let (kx, ky) = g.wavevector(idx);
            symbol(kx, ky)
        })
    }

    /// Applies a real, even symbol given per flat mode index.
    pub fn apply_indexed<S>(&self, symbol: S) -> ScalarField
    where
        S: Fn(usize) -> f64 + Sync + Send,
    {
        let g = &self.grid;
        let mut buf = self.coeffs.clone();
        exec::for_each_chunk_mut(&mut buf, exec::CHUNK, |offset, block| {
            for (j, v) in block.iter_mut().enumerate() {
                *v *= symbol(offset + j);
            }
        });
        real_inverse(g, buf)
    }
}

pub fn forward(f: &ScalarField) -> Spectrum {
    let g = f.grid();
    let mut buf: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    g.fft_forward(&mut buf);
    Spectrum {
        grid: g.clone(),
        coeffs: buf,
    }
}

fn real_inverse(g: &Grid, mut buf: Vec<Complex64>) -> ScalarField {
    g.fft_inverse(&mut buf);
    ScalarField::from_parts(g, buf.iter().map(|c| c.re).collect())
}

/// Applies the real even multiplier `symbol(kx, ky)` to `f`.
pub fn apply_multiplier<S>(f: &ScalarField, symbol: S) -> Result<ScalarField, LatticeError>
where
    S: Fn(f64, f64) -> f64 + Sync + Send,
{
    f.ensure_finite()?;
    Ok(forward(f).apply(symbol))
}

/// Spectral gradient `(df/dx, df/dy)`; both components come out of one inverse
/// transform as the real and imaginary parts of `ifft((i kx - ky) f_k)`.
pub fn gradient(f: &ScalarField) -> Result<(ScalarField, ScalarField), LatticeError> {
    f.ensure_finite()?;
    Ok(gradient_of(&forward(f)))
}

pub(crate) fn gradient_of(spec: &Spectrum) -> (ScalarField, ScalarField) {
    let g = &spec.grid;
    let mut buf = spec.coeffs.clone();
    exec::for_each_chunk_mut(&mut buf, exec::CHUNK, |offset, block| {
        for (j, v) in block.iter_mut().enumerate() {
            let (kx, ky) = g.wavevector(offset + j);
            *v *= Complex64::new(-ky, kx);
        }
    });
    g.fft_inverse(&mut buf);
    let gx = buf.iter().map(|c| c.re).collect();
    let gy = buf.iter().map(|c| c.im).collect();
    (ScalarField::from_parts(g, gx), ScalarField::from_parts(g, gy))
}

/// Spectral divergence of `(vx, vy)`. The pair is packed into one complex
/// transform and split with the Hermitian symmetry of real spectra.
pub fn divergence(vx: &ScalarField, vy: &ScalarField) -> Result<ScalarField, LatticeError> {
    vx.ensure_same_grid(vy)?;
    vx.ensure_finite()?;
    vy.ensure_finite()?;
    Ok(divergence_unchecked(vx, vy))
}

pub(crate) fn divergence_unchecked(vx: &ScalarField, vy: &ScalarField) -> ScalarField {
    let g = vx.grid();
    let mut z: Vec<Complex64> = vx
        .values()
        .iter()
        .zip(vy.values())
        .map(|(&a, &b)| Complex64::new(a, b))
        .collect();
    g.fft_forward(&mut z);
    let packed = z;
    let mut out = vec![Complex64::default(); packed.len()];
    exec::for_each_chunk_mut(&mut out, exec::CHUNK, |offset, block| {
        for (j, v) in block.iter_mut().enumerate() {
            let idx = offset + j;
            let zk = packed[idx];
            let zm = packed[g.mirror_index(idx)].conj();
            let fx = (zk + zm) * 0.5;
            let fy = (zk - zm) * Complex64::new(0.0, -0.5);
            let (kx, ky) = g.wavevector(idx);
            *v = Complex64::new(0.0, kx) * fx + Complex64::new(0.0, ky) * fy;
        }
    });
    real_inverse(g, out)
}

/// Spectral Laplacian, symbol `-|k|^2`.
pub fn laplacian(f: &ScalarField) -> Result<ScalarField, LatticeError> {
    apply_multiplier(f, |kx, ky| -(kx * kx + ky * ky))
}

/// `(-Delta)^s f` as the multiplier `|k|^{2s}`; the zero mode maps to zero.
pub fn fractional_laplacian(f: &ScalarField, s: f64) -> Result<ScalarField, LatticeError> {
    check_exponent(s)?;
    apply_multiplier(f, move |kx, ky| fractional_symbol(kx * kx + ky * ky, s))
}

/// `|k|^{2s}` written in terms of `|k|^2`.
pub fn fractional_symbol(k2: f64, s: f64) -> f64 {
    if k2 == 0.0 {
        0.0
    } else {
        k2.powf(s)
    }
}

pub(crate) fn check_exponent(s: f64) -> Result<(), LatticeError> {
    if s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(LatticeError::InvalidExponent(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;
    use std::f64::consts::PI;

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = make_grid(16, 3.0).unwrap();
        let (gx, gy) = gradient(&ScalarField::constant(&g, 5.0)).unwrap();
        assert!(gx.max_abs() < 1e-14 && gy.max_abs() < 1e-14);
    }

    #[test]
    fn gradient_of_single_mode() {
        let g = make_grid(32, 4.0).unwrap();
        let w = PI / 4.0;
        let f = ScalarField::from_fn(&g, |x, _| (w * x).sin());
        let (gx, gy) = gradient(&f).unwrap();
        let expect = ScalarField::from_fn(&g, |x, _| w * (w * x).cos());
        assert!(gx.sub(&expect).max_abs() < 1e-13);
        assert!(gy.max_abs() < 1e-13);
    }

    #[test]
    fn nyquist_mode_has_no_derivative() {
        let g = make_grid(8, 1.0).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| (PI * 4.0 * x).cos() + (PI * 4.0 * y).cos());
        let (gx, gy) = gradient(&f).unwrap();
        assert!(gx.max_abs() < 1e-13 && gy.max_abs() < 1e-13);
        assert!(fractional_laplacian(&f, 0.5).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn cosine_multiplier() {
        let g = make_grid(32, PI).unwrap();
        let f = ScalarField::from_fn(&g, |x, _| (2.0 * x).cos());
        for s in [0.3, 0.5, 0.75, 1.0] {
            let out = fractional_laplacian(&f, s).unwrap();
            let expect = f.scale(4f64.powf(s));
            assert!(out.sub(&expect).max_abs() <= 1e-12 * 4f64.powf(s));
        }
    }

    #[test]
    fn exponent_range() {
        let g = make_grid(8, 1.0).unwrap();
        let f = ScalarField::zeros(&g);
        assert!(fractional_laplacian(&f, 0.0).is_err());
        assert!(fractional_laplacian(&f, 1.5).is_err());
        assert!(fractional_laplacian(&f, 1.0).is_ok());
    }
}
