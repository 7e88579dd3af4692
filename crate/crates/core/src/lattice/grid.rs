use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::LatticeError;
use crate::exec;

/// Periodic square lattice on `[-L, L)^2` with `N` points per side.
///
/// Values are stored row-major: index `iy * N + ix`, with `x = -L + ix * h`
/// and `y = -L + iy * h`.
///
/// Per-axis wavenumbers follow FFT order, `k_j = (pi / L) * m_j` with
/// `m_j = j` for `j < N/2` and `m_j = j - N` for `j > N/2`. The Nyquist index
/// `j = N/2` carries `m = -N/2` in [`Grid::raw_wavenumber`] but its operator
/// wavenumber ([`Grid::wavenumber`]) is zero: every derivative and multiplier
/// discards the unmatched mode.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    half_width: f64,
    spacing: f64,
    k: Arc<[f64]>,
    plans: Arc<Plans>,
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("half_width", &self.half_width)
            .field("spacing", &self.spacing)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.half_width.to_bits() == other.half_width.to_bits()
    }
}

/// Builds the periodic lattice. `n` must be even and at least 4, `half_width > 0`.
pub fn make_grid(n: usize, half_width: f64) -> Result<Grid, LatticeError> {
    Grid::new(n, half_width)
}

impl Grid {
    pub fn new(n: usize, half_width: f64) -> Result<Self, LatticeError> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(LatticeError::InvalidGrid(format!("N must be even and >= 4, got {n}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(LatticeError::InvalidGrid(format!(
                "L must be positive and finite, got {half_width}"
            )));
        }
        let spacing = 2.0 * half_width / n as f64;
        let base = std::f64::consts::PI / half_width;
        let k: Vec<f64> = (0..n)
            .map(|j| {
                if j == n / 2 {
                    0.0
                } else {
                    base * signed_index(j, n) as f64
                }
            })
            .collect();
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(Self {
            n,
            half_width,
            spacing,
            k: k.into(),
            plans: Arc::new(plans),
        })
    }

    /// Points per side.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Half-width `L` of the box.
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Quadrature weight of one cell, `h^2`.
    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_width * self.half_width
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }

    /// Physical position of flat index `idx`.
    pub fn position(&self, idx: usize) -> (f64, f64) {
        (self.coordinate(idx % self.n), self.coordinate(idx / self.n))
    }

    /// Operator wavenumber of axis index `j` (zero at Nyquist).
    pub fn wavenumber(&self, j: usize) -> f64 {
        self.k[j]
    }

    /// Signed FFT wavenumber, Nyquist reported as `-N/2 * pi / L`.
    pub fn raw_wavenumber(&self, j: usize) -> f64 {
        std::f64::consts::PI / self.half_width * signed_index(j, self.n) as f64
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    /// `(kx, ky)` of flat spectral index `idx`.
    pub fn wavevector(&self, idx: usize) -> (f64, f64) {
        (self.k[idx % self.n], self.k[idx / self.n])
    }

    /// `|k|^2` of flat spectral index `idx`.
    pub fn k_squared(&self, idx: usize) -> f64 {
        let (kx, ky) = self.wavevector(idx);
        kx * kx + ky * ky
    }

    /// Symbol of the five-point Laplacian `-D^-D^+` at flat spectral index `idx`,
    /// `4/h^2 (sin^2(pi jx/N) + sin^2(pi jy/N))`. Nonzero at Nyquist.
    pub fn difference_symbol(&self, idx: usize) -> f64 {
        let n = self.n;
        let h = self.spacing;
        let s = |j: usize| (std::f64::consts::PI * j as f64 / n as f64).sin().powi(2);
        4.0 / (h * h) * (s(idx % n) + s(idx / n))
    }

    /// Flat index of the mode `-k`.
    pub fn mirror_index(&self, idx: usize) -> usize {
        let n = self.n;
        let (jx, jy) = (idx % n, idx / n);
        ((n - jy) % n) * n + (n - jx) % n
    }

    /// Unnormalized forward 2-D DFT, in place.
    pub(crate) fn fft_forward(&self, buf: &mut [Complex64]) {
        self.fft2(buf, &self.plans.forward);
    }

    /// Inverse 2-D DFT including the `1/N^2` factor, in place.
    pub(crate) fn fft_inverse(&self, buf: &mut [Complex64]) {
        self.fft2(buf, &self.plans.inverse);
        let scale = 1.0 / self.len() as f64;
        exec::for_each_chunk_mut(buf, exec::CHUNK, |_, block| {
            for v in block {
                *v *= scale;
            }
        });
    }

    fn fft2(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n * n);
        let rows_per_task = (exec::CHUNK / n).max(1);
        let run_rows = |data: &mut [Complex64]| {
            exec::for_each_chunk_mut(data, rows_per_task * n, |_, block| {
                let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                plan.process_with_scratch(block, &mut scratch);
            });
        };
        run_rows(buf);
        let mut t = transpose(buf, n);
        run_rows(&mut t);
        let back = transpose(&t, n);
        buf.copy_from_slice(&back);
    }
}

fn signed_index(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

fn transpose(src: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); n * n];
    exec::for_each_chunk_mut(&mut out, n, |offset, row| {
        let r = offset / n;
        for (c, v) in row.iter_mut().enumerate() {
            *v = src[c * n + r];
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn small_grid_wavenumbers() {
        let g = make_grid(4, PI).unwrap();
        assert!((g.spacing() - PI / 2.0).abs() < 1e-15);
        assert_eq!(g.wavenumbers(), &[0.0, 1.0, 0.0, -1.0]);
        assert_eq!(g.raw_wavenumber(2), -2.0);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(make_grid(3, 1.0).is_err());
        assert!(make_grid(2, 1.0).is_err());
        assert!(make_grid(7, 1.0).is_err());
        assert!(make_grid(8, 0.0).is_err());
        assert!(make_grid(8, -1.0).is_err());
    }

    #[test]
    fn spacing_arithmetic() {
        let g = make_grid(128, 20.0).unwrap();
        assert_eq!(g.spacing(), 0.3125);
        assert_eq!(g.spacing() * g.n() as f64, 2.0 * g.half_width());
    }

    #[test]
    fn wavenumber_magnitudes_symmetric() {
        let g = make_grid(16, 3.0).unwrap();
        for idx in 0..g.len() {
            let m = g.mirror_index(idx);
            assert_eq!(g.k_squared(idx), g.k_squared(m));
        }
    }

    #[test]
    fn fft_round_trip() {
        let g = make_grid(16, 2.0).unwrap();
        let orig: Vec<Complex64> = (0..g.len())
            .map(|i| Complex64::new((i as f64 * 0.3).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut buf = orig.clone();
        g.fft_forward(&mut buf);
        g.fft_inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
