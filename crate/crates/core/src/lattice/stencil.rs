//! Two-point finite differences on the periodic grid.
//!
//! [`backward_divergence`] is the negative adjoint of [`forward_gradient`] in
//! the `h^2`-weighted inner product, so `-div(a grad w)` built from the pair is
//! symmetric and satisfies a discrete minimum principle for `a > 0`.

use super::{LatticeError, ScalarField};
use crate::exec;

/// `((w[i+e_x] - w[i])/h, (w[i+e_y] - w[i])/h)`.
pub fn forward_gradient(f: &ScalarField) -> (ScalarField, ScalarField) {
    let g = f.grid();
    let (n, h) = (g.n(), g.spacing());
    let v = f.values();
    let gx = exec::collect(v.len(), |i| {
        let (iy, ix) = (i / n, i % n);
        (v[iy * n + (ix + 1) % n] - v[i]) / h
    });
    let gy = exec::collect(v.len(), |i| {
        let (iy, ix) = (i / n, i % n);
        (v[((iy + 1) % n) * n + ix] - v[i]) / h
    });
    (ScalarField::from_parts(g, gx), ScalarField::from_parts(g, gy))
}

/// `(fx[i] - fx[i-e_x])/h + (fy[i] - fy[i-e_y])/h`.
pub fn backward_divergence(fx: &ScalarField, fy: &ScalarField) -> Result<ScalarField, LatticeError> {
    fx.ensure_same_grid(fy)?;
    let g = fx.grid();
    let (n, h) = (g.n(), g.spacing());
    let (a, b) = (fx.values(), fy.values());
    let out = exec::collect(a.len(), |i| {
        let (iy, ix) = (i / n, i % n);
        (a[i] - a[iy * n + (ix + n - 1) % n] + b[i] - b[((iy + n - 1) % n) * n + ix]) / h
    });
    Ok(ScalarField::from_parts(g, out))
}

/// Five-point Laplacian `D^-D^+ f`.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let (gx, gy) = forward_gradient(f);
    backward_divergence(&gx, &gy).expect("same grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;

    #[test]
    fn summation_by_parts() {
        let g = make_grid(8, 2.0).unwrap();
        let w = ScalarField::from_fn(&g, |x, y| (x * 1.3).sin() + y * y * 0.1);
        let fx = ScalarField::from_fn(&g, |x, y| (x + 2.0 * y).cos());
        let fy = ScalarField::from_fn(&g, |x, y| x * y);
        let (gx, gy) = forward_gradient(&w);
        let lhs = gx.dot(&fx) + gy.dot(&fy);
        let rhs = -w.dot(&backward_divergence(&fx, &fy).unwrap());
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn discrete_laplacian_stencil() {
        let g = make_grid(4, 2.0).unwrap();
        let mut v = vec![0.0; 16];
        v[5] = 1.0;
        let w = ScalarField::from_values(&g, v).unwrap();
        let (gx, gy) = forward_gradient(&w);
        let lap = backward_divergence(&gx, &gy).unwrap();
        let h2 = g.spacing() * g.spacing();
        assert!((lap.values()[5] + 4.0 / h2).abs() < 1e-12);
        for j in [4, 6, 1, 9] {
            assert!((lap.values()[j] - 1.0 / h2).abs() < 1e-12);
        }
        assert!(lap.integral().abs() < 1e-12);
    }
}
