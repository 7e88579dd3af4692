use super::{Grid, LatticeError};
use crate::exec;

/// Real samples on a [`Grid`], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    /// Wraps raw values; rejects a length mismatch or non-finite entries.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self, LatticeError> {
        if values.len() != grid.len() {
            return Err(LatticeError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        let f = Self {
            grid: grid.clone(),
            values,
        };
        f.ensure_finite()?;
        Ok(f)
    }

    /// Samples `f(x, y)` at every grid point.
    pub fn from_fn<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        let values = exec::collect(grid.len(), |i| {
            let (x, y) = grid.position(i);
            f(x, y)
        });
        Self {
            grid: grid.clone(),
            values,
        }
    }

    /// Internal constructor for values produced by our own operators.
    pub(crate) fn from_parts(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.n() + ix]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<(), LatticeError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(idx) => Err(LatticeError::NonFinite { index: idx }),
        }
    }

    pub(crate) fn ensure_same_grid(&self, other: &ScalarField) -> Result<(), LatticeError> {
        if self.grid != other.grid {
            return Err(LatticeError::GridMismatch);
        }
        Ok(())
    }

    /// Pointwise map.
    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let v = &self.values;
        Self::from_parts(&self.grid, exec::collect(v.len(), |i| f(v[i])))
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map<F>(&self, other: &ScalarField, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let (a, b) = (&self.values, &other.values);
        Self::from_parts(&self.grid, exec::collect(a.len(), |i| f(a[i], b[i])))
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    /// `h^2 * sum f`.
    pub fn integral(&self) -> f64 {
        let v = &self.values;
        self.grid.cell_area() * exec::sum(v.len(), |i| v[i])
    }

    /// `h^2 * sum g(f)`.
    pub fn integrate_with<F>(&self, g: F) -> f64
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let v = &self.values;
        self.grid.cell_area() * exec::sum(v.len(), |i| g(v[i]))
    }

    /// `h^2 * sum g(x, y, f)`.
    pub fn integrate_with_position<F>(&self, g: F) -> f64
    where
        F: Fn(f64, f64, f64) -> f64 + Sync + Send,
    {
        let v = &self.values;
        let grid = &self.grid;
        grid.cell_area()
            * exec::sum(v.len(), |i| {
                let (x, y) = grid.position(i);
                g(x, y, v[i])
            })
    }

    /// Discrete `L^2` inner product `h^2 * sum f g`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let (a, b) = (&self.values, &other.values);
        self.grid.cell_area() * exec::sum(a.len(), |i| a[i] * b[i])
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn min(&self) -> f64 {
        let v = &self.values;
        exec::min(v.len(), |i| v[i])
    }

    pub fn max(&self) -> f64 {
        let v = &self.values;
        exec::max(v.len(), |i| v[i])
    }

    pub fn max_abs(&self) -> f64 {
        let v = &self.values;
        exec::max(v.len(), |i| v[i].abs())
    }

    /// Largest `|f|` on the outer 10% frame of the box, `max(|x|, |y|) >= 0.9 L`.
    pub fn frame_max_abs(&self) -> f64 {
        let g = &self.grid;
        let edge = 0.9 * g.half_width();
        let v = &self.values;
        exec::max(v.len(), |i| {
            let (x, y) = g.position(i);
            if x.abs().max(y.abs()) >= edge {
                v[i].abs()
            } else {
                0.0
            }
        })
    }

    /// Boundary contamination: frame maximum relative to the field's peak.
    pub fn boundary_indicator(&self) -> f64 {
        let peak = self.max_abs();
        if peak == 0.0 {
            0.0
        } else {
            self.frame_max_abs() / peak
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;

    #[test]
    fn constant_integral_is_area() {
        let g = make_grid(16, 2.5).unwrap();
        let f = ScalarField::constant(&g, 3.0);
        assert!((f.integral() - 3.0 * 25.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_and_bad_length() {
        let g = make_grid(4, 1.0).unwrap();
        let mut v = vec![0.0; 16];
        v[5] = f64::NAN;
        assert!(matches!(
            ScalarField::from_values(&g, v),
            Err(LatticeError::NonFinite { index: 5 })
        ));
        assert!(ScalarField::from_values(&g, vec![0.0; 15]).is_err());
    }

    #[test]
    fn frame_indicator_sees_only_the_edge() {
        let g = make_grid(32, 10.0).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| if x.abs() < 5.0 && y.abs() < 5.0 { 2.0 } else { 0.0 });
        assert_eq!(f.boundary_indicator(), 0.0);
        let f = ScalarField::from_fn(&g, |x, _| if x < -9.5 { 1.0 } else { 4.0 });
        assert_eq!(f.boundary_indicator(), 1.0);
    }
}
