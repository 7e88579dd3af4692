//! Periodic computational domain, spectral operators, two-point difference
//! stencils, the principal-value quadrature for `(-Delta)^s`, cutoff functions
//! and snapshot files.

mod cutoff;
mod field;
mod grid;
pub mod quadrature;
pub mod snapshot;
pub mod spectral;
pub mod stencil;

pub(crate) use cutoff::least_squares_slope;
pub use cutoff::{
    cutoff_decay_study, cutoff_field, cutoff_fractional_laplacian_quadrature, CutoffKind, CutoffSpec, DecayRow,
    DecayStudy, EDGE_TOLERANCE,
};
pub use field::ScalarField;
pub use grid::{make_grid, Grid};
pub use quadrature::{fractional_laplacian_quadrature, pv_constant, PvQuadrature, QuadratureEstimate};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};
pub use spectral::{apply_multiplier, divergence, fractional_laplacian, gradient, laplacian};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field has a non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("exponent s = {0} outside the admissible range")]
    InvalidExponent(f64),
    #[error("invalid radius: {0}")]
    InvalidRadius(String),
    #[error("invalid cutoff: {0}")]
    InvalidCutoff(String),
    #[error("cutoff with radius {radius} does not fit in a box of half-width {half_width}")]
    SupportExceedsBox { radius: f64, half_width: f64 },
    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("malformed snapshot: {0}")]
    BadSnapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
