//! Solver and estimate checks for the nonlocal porous-medium system
//!
//! ```text
//! d_t u = div(u grad p),    d_t p = -(-Delta)^s p + u^beta
//! ```
//!
//! on a periodic box. Time stepping uses a regularized implicit scheme whose
//! density update is a strictly convex minimization in `w = u^{beta-1}`; the
//! crate records the energy, mass and sign budgets of every step and checks them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod cli;
pub mod diagnostics;
pub mod energy;
pub mod exec;
pub mod ladder;
pub mod lattice;
pub mod stepper;

pub use lattice::{Grid, ScalarField};
