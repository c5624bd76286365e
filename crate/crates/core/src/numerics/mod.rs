//! Shared numerical building blocks: adaptive ODE integration with dense
//! output, adaptive Gauss-Kronrod quadrature, bracketed root finding and
//! grids.
//!
//! Everything here is pure. Solution objects are immutable once built and can
//! be shared across threads.

mod grid;
mod ode;
mod quad;
mod roots;

pub use grid::Grid;
pub use ode::{integrate_ode, propagate, DenseSolution, OdeOptions};
pub use quad::{quad, quad_points, QuadValue};
pub use roots::find_root;

use crate::error::{Result, SpectraError};
use serde::{Deserialize, Serialize};

/// Error control shared by the integrators, quadrature and root finder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64, max_steps: usize) -> Result<Self> {
        if !(abs_tol >= 0.0 && rel_tol >= 0.0) || !abs_tol.is_finite() || !rel_tol.is_finite() {
            return Err(SpectraError::input("tolerances must be finite and non-negative"));
        }
        if abs_tol + rel_tol <= 0.0 {
            return Err(SpectraError::input("abs_tol + rel_tol must be positive"));
        }
        if max_steps == 0 {
            return Err(SpectraError::input("max_steps must be at least 1"));
        }
        Ok(Tolerance {
            abs_tol,
            rel_tol,
            max_steps,
        })
    }

    /// Same step budget, both tolerances set to `tol`.
    pub fn uniform(tol: f64) -> Self {
        Tolerance {
            abs_tol: tol,
            rel_tol: tol,
            ..Tolerance::default()
        }
    }

    /// Scale both tolerances by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        Tolerance {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            max_steps: self.max_steps,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_steps: 10_000_000,
        }
    }
}
