use crate::error::{Result, SpectraError};
use serde::{Deserialize, Serialize};

/// Strictly increasing sample points, at least two of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(SpectraError::input("a grid needs at least two points"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(SpectraError::input("grid points must be finite"));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SpectraError::input("grid points must be strictly increasing"));
        }
        Ok(Grid { points })
    }

    /// `n` equally spaced points from `a` to `b` inclusive.
    pub fn linspace(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 2 || !(a < b) {
            return Err(SpectraError::input(format!(
                "linspace needs n >= 2 and a < b (got n={n}, a={a}, b={b})"
            )));
        }
        let step = (b - a) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| a + step * i as f64).collect();
        points[n - 1] = b;
        Grid::new(points)
    }

    /// `n` logarithmically spaced points from `a` to `b` inclusive (`0 < a < b`).
    pub fn geomspace(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a > 0.0) {
            return Err(SpectraError::input("geomspace needs a positive start"));
        }
        let lg = Grid::linspace(a.ln(), b.ln(), n)?;
        let mut points: Vec<f64> = lg.points.iter().map(|t| t.exp()).collect();
        points[0] = a;
        points[n - 1] = b;
        Grid::new(points)
    }

    /// Uniform grid on `[a, b]` with at least `per_unit` points per unit length.
    pub fn per_unit(a: f64, b: f64, per_unit: usize) -> Result<Self> {
        let n = ((b - a) * per_unit as f64).ceil().max(1.0) as usize + 1;
        Grid::linspace(a, b, n)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.points
    }
}
