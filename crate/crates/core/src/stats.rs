//! Least-squares fits used by the bound-verification sweeps.

use crate::error::{Result, SpectraError};
use serde::{Deserialize, Serialize};

/// `y ≈ intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(SpectraError::input("linear fit needs at least two (x, y) pairs"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(SpectraError::input("linear fit needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LinearFit {
        intercept,
        slope,
        r_squared,
    })
}

/// Fit `y ≈ c * x^(-exponent)` on positive data; returns `(c, exponent, R²)`
/// of the log-log regression.
pub fn power_law_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(SpectraError::input("power-law fit needs positive data"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let f = linear_fit(&lx, &ly)?;
    Ok((f.intercept.exp(), -f.slope, f.r_squared))
}

/// Smallest `(a, b)` with `a + b * x_i >= y_i` for all points, anchored at the
/// two extreme abscissae: `b` is the slope between the first and last point
/// and `a` is then raised until the line dominates every sample.
pub fn affine_envelope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(SpectraError::input("envelope needs at least two points"));
    }
    let (i0, i1) = (0, xs.len() - 1);
    let b = ((ys[i1] - ys[i0]) / (xs[i1] - xs[i0])).max(0.0);
    let a = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| y - b * x)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((a, b))
}
