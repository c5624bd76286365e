//! Spectral density of the eventually periodic operator `-d² + V0 + V_L` on
//! the half line with a Dirichlet condition at 0, computed two ways:
//!
//! - from the Prüfer amplitude at `L`: `dμ_L/dE = 2 / (π ω R(L, E)²)`;
//! - from the Weyl m-function: `dμ_L/dE = lim (1/π) Im m(E + iε)`.
//!
//! Also hosts the separate-set machinery built on Prüfer integrals.

use crate::error::{Result, SpectraError};
use crate::floquet::{complex_transfer_matrix, floquet_data, solve_complex, FloquetData};
use crate::numerics::{quad_points, Tolerance};
use crate::potentials::{DecayingPotential, PeriodicPotential, Potential, SumPotential, TruncatedPotential};
use crate::pruefer::{pruefer_flow_with, PrueferInit, PrueferTrajectory};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    PrueferFormula,
    WeylM,
}

impl std::fmt::Display for DensityMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DensityMethod::PrueferFormula => "prufer_formula",
            DensityMethod::WeylM => "weyl_m",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensitySample {
    pub energy: f64,
    pub density: f64,
    pub method: DensityMethod,
    pub length: f64,
    /// Smallest imaginary offset used (Weyl route only).
    pub eps: Option<f64>,
    /// Spread of the last two ε values (Weyl route only).
    pub uncertainty: Option<f64>,
    /// `(ε, (1/π) Im m(E + iε))` along the sequence (Weyl route only).
    pub sequence: Vec<(f64, f64)>,
    /// Set when `|value(ε) - extrapolated|` fails to decrease along the sequence.
    pub warning: bool,
}

/// `m(z) = ψ'(0)/ψ(0)` for the solution `ψ` that is square integrable at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylM {
    pub z: Complex64,
    pub m: Complex64,
}

/// Density from the Prüfer amplitude of the Dirichlet solution at `L`.
pub fn density_prufer(
    v0: &PeriodicPotential,
    v: &DecayingPotential,
    length: f64,
    energy: f64,
    tol: &Tolerance,
) -> Result<SpectralDensitySample> {
    let data = floquet_data(v0, energy, tol)?;
    density_prufer_with(&data, v, length, tol)
}

pub fn density_prufer_with(
    data: &FloquetData,
    v: &DecayingPotential,
    length: f64,
    tol: &Tolerance,
) -> Result<SpectralDensitySample> {
    let vl = TruncatedPotential::new(v.clone(), length)?;
    let traj = pruefer_flow_with(data, &vl, length, PrueferInit::dirichlet(data), tol)?;
    let r2 = (2.0 * traj.final_ln_r()).exp();
    Ok(SpectralDensitySample {
        energy: data.energy(),
        density: 2.0 / (PI * data.omega() * r2),
        method: DensityMethod::PrueferFormula,
        length,
        eps: None,
        uncertainty: None,
        sequence: Vec::new(),
        warning: false,
    })
}

/// Weyl m-function of `V0 + V_L` at `z` with `Im z > 0`.
pub fn m_function(
    v0: &PeriodicPotential,
    v: &DecayingPotential,
    length: f64,
    z: Complex64,
    tol: &Tolerance,
) -> Result<WeylM> {
    if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(SpectraError::input(format!("m-function needs Im z > 0, got {z}")));
    }
    let vl = TruncatedPotential::new(v.clone(), length)?;
    // beyond L the potential is V0 alone
    let q = complex_transfer_matrix(v0, z, (length, length + 1.0), tol)?;
    let [[a, b], [c, d]] = q;
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - 4.0 * det).sqrt();
    let l1 = 0.5 * (tr + disc);
    let l2 = 0.5 * (tr - disc);
    let lambda = if l1.norm() < l2.norm() { l1 } else { l2 };
    if (lambda.norm() - 1.0).abs() < 1e-9 {
        return Err(SpectraError::Precision(format!(
            "Floquet multipliers at z = {z} are within 1e-9 of the unit circle; increase Im z or tighten the tolerance"
        )));
    }
    let e1 = (b, lambda - a);
    let e2 = (lambda - d, c);
    let (psi, dpsi) = if e1.0.norm() + e1.1.norm() >= e2.0.norm() + e2.1.norm() {
        e1
    } else {
        e2
    };
    let sum = SumPotential::new(v0, &vl);
    let (p0, dp0) = solve_complex(&sum, z, (length, 0.0), (psi, dpsi), tol)?;
    if p0.norm() == 0.0 {
        return Err(SpectraError::Precision(format!("decaying solution vanishes at 0 for z = {z}")));
    }
    Ok(WeylM { z, m: dp0 / p0 })
}

/// `(1/π) Im m(E + iε)` along a decreasing `ε` sequence, extrapolated linearly
/// in `ε` from the last two values.
pub fn density_weyl(
    v0: &PeriodicPotential,
    v: &DecayingPotential,
    length: f64,
    energy: f64,
    eps_sequence: &[f64],
    tol: &Tolerance,
) -> Result<SpectralDensitySample> {
    if eps_sequence.is_empty() {
        return Err(SpectraError::input("empty ε sequence"));
    }
    if eps_sequence.iter().any(|e| !(*e > 0.0)) || eps_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SpectraError::input("ε sequence must be positive and strictly decreasing"));
    }
    floquet_data(v0, energy, tol)?;
    let sequence: Vec<(f64, f64)> = eps_sequence
        .iter()
        .map(|&eps| {
            m_function(v0, v, length, Complex64::new(energy, eps), tol).map(|w| (eps, w.m.im / PI))
        })
        .collect::<Result<_>>()?;
    let n = sequence.len();
    let (density, uncertainty) = if n == 1 {
        (sequence[0].1, None)
    } else {
        let (ea, fa) = sequence[n - 2];
        let (eb, fb) = sequence[n - 1];
        (fb - eb * (fa - fb) / (ea - eb), Some((fa - fb).abs()))
    };
    let gaps: Vec<f64> = sequence.iter().map(|(_, f)| (f - density).abs()).collect();
    let warning = gaps.windows(2).any(|w| w[1] > w[0] && w[1] > 1e-12 * density.abs().max(1e-300));
    Ok(SpectralDensitySample {
        energy,
        density,
        method: DensityMethod::WeylM,
        length,
        eps: Some(eps_sequence[n - 1]),
        uncertainty,
        sequence,
        warning,
    })
}

/// Sampled version of `H = L²((0, L), (1 + x) dx)`: composite Simpson nodes
/// on `[0, L]` with the weight folded into the quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedL2 {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedL2 {
    pub fn new(length: f64, intervals: usize) -> Result<Self> {
        if !(length > 0.0) || intervals < 2 {
            return Err(SpectraError::input("weighted space needs L > 0 and at least two intervals"));
        }
        let n = intervals + intervals % 2;
        let h = length / n as f64;
        let nodes: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        let weights = nodes
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let s = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                s * h / 3.0 * (1.0 + x)
            })
            .collect();
        Ok(WeightedL2 { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| x * y * w).sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeeReport {
    pub alpha: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Check `Σ |<g, e_i>|² <= (1 + α) ||g||²` with `α = N sup_{i≠j} |<e_i, e_j>|`.
pub fn lee_bound_check(space: &WeightedL2, vectors: &[Vec<f64>], g: &[f64]) -> Result<LeeReport> {
    let n = vectors.len();
    if n == 0 {
        return Err(SpectraError::input("need at least one vector"));
    }
    let len = space.nodes().len();
    if g.len() != len || vectors.iter().any(|e| e.len() != len) {
        return Err(SpectraError::input("vectors must be sampled on the space's nodes"));
    }
    for (i, e) in vectors.iter().enumerate() {
        let nrm = space.norm(e);
        if (nrm - 1.0).abs() > 1e-8 {
            return Err(SpectraError::input(format!("vector {i} has norm {nrm}, expected 1")));
        }
    }
    let mut sup: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sup = sup.max(space.inner(&vectors[i], &vectors[j]).abs());
        }
    }
    let alpha = n as f64 * sup;
    if alpha >= 1.0 {
        return Err(SpectraError::Hypothesis(format!("α = {alpha:.4} is not below 1")));
    }
    let lhs: f64 = vectors.iter().map(|e| space.inner(g, e).powi(2)).sum();
    let rhs = (1.0 + alpha) * space.inner(g, g);
    Ok(LeeReport {
        alpha,
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
    })
}

/// `A = ∫_0^L sin² 2θ / (γ'² (1 + x)) dx` along a trajectory.
pub fn normalization_constant(traj: &PrueferTrajectory, tol: &Tolerance) -> Result<f64> {
    let l = traj.length();
    let n = l.ceil().max(1.0) as usize;
    let mut pts: Vec<f64> = (0..n).map(|i| l * i as f64 / n as f64).collect();
    pts.push(l);
    let data = traj.data();
    quad_points(
        |x| {
            let (_, th) = traj.state(x).expect("x in span");
            let g = data.gamma_prime(x);
            (2.0 * th).sin().powi(2) / (g * g * (1.0 + x))
        },
        &pts,
        tol,
    )
}

/// Unit vectors `e_i = sin 2θ(x, E_i) / (√A_i γ'(x, E_i) (1 + x))` of the
/// weighted space, built from Dirichlet trajectories; returns the vectors
/// and the discrete normalizers `A_i`.
pub fn pruefer_vectors(
    v0: &PeriodicPotential,
    v: &dyn Potential,
    energies: &[f64],
    space: &WeightedL2,
    tol: &Tolerance,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let length = *space.nodes().last().expect("non-empty");
    let out: Vec<(Vec<f64>, f64)> = energies
        .par_iter()
        .map(|&e| {
            let data = floquet_data(v0, e, tol)?;
            let traj = pruefer_flow_with(&data, v, length, PrueferInit::dirichlet(&data), tol)?;
            let raw: Vec<f64> = space
                .nodes()
                .iter()
                .map(|&x| {
                    let (_, th) = traj.state(x).expect("x in span");
                    (2.0 * th).sin() / (data.gamma_prime(x) * (1.0 + x))
                })
                .collect();
            let a = space.inner(&raw, &raw);
            let s = 1.0 / a.sqrt();
            Ok((raw.into_iter().map(|r| r * s).collect(), a))
        })
        .collect::<Result<_>>()?;
    Ok(out.into_iter().unzip())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparateSetParams {
    pub eps: f64,
    pub sigma: f64,
    pub beta: f64,
    pub c1: f64,
    pub n: usize,
    pub energies: Vec<f64>,
    /// Refuse runs whose length `ε^{-1-σ}` exceeds this.
    pub max_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparateSetReport {
    pub eps: f64,
    pub n: usize,
    pub length: f64,
    pub threshold: f64,
    pub min_k_gap: f64,
    /// `(E, k(E), |∫_0^L V sin 2θ / γ'|)` for every grid energy.
    pub integrals: Vec<(f64, f64, f64)>,
    /// Energies passing the size condition and the pairwise `k`-gap condition.
    pub candidates: Vec<f64>,
    pub bound_holds: bool,
}

/// `|∫_0^L V sin 2θ / γ' dx| = 2 |ln R(L) - ln R(0)|` for the Dirichlet solution.
pub fn resonance_integral(data: &FloquetData, v: &dyn Potential, length: f64, tol: &Tolerance) -> Result<f64> {
    let init = PrueferInit::dirichlet(data);
    let traj = pruefer_flow_with(data, v, length, init, tol)?;
    Ok(2.0 * (traj.final_ln_r() - init.r0.ln()).abs())
}

pub fn separate_set_scan(
    v0: &PeriodicPotential,
    v: &DecayingPotential,
    params: &SeparateSetParams,
    tol: &Tolerance,
) -> Result<SeparateSetReport> {
    let SeparateSetParams {
        eps,
        sigma,
        beta,
        c1,
        n,
        ref energies,
        max_length,
    } = *params;
    if !(eps > 0.0 && eps < 1.0) || !(sigma >= 0.0) || !(0.0..1.0).contains(&beta) || !(c1 >= 0.0) || n == 0 {
        return Err(SpectraError::input(
            "separate-set scan needs 0 < ε < 1, σ >= 0, 0 <= β < 1, C1 >= 0, N >= 1",
        ));
    }
    let length = eps.powf(-1.0 - sigma);
    if length > max_length {
        return Err(SpectraError::Resource(format!(
            "L = ε^(-1-σ) = {length:.3e} exceeds the configured cap {max_length:.3e}"
        )));
    }
    let integrals: Vec<(f64, f64, f64)> = energies
        .par_iter()
        .map(|&e| {
            let data = floquet_data(v0, e, tol)?;
            let j = resonance_integral(&data, v, length, tol)?;
            Ok((e, data.k(), j))
        })
        .collect::<Result<_>>()?;
    let threshold = (1.0 - beta) * c1 * eps.ln().abs();
    let min_k_gap = eps.powf(1.0 / (n * n) as f64);
    let mut strong: Vec<&(f64, f64, f64)> = integrals.iter().filter(|t| t.2 >= threshold && t.2 > 0.0).collect();
    strong.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut picked: Vec<(f64, f64)> = Vec::new();
    for &&(e, k, _) in &strong {
        if picked.iter().all(|&(_, kk)| (k - kk).abs() >= min_k_gap) {
            picked.push((e, k));
        }
    }
    let candidates: Vec<f64> = picked.into_iter().map(|(e, _)| e).collect();
    Ok(SeparateSetReport {
        eps,
        n,
        length,
        threshold,
        min_k_gap,
        bound_holds: candidates.len() <= n,
        integrals,
        candidates,
    })
}
