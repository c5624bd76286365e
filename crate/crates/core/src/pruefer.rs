//! Generalized Prüfer variables relative to the Floquet frame.
//!
//! A real solution of `-u'' + (V0 + V) u = E u` is written as `u = Im(ρ φ)`,
//! `u' = Im(ρ φ')` with `ρ = R e^{i(θ - γ)}`, where `φ` is the Floquet solution
//! of `V0` and `γ` its phase. Then
//!
//! ```text
//! (ln R)' = V sin 2θ / (2γ')
//! θ'      = γ' - V sin²θ / γ'
//! ```

use crate::error::{Result, SpectraError};
use crate::floquet::{discriminant, floquet_data, FloquetData};
use crate::numerics::{integrate_ode, quad_points, DenseSolution, Grid, OdeOptions, Tolerance};
use crate::potentials::{PeriodicPotential, Potential};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

/// Default trajectory sampling density (points per unit length).
pub const SAMPLES_PER_UNIT: usize = 32;

/// `ρ` together with the real data `(u, u')` it encodes at some point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoDecomposition {
    pub rho: Complex64,
    pub u: f64,
    pub uprime: f64,
}

impl RhoDecomposition {
    /// `R = |ρ|`.
    pub fn amplitude(&self) -> f64 {
        self.rho.norm()
    }

    /// `θ = γ(x) + Arg ρ`.
    pub fn angle(&self, data: &FloquetData, x: f64) -> f64 {
        data.gamma(x) + self.rho.arg()
    }

    /// `(Im(ρφ), Im(ρφ'))` at `x`.
    pub fn reconstruct(&self, data: &FloquetData, x: f64) -> (f64, f64) {
        let (p, dp) = data.phi_pair(x);
        ((self.rho * p).im, (self.rho * dp).im)
    }
}

/// `ρ = (2/ω)(u' conj(φ) - u conj(φ'))`, the unique complex number with
/// `(u, u') = (Im(ρφ), Im(ρφ'))`.
pub fn to_rho(data: &FloquetData, u: f64, uprime: f64, x: f64) -> Result<RhoDecomposition> {
    if u == 0.0 && uprime == 0.0 {
        return Err(SpectraError::Degenerate("(u, u') = (0, 0) has no Prüfer angle".into()));
    }
    if !(u.is_finite() && uprime.is_finite()) {
        return Err(SpectraError::input("solution data must be finite"));
    }
    let (p, dp) = data.phi_pair(x);
    let rho = (p.conj() * uprime - dp.conj() * u) * (2.0 / data.omega());
    Ok(RhoDecomposition { rho, u, uprime })
}

/// Initial Prüfer data `(R0, θ0)` at `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrueferInit {
    pub r0: f64,
    pub theta0: f64,
}

impl PrueferInit {
    pub fn new(r0: f64, theta0: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite() && theta0.is_finite()) {
            return Err(SpectraError::input(format!("need R0 > 0 and finite θ0, got ({r0}, {theta0})")));
        }
        Ok(PrueferInit { r0, theta0 })
    }

    /// The Prüfer data of the real solution with `(u, u')(0) = (u0, u0')`.
    pub fn from_solution(data: &FloquetData, u0: f64, u0prime: f64) -> Result<Self> {
        let r = to_rho(data, u0, u0prime, 0.0)?;
        PrueferInit::new(r.amplitude(), r.angle(data, 0.0))
    }

    /// Dirichlet data `(u, u')(0) = (0, 1)`.
    pub fn dirichlet(data: &FloquetData) -> Self {
        PrueferInit::from_solution(data, 0.0, 1.0).expect("(0, 1) is non-degenerate")
    }
}

/// Sampled `(ln R, θ)` on `[0, L]` plus the continuous solution behind it.
#[derive(Debug, Clone)]
pub struct PrueferTrajectory {
    pub energy: f64,
    pub grid: Grid,
    pub ln_r: Vec<f64>,
    pub theta: Vec<f64>,
    data: FloquetData,
    solution: DenseSolution,
}

/// Integrate the Prüfer system for `V0 + V` on `[0, length]`.
pub fn pruefer_flow(
    v0: &PeriodicPotential,
    v: &dyn Potential,
    energy: f64,
    length: f64,
    init: PrueferInit,
    tol: &Tolerance,
) -> Result<PrueferTrajectory> {
    let data = floquet_data(v0, energy, tol)?;
    pruefer_flow_with(&data, v, length, init, tol)
}

/// As [`pruefer_flow`], reusing precomputed Floquet data.
pub fn pruefer_flow_with(
    data: &FloquetData,
    v: &dyn Potential,
    length: f64,
    init: PrueferInit,
    tol: &Tolerance,
) -> Result<PrueferTrajectory> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(SpectraError::input(format!("trajectory length must be positive, got {length}")));
    }
    let mut breaks = data.v0().breakpoints_in(0.0, length);
    breaks.extend(v.breakpoints_in(0.0, length));
    let opts = OdeOptions::new(*tol).with_breakpoints(breaks);
    let solution = integrate_ode(
        |x, y, d| {
            let g = data.gamma_prime(x);
            let vx = v.eval(x);
            let s = y[1].sin();
            d[0] = 0.5 * vx / g * (2.0 * y[1]).sin();
            d[1] = g - vx / g * s * s;
        },
        (0.0, length),
        &[init.r0.ln(), init.theta0],
        &opts,
    )?;
    let grid = Grid::per_unit(0.0, length, SAMPLES_PER_UNIT)?;
    let mut ln_r = Vec::with_capacity(grid.len());
    let mut theta = Vec::with_capacity(grid.len());
    let mut buf = [0.0; 2];
    for &x in grid.points() {
        solution.eval_into(x, &mut buf)?;
        ln_r.push(buf[0]);
        theta.push(buf[1]);
    }
    Ok(PrueferTrajectory {
        energy: data.energy(),
        grid,
        ln_r,
        theta,
        data: data.clone(),
        solution,
    })
}

impl PrueferTrajectory {
    pub fn data(&self) -> &FloquetData {
        &self.data
    }

    pub fn length(&self) -> f64 {
        self.solution.x_end()
    }

    /// `(ln R(x), θ(x))` from the continuous solution.
    pub fn state(&self, x: f64) -> Result<(f64, f64)> {
        let mut buf = [0.0; 2];
        self.solution.eval_into(x, &mut buf)?;
        Ok((buf[0], buf[1]))
    }

    pub fn final_ln_r(&self) -> f64 {
        self.solution.final_state()[0]
    }

    pub fn final_theta(&self) -> f64 {
        self.solution.final_state()[1]
    }

    /// `ρ(x) = R e^{i(θ - γ)}`.
    pub fn rho(&self, x: f64) -> Result<Complex64> {
        let (lr, th) = self.state(x)?;
        Ok(Complex64::from_polar(lr.exp(), th - self.data.gamma(x)))
    }

    /// The real solution `(u(x), u'(x))` encoded by the trajectory.
    pub fn reconstruct_solution(&self, x: f64) -> Result<(f64, f64)> {
        let rho = self.rho(x)?;
        let (p, dp) = self.data.phi_pair(x);
        Ok(((rho * p).im, (rho * dp).im))
    }

    /// Largest sampled jump of `θ` between adjacent grid points.
    pub fn max_theta_jump(&self) -> f64 {
        self.theta
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest grid point `X0` beyond which `θ' > 0` at every grid point,
    /// with `θ'` evaluated from the Prüfer equation.
    pub fn theta_monotone_from(&self, v: &dyn Potential) -> f64 {
        let pts = self.grid.points();
        let mut x0 = pts[0];
        for (i, &x) in pts.iter().enumerate() {
            let g = self.data.gamma_prime(x);
            let s = self.theta[i].sin();
            if g - v.eval(x) / g * s * s <= 0.0 {
                x0 = pts.get(i + 1).copied().unwrap_or(x);
            }
        }
        x0
    }
}

fn unit_partition(a: f64, b: f64, spacing: f64) -> Vec<f64> {
    let n = ((b - a) / spacing).ceil().max(1.0) as usize;
    let mut pts: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    pts.push(b);
    pts
}

// 0, 1, 2, 4, ... and a uniform grid of the given spacing, merged
fn oscillatory_partition(length: f64, spacing: f64) -> Result<Vec<f64>> {
    let pieces = length / spacing;
    if pieces > 5e7 {
        return Err(SpectraError::Resource(format!(
            "oscillatory integral over [0, {length}] would need {pieces:.0} panels (cap 5e7)"
        )));
    }
    let mut pts = unit_partition(0.0, length, spacing);
    let mut g = 1.0;
    while g < length {
        pts.push(g);
        g *= 2.0;
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    Ok(pts)
}

/// `∫_0^L sin(γ x + G(x)) / (1 + x) dx`.
pub fn osc_integral(gamma_freq: f64, g: &dyn Fn(f64) -> f64, length: f64, tol: &Tolerance) -> Result<f64> {
    if gamma_freq == 0.0 || !gamma_freq.is_finite() {
        return Err(SpectraError::input("oscillation frequency must be finite and non-zero"));
    }
    if !(length > 0.0) {
        return Err(SpectraError::input("integration length must be positive"));
    }
    let spacing = (PI / gamma_freq.abs()).min(length);
    let pts = oscillatory_partition(length, spacing)?;
    quad_points(|x| (gamma_freq * x + g(x)).sin() / (1.0 + x), &pts, tol)
}

/// `∫_0^L e^{2πikx} sin(γ x + G(x)) / (1 + x) dx` for `0 < γ < 2π`.
pub fn fourier_mode_integral(
    k: i64,
    gamma_freq: f64,
    g: &dyn Fn(f64) -> f64,
    length: f64,
    tol: &Tolerance,
) -> Result<Complex64> {
    if !(gamma_freq > 0.0 && gamma_freq < 2.0 * PI) {
        return Err(SpectraError::input(format!("need 0 < γ < 2π, got {gamma_freq}")));
    }
    if !(length > 0.0) {
        return Err(SpectraError::input("integration length must be positive"));
    }
    let fastest = gamma_freq.max(2.0 * PI * k.unsigned_abs() as f64);
    let spacing = (PI / fastest).min(PI / gamma_freq).min(length);
    let pts = oscillatory_partition(length, spacing)?;
    let w = 2.0 * PI * k as f64;
    quad_points(
        |x| Complex64::from_polar((gamma_freq * x + g(x)).sin() / (1.0 + x), w * x),
        &pts,
        tol,
    )
}

/// 1-periodic weights for the almost-orthogonality integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weight {
    Zero,
    One,
    Cos2Pi,
    InvGammaPrimeSq,
    PhiModSq,
}

impl Weight {
    pub fn eval(&self, data: &FloquetData, x: f64) -> f64 {
        match self {
            Weight::Zero => 0.0,
            Weight::One => 1.0,
            Weight::Cos2Pi => (2.0 * PI * x).cos(),
            Weight::InvGammaPrimeSq => data.gamma_prime(x).powi(-2),
            Weight::PhiModSq => data.phi_mod_sq(x),
        }
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Weight::Zero => "zero",
            Weight::One => "one",
            Weight::Cos2Pi => "cos2pi",
            Weight::InvGammaPrimeSq => "inv-gamma-prime-sq",
            Weight::PhiModSq => "phi-mod-sq",
        };
        f.write_str(s)
    }
}

impl FromStr for Weight {
    type Err = SpectraError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero" => Ok(Weight::Zero),
            "one" => Ok(Weight::One),
            "cos2pi" => Ok(Weight::Cos2Pi),
            "inv-gamma-prime-sq" => Ok(Weight::InvGammaPrimeSq),
            "phi-mod-sq" => Ok(Weight::PhiModSq),
            other => Err(SpectraError::Parse(format!("unknown weight `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityIntegrals {
    pub i4: f64,
    pub i22: f64,
}

/// Check that `e1` and `e2` lie in one band and on the same side of the
/// energy where `k = π/2`.
fn check_same_half_band(v0: &PeriodicPotential, e1: f64, e2: f64, tol: &Tolerance) -> Result<()> {
    let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
    let d_lo = discriminant(v0, lo, tol)?;
    let mut prev = d_lo;
    for i in 1..=64 {
        let e = lo + (hi - lo) * i as f64 / 64.0;
        let d = discriminant(v0, e, tol)?;
        if d.abs() >= 2.0 {
            return Err(SpectraError::domain(e, "energies are not in a common band"));
        }
        // k = π/2 exactly where Δ = 0
        if d * prev <= 0.0 {
            return Err(SpectraError::domain(
                e,
                format!("[{lo}, {hi}] straddles the energy with k = π/2"),
            ));
        }
        prev = d;
    }
    Ok(())
}

/// `I4 = ∫_0^L f cos 4θ(x, E1) / (1 + x)` and
/// `I22 = ∫_0^L f sin 2θ(x, E1) sin 2θ(x, E2) / (1 + x)` for Dirichlet
/// solutions; `f` is evaluated with the Floquet data of `E1`.
pub fn orthogonality_integrals(
    v0: &PeriodicPotential,
    v: &dyn Potential,
    e1: f64,
    e2: f64,
    length: f64,
    weight: Weight,
    tol: &Tolerance,
) -> Result<OrthogonalityIntegrals> {
    if e1 == e2 {
        return Err(SpectraError::input("E1 and E2 must differ"));
    }
    let d1 = floquet_data(v0, e1, tol)?;
    let d2 = floquet_data(v0, e2, tol)?;
    check_same_half_band(v0, e1, e2, tol)?;
    if (d1.k() - FRAC_PI_2) * (d2.k() - FRAC_PI_2) <= 0.0 {
        return Err(SpectraError::domain(e2, "energies straddle k = π/2"));
    }
    if weight == Weight::Zero {
        return Ok(OrthogonalityIntegrals { i4: 0.0, i22: 0.0 });
    }
    let t1 = pruefer_flow_with(&d1, v, length, PrueferInit::dirichlet(&d1), tol)?;
    let t2 = pruefer_flow_with(&d2, v, length, PrueferInit::dirichlet(&d2), tol)?;
    let pts = unit_partition(0.0, length, 1.0);
    let itol = Tolerance::new(tol.abs_tol.max(1e-9), tol.rel_tol.max(1e-9), tol.max_steps)?;
    let i4 = quad_points(
        |x| {
            let (_, th) = t1.state(x).expect("x in span");
            weight.eval(&d1, x) * (4.0 * th).cos() / (1.0 + x)
        },
        &pts,
        &itol,
    )?;
    let i22 = quad_points(
        |x| {
            let (_, a) = t1.state(x).expect("x in span");
            let (_, b) = t2.state(x).expect("x in span");
            weight.eval(&d1, x) * (2.0 * a).sin() * (2.0 * b).sin() / (1.0 + x)
        },
        &pts,
        &itol,
    )?;
    Ok(OrthogonalityIntegrals { i4, i22 })
}
