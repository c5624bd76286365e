//! Band theory of `H0 = -d²/dx² + V0` with a 1-periodic `V0`.

use crate::error::{Result, SpectraError};
use crate::numerics::{find_root, integrate_ode, propagate, quad_points, DenseSolution, OdeOptions, Tolerance};
use crate::potentials::{PeriodicPotential, Potential};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Smallest admissible `2 - |Δ(E)|` for band-interior data.
pub const DISCRIMINANT_MARGIN: f64 = 1e-10;

/// Distance from a band edge, relative to the band width, below which energies
/// are rejected.
pub const EDGE_MARGIN: f64 = 1e-6;

/// Transfer matrix of `(u, u')` over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monodromy {
    pub energy: f64,
    pub matrix: [[f64; 2]; 2],
}

impl Monodromy {
    pub fn trace(&self) -> f64 {
        self.matrix[0][0] + self.matrix[1][1]
    }

    pub fn det(&self) -> f64 {
        self.matrix[0][0] * self.matrix[1][1] - self.matrix[0][1] * self.matrix[1][0]
    }
}

fn ode_options(pot: &dyn Potential, a: f64, b: f64, tol: &Tolerance) -> OdeOptions {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    OdeOptions::new(*tol).with_breakpoints(pot.breakpoints_in(lo, hi))
}

/// Transfer matrix of `-u'' + V u = E u` from `a` to `b`: its columns are
/// `(u, u')(b)` for the initial data `(1, 0)` and `(0, 1)` at `a`.
pub fn transfer_matrix(pot: &dyn Potential, energy: f64, span: (f64, f64), tol: &Tolerance) -> Result<[[f64; 2]; 2]> {
    if !energy.is_finite() {
        return Err(SpectraError::input("energy must be finite"));
    }
    let opts = ode_options(pot, span.0, span.1, tol);
    let y = propagate(
        |x, y, d| {
            let q = pot.eval(x) - energy;
            d[0] = y[1];
            d[1] = q * y[0];
            d[2] = y[3];
            d[3] = q * y[2];
        },
        span,
        &[1.0, 0.0, 0.0, 1.0],
        &opts,
    )?;
    Ok([[y[0], y[2]], [y[1], y[3]]])
}

/// Complex-energy transfer matrix, same layout as [`transfer_matrix`].
pub fn complex_transfer_matrix(
    pot: &dyn Potential,
    z: Complex64,
    span: (f64, f64),
    tol: &Tolerance,
) -> Result<[[Complex64; 2]; 2]> {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let c1 = solve_complex(pot, z, span, (one, zero), tol)?;
    let c2 = solve_complex(pot, z, span, (zero, one), tol)?;
    Ok([[c1.0, c2.0], [c1.1, c2.1]])
}

/// Propagate complex data `(u, u')` of `-u'' + V u = z u` across `span`.
pub fn solve_complex(
    pot: &dyn Potential,
    z: Complex64,
    span: (f64, f64),
    init: (Complex64, Complex64),
    tol: &Tolerance,
) -> Result<(Complex64, Complex64)> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(SpectraError::input("energy must be finite"));
    }
    let opts = ode_options(pot, span.0, span.1, tol);
    let y = propagate(
        |x, y, d| {
            let q = Complex64::new(pot.eval(x), 0.0) - z;
            let u = Complex64::new(y[0], y[1]);
            let du = q * u;
            d[0] = y[2];
            d[1] = y[3];
            d[2] = du.re;
            d[3] = du.im;
        },
        span,
        &[init.0.re, init.0.im, init.1.re, init.1.im],
        &opts,
    )?;
    Ok((Complex64::new(y[0], y[1]), Complex64::new(y[2], y[3])))
}

/// Dense real solution `(u, u')` of `-u'' + V u = E u` on `span`.
pub fn solve_real(
    pot: &dyn Potential,
    energy: f64,
    span: (f64, f64),
    init: (f64, f64),
    tol: &Tolerance,
) -> Result<DenseSolution> {
    let opts = ode_options(pot, span.0, span.1, tol);
    integrate_ode(
        |x, y, d| {
            d[0] = y[1];
            d[1] = (pot.eval(x) - energy) * y[0];
        },
        span,
        &[init.0, init.1],
        &opts,
    )
}

pub fn monodromy(v0: &PeriodicPotential, energy: f64, tol: &Tolerance) -> Result<Monodromy> {
    let matrix = transfer_matrix(v0, energy, (0.0, 1.0), tol)?;
    Ok(Monodromy { energy, matrix })
}

/// `Δ(E) = Tr Q(E)`.
pub fn discriminant(v0: &PeriodicPotential, energy: f64, tol: &Tolerance) -> Result<f64> {
    Ok(monodromy(v0, energy, tol)?.trace())
}

/// Quasimomentum `k = arccos(Δ/2)` in `(0, π)`, or a domain error outside the
/// band interior.
pub fn quasimomentum(v0: &PeriodicPotential, energy: f64, tol: &Tolerance) -> Result<f64> {
    let d = discriminant(v0, energy, tol)?;
    check_discriminant(energy, d)?;
    Ok((0.5 * d).acos())
}

fn check_discriminant(energy: f64, d: f64) -> Result<()> {
    if 2.0 - d.abs() <= DISCRIMINANT_MARGIN {
        Err(SpectraError::domain(
            energy,
            format!("|Tr Q| = {:.12} is not below 2", d.abs()),
        ))
    } else {
        Ok(())
    }
}

/// A closed band `[lower, upper]`, possibly clipped to the search window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
    pub lower_clipped: bool,
    pub upper_clipped: bool,
}

impl Band {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, e: f64) -> bool {
        e >= self.lower && e <= self.upper
    }

    /// Energy at relative position `t` in `[0, 1]`.
    pub fn at(&self, t: f64) -> f64 {
        self.lower + t * self.width()
    }

    /// True when `e` keeps the relative edge margin from both true edges.
    pub fn is_interior(&self, e: f64) -> bool {
        let m = EDGE_MARGIN * self.width();
        let lo_ok = if self.lower_clipped { e >= self.lower } else { e > self.lower + m };
        let hi_ok = if self.upper_clipped { e <= self.upper } else { e < self.upper - m };
        lo_ok && hi_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub window: (f64, f64),
    pub bands: Vec<Band>,
}

impl BandStructure {
    pub fn band_containing(&self, e: f64) -> Option<&Band> {
        self.bands.iter().find(|b| b.contains(e))
    }

    /// Gaps strictly between consecutive bands.
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        self.bands.windows(2).map(|w| (w[0].upper, w[1].lower)).collect()
    }
}

fn scan_points(window: (f64, f64)) -> usize {
    let scale = window.0.abs().max(window.1.abs());
    400 + 200 * scale.sqrt().ceil() as usize
}

/// Locate the bands of `H0` inside `window` by scanning `|Δ| - 2` for sign
/// changes and refining each crossing of `Δ = ±2` with Brent's method.
///
/// Gaps narrower than the scan spacing can be missed; closed gaps (tangencies
/// such as the free case) are merged.
pub fn band_edges(v0: &PeriodicPotential, window: (f64, f64), tol: &Tolerance) -> Result<BandStructure> {
    let (emin, emax) = window;
    if !(emin.is_finite() && emax.is_finite() && emin < emax) {
        return Err(SpectraError::input(format!("invalid energy window [{emin}, {emax}]")));
    }
    let n = scan_points(window);
    let energies: Vec<f64> = (0..=n).map(|i| emin + (emax - emin) * i as f64 / n as f64).collect();
    let deltas: Vec<f64> = energies
        .par_iter()
        .map(|&e| discriminant(v0, e, tol))
        .collect::<Result<_>>()?;
    let inside = |d: f64| d.abs() < 2.0;
    let root_tol = Tolerance::new(1e-13, 1e-13, 200)?;

    let mut edges = Vec::new();
    for i in 0..n {
        let (d0, d1) = (deltas[i], deltas[i + 1]);
        if inside(d0) == inside(d1) {
            continue;
        }
        let outside = if inside(d0) { d1 } else { d0 };
        let target = if outside > 0.0 { 2.0 } else { -2.0 };
        let e = find_root(
            |e| discriminant(v0, e, tol).map(|d| d - target).unwrap_or(f64::NAN),
            (energies[i], energies[i + 1]),
            &root_tol,
        )?;
        edges.push((e, inside(d1)));
    }

    let mut bands: Vec<Band> = Vec::new();
    let mut open: Option<(f64, bool)> = if inside(deltas[0]) { Some((emin, true)) } else { None };
    for (e, entering) in edges {
        if entering {
            open = Some((e, false));
        } else if let Some((lo, clipped)) = open.take() {
            bands.push(Band {
                lower: lo,
                upper: e,
                lower_clipped: clipped,
                upper_clipped: false,
            });
        }
    }
    if let Some((lo, clipped)) = open {
        bands.push(Band {
            lower: lo,
            upper: emax,
            lower_clipped: clipped,
            upper_clipped: true,
        });
    }

    // merge closed gaps: |Δ| exceeds 2 only by round-off between the edges
    let mut merged: Vec<Band> = Vec::with_capacity(bands.len());
    for b in bands {
        if let Some(last) = merged.last_mut() {
            let gap = b.lower - last.upper;
            let scale = 1.0 + last.upper.abs();
            if gap < 1e-6 * scale {
                let mid = 0.5 * (b.lower + last.upper);
                let excess = discriminant(v0, mid, tol)?.abs() - 2.0;
                if excess < 1e-7 {
                    last.upper = b.upper;
                    last.upper_clipped = b.upper_clipped;
                    continue;
                }
            }
        }
        merged.push(b);
    }
    Ok(BandStructure { window, bands: merged })
}

/// Floquet solution `φ(x, E)` of `H0 φ = E φ` at a band-interior energy,
/// normalized by `φ(0) = 1` and oriented so that `ω = 2 Im(conj(φ) φ') > 0`,
/// together with its continuous phase `γ(x, E)` (`γ(0) = 0`).
///
/// Only one period is integrated; everything else follows from
/// `φ(x + 1) = e^{iσk} φ(x)` where `σ` is [`FloquetData::multiplier_sign`].
#[derive(Debug, Clone)]
pub struct FloquetData {
    energy: f64,
    k: f64,
    omega: f64,
    sigma: f64,
    multiplier: Complex64,
    period_phase: f64,
    j0: Complex64,
    // (Re φ, Im φ, Re φ', Im φ', γ) on [0, 1]
    period: DenseSolution,
    v0: PeriodicPotential,
}

pub fn floquet_data(v0: &PeriodicPotential, energy: f64, tol: &Tolerance) -> Result<FloquetData> {
    let q = monodromy(v0, energy, tol)?;
    let d = q.trace();
    check_discriminant(energy, d)?;
    let k = (0.5 * d).acos();
    let [[a, b], [_, _]] = q.matrix;
    // b = 0 would make (0, 1) a real eigenvector, impossible inside a band
    let sigma = if b > 0.0 { 1.0 } else { -1.0 };
    let multiplier = Complex64::from_polar(1.0, sigma * k);
    let j0 = Complex64::new(1.0, 0.0);
    let dj0 = (multiplier - a) / b;
    let omega = 2.0 * dj0.im;
    if !(omega > 0.0) {
        return Err(SpectraError::Precision(format!(
            "Floquet Wronskian {omega:e} at E = {energy} is not positive"
        )));
    }

    let fine = Tolerance::new(tol.abs_tol.min(1e-12), tol.rel_tol.min(1e-12), tol.max_steps)?;
    let opts = OdeOptions::new(fine).with_breakpoints(v0.breakpoints_in(0.0, 1.0));
    let period = integrate_ode(
        |x, y, dy| {
            let q = v0.eval(x) - energy;
            dy[0] = y[2];
            dy[1] = y[3];
            dy[2] = q * y[0];
            dy[3] = q * y[1];
            dy[4] = 0.5 * omega / (y[0] * y[0] + y[1] * y[1]);
        },
        (0.0, 1.0),
        &[j0.re, j0.im, dj0.re, dj0.im, 0.0],
        &opts,
    )?;
    let period_phase = period.final_state()[4];
    Ok(FloquetData {
        energy,
        k,
        omega,
        sigma,
        multiplier,
        period_phase,
        j0,
        period,
        v0: v0.clone(),
    })
}

impl FloquetData {
    /// Like [`floquet_data`], additionally enforcing the relative edge margin
    /// of `band`.
    pub fn in_band(v0: &PeriodicPotential, energy: f64, band: &Band, tol: &Tolerance) -> Result<Self> {
        if !band.is_interior(energy) {
            return Err(SpectraError::domain(
                energy,
                format!(
                    "closer than {EDGE_MARGIN:e} band widths to an edge of [{}, {}]",
                    band.lower, band.upper
                ),
            ));
        }
        floquet_data(v0, energy, tol)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// `±1` such that `φ(x + 1) = e^{i σ k} φ(x)`.
    pub fn multiplier_sign(&self) -> f64 {
        self.sigma
    }

    pub fn multiplier(&self) -> Complex64 {
        self.multiplier
    }

    pub fn j0(&self) -> Complex64 {
        self.j0
    }

    pub fn v0(&self) -> &PeriodicPotential {
        &self.v0
    }

    /// `γ(x + 1) - γ(x)`, independent of `x`.
    pub fn phase_per_period(&self) -> f64 {
        self.period_phase
    }

    fn reduce(&self, x: f64) -> (f64, f64) {
        let n = x.floor();
        let t = (x - n).clamp(0.0, 1.0);
        (n, t)
    }

    fn state(&self, t: f64) -> [f64; 5] {
        let mut s = [0.0; 5];
        self.period
            .eval_into(t, &mut s)
            .expect("reduced argument lies in [0, 1]");
        s
    }

    /// `(φ(x), φ'(x))`.
    pub fn phi_pair(&self, x: f64) -> (Complex64, Complex64) {
        let (n, t) = self.reduce(x);
        let s = self.state(t);
        let f = Complex64::from_polar(1.0, self.sigma * self.k * n);
        (f * Complex64::new(s[0], s[1]), f * Complex64::new(s[2], s[3]))
    }

    pub fn phi(&self, x: f64) -> Complex64 {
        self.phi_pair(x).0
    }

    pub fn phi_prime(&self, x: f64) -> Complex64 {
        self.phi_pair(x).1
    }

    pub fn gamma(&self, x: f64) -> f64 {
        let (n, t) = self.reduce(x);
        n * self.period_phase + self.state(t)[4]
    }

    /// `γ'(x) = ω / (2 |φ(x)|²)`.
    pub fn gamma_prime(&self, x: f64) -> f64 {
        let (_, t) = self.reduce(x);
        let s = self.state(t);
        0.5 * self.omega / (s[0] * s[0] + s[1] * s[1])
    }

    /// `|φ(x)|²`, 1-periodic.
    pub fn phi_mod_sq(&self, x: f64) -> f64 {
        let (_, t) = self.reduce(x);
        let s = self.state(t);
        s[0] * s[0] + s[1] * s[1]
    }

    /// `Γ(E) = ∫_0^1 γ'(x)^{-2} dx`.
    pub fn capital_gamma(&self, tol: &Tolerance) -> Result<f64> {
        let mut pts = vec![0.0];
        pts.extend(self.v0.breakpoints_in(0.0, 1.0).into_iter().filter(|&p| p > 0.0 && p < 1.0));
        pts.push(1.0);
        quad_points(
            |x| {
                let g = self.gamma_prime(x);
                1.0 / (g * g)
            },
            &pts,
            tol,
        )
    }

    /// Extremes of `γ'` over one period, sampled at `n` points.
    pub fn gamma_prime_range(&self, n: usize) -> (f64, f64) {
        (0..=n.max(1))
            .map(|i| self.gamma_prime(i as f64 / n.max(1) as f64))
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), g| (lo.min(g), hi.max(g)))
    }
}

/// Free-case quasimomentum `arccos(cos √E)` for `E > 0`.
pub fn free_quasimomentum(energy: f64) -> f64 {
    energy.sqrt().cos().acos()
}

/// `dk/dE` by central differences with step `h`.
pub fn quasimomentum_slope(v0: &PeriodicPotential, energy: f64, h: f64, tol: &Tolerance) -> Result<f64> {
    let kp = quasimomentum(v0, energy + h, tol)?;
    let km = quasimomentum(v0, energy - h, tol)?;
    Ok((kp - km) / (2.0 * h))
}
