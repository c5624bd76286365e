//! Reduction of `-u'' + (V0 + V) u = E u` to the off-diagonal first-order
//! system `Y' = -[[0, F], [conj F, 0]] Y`, its series solution by iterated
//! tail integrals, and comparisons against the WKB principal term `φ e^{ip}`.

use crate::error::{Result, SpectraError};
use crate::floquet::{Band, FloquetData};
use crate::multilinear::{conjugate_pattern, tail_b_suffixes, ChainOptions, ComplexFn, OscKernel};
use crate::numerics::{integrate_ode, DenseSolution, OdeOptions, Tolerance};
use crate::potentials::{DecayingPotential, PeriodicPotential, Potential};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Phase correction `p(x) = (1 / (2 Im(φ conj φ'))) ∫_0^x V |φ|²` on `[0, X]`.
#[derive(Debug, Clone)]
pub struct WkbPhase {
    data: FloquetData,
    v: DecayingPotential,
    x_max: f64,
    integral: DenseSolution,
}

impl WkbPhase {
    pub fn new(data: FloquetData, v: &DecayingPotential, x_max: f64, tol: &Tolerance) -> Result<Self> {
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(SpectraError::input("phase range must be positive"));
        }
        let mut breaks = data.v0().breakpoints_in(0.0, x_max);
        breaks.extend(v.breakpoints_in(0.0, x_max));
        let fine = Tolerance::new(tol.abs_tol.min(1e-12), tol.rel_tol.min(1e-12), tol.max_steps)?;
        let integral = integrate_ode(
            |x, _, d| d[0] = v.eval(x) * data.phi_mod_sq(x),
            (0.0, x_max),
            &[0.0],
            &OdeOptions::new(fine).with_breakpoints(breaks).with_max_step(1.0),
        )?;
        Ok(WkbPhase {
            data,
            v: v.clone(),
            x_max,
            integral,
        })
    }

    pub fn energy(&self) -> f64 {
        self.data.energy()
    }

    pub fn data(&self) -> &FloquetData {
        &self.data
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    // 2 Im(φ conj φ') = -ω
    fn denominator(&self) -> f64 {
        -self.data.omega()
    }

    pub fn p(&self, x: f64) -> f64 {
        let mut c = [0.0];
        self.integral
            .eval_into(x.clamp(0.0, self.x_max), &mut c)
            .expect("clamped into range");
        c[0] / self.denominator()
    }

    pub fn p_prime(&self, x: f64) -> f64 {
        self.v.eval(x) * self.data.phi_mod_sq(x) / self.denominator()
    }

    /// Principal term `φ e^{ip}` and the matching derivative slot
    /// `φ' e^{ip}` of the substitution chain with `Y = (1, 0)`.
    pub fn principal(&self, x: f64) -> (Complex64, Complex64) {
        let (phi, dphi) = self.data.phi_pair(x);
        let e = Complex64::from_polar(1.0, self.p(x));
        (phi * e, dphi * e)
    }

    /// `(u, u') = [[φ, conj φ], [φ', conj φ']] diag(e^{ip}, e^{-ip}) Y`.
    pub fn substitute(&self, x: f64, y: [Complex64; 2]) -> (Complex64, Complex64) {
        let (phi, dphi) = self.data.phi_pair(x);
        let e = Complex64::from_polar(1.0, self.p(x));
        let a = e * y[0];
        let b = e.conj() * y[1];
        (phi * a + phi.conj() * b, dphi * a + dphi.conj() * b)
    }

    /// Inverse of [`WkbPhase::substitute`].
    pub fn reduce(&self, x: f64, u: (Complex64, Complex64)) -> [Complex64; 2] {
        let (phi, dphi) = self.data.phi_pair(x);
        let det = phi * dphi.conj() - phi.conj() * dphi;
        let a = (dphi.conj() * u.0 - phi.conj() * u.1) / det;
        let b = (-dphi * u.0 + phi * u.1) / det;
        let e = Complex64::from_polar(1.0, self.p(x));
        [a * e.conj(), b * e]
    }
}

/// `F = w e^{-ih} V` at energy `E` on `[0, X]`.
pub fn kernel(v0: &PeriodicPotential, v: &DecayingPotential, energy: f64, x_max: f64, tol: &Tolerance) -> Result<OscKernel> {
    OscKernel::new(v0, v, energy, x_max, tol)
}

/// Largest `|i V conj(φ)² e^{-2ip} / (2 Im(φ conj φ')) + (iV/(2γ')) e^{-ih}|`
/// over `xs`.
pub fn kernel_identity_residual(kernel: &OscKernel, phase: &WkbPhase, xs: &[f64]) -> f64 {
    let data = kernel.data();
    xs.iter()
        .map(|&x| {
            let v = kernel.potential().eval(x);
            let phi = data.phi(x);
            let lhs = Complex64::i() * v * phi.conj() * phi.conj() * Complex64::from_polar(1.0, -2.0 * phase.p(x))
                / (-data.omega());
            let rhs = -kernel.eval(x);
            (lhs - rhs).norm()
        })
        .fold(0.0, f64::max)
}

/// Integrate `Y' = -[[0, F], [conj F, 0]] Y` from `(x0, y0)` to `x1`.
pub fn solve_reduced(kernel: &OscKernel, x0: f64, y0: [Complex64; 2], x1: f64, tol: &Tolerance) -> Result<DenseSolution> {
    let opts = OdeOptions::new(*tol)
        .with_breakpoints(kernel.breakpoints())
        .with_max_step(0.25);
    integrate_ode(
        |x, y, d| {
            let f = kernel.eval(x);
            let y1 = Complex64::new(y[0], y[1]);
            let y2 = Complex64::new(y[2], y[3]);
            let a = -f * y2;
            let b = -f.conj() * y1;
            d[0] = a.re;
            d[1] = a.im;
            d[2] = b.re;
            d[3] = b.im;
        },
        (x0, x1),
        &[y0[0].re, y0[0].im, y0[1].re, y0[1].im],
        &opts,
    )
}

fn pair(s: &[f64]) -> [Complex64; 2] {
    [Complex64::new(s[0], s[1]), Complex64::new(s[2], s[3])]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSolution {
    pub energy: f64,
    pub n_max: usize,
    pub xs: Vec<f64>,
    /// `terms[i][n - 1] = T_n(F)(x_i, ∞)`.
    pub terms: Vec<Vec<Complex64>>,
    /// Cutoff used for the reported terms.
    pub cutoff: f64,
    /// Largest change of the order-`N_max` partial sum between the last two
    /// ladder cutoffs (zero for compactly supported `V`).
    pub ladder_spread: f64,
    pub exact_cutoff: bool,
}

impl SeriesSolution {
    /// `Y_N(x_i) = (1 + Σ T_{2m}, Σ T_{2m+1})` over orders `<= n`.
    pub fn partial_sum(&self, i: usize, n: usize) -> [Complex64; 2] {
        let mut y = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        for (k, t) in self.terms[i].iter().take(n).enumerate() {
            y[(k + 1) % 2] += t;
        }
        y
    }

    pub fn value(&self, i: usize) -> [Complex64; 2] {
        self.partial_sum(i, self.n_max)
    }

    /// `max_i |T_n(x_i)|` for `n = 1..=N_max`.
    pub fn term_magnitudes(&self) -> Vec<f64> {
        (0..self.n_max)
            .map(|n| self.terms.iter().map(|t| t[n].norm()).fold(0.0, f64::max))
            .collect()
    }

    /// Smallest order from which successive magnitude ratios decrease (terms
    /// below `floor` count as converged); `None` if no such order exists.
    pub fn superexponential_onset(&self, floor: f64) -> Option<usize> {
        let mags = self.term_magnitudes();
        let n = mags.len();
        (1..n.saturating_sub(1)).find(|&start| {
            let mut last_ratio = f64::INFINITY;
            for k in start - 1..n - 1 {
                if mags[k + 1] <= floor {
                    return true;
                }
                let r = mags[k + 1] / mags[k];
                if !(r < last_ratio) || !(r < 1.0) {
                    return false;
                }
                last_ratio = r;
            }
            true
        })
    }
}

/// `T_1 .. T_{N_max}` at every point of `xs`, all orders from one backward
/// chain pass per cutoff. For compactly supported `V` the support end is an
/// exact cutoff; otherwise the ladder (each entry within the kernel range) is
/// used and the spread between its last two rungs reported.
pub fn series_solution(kernel: &OscKernel, xs: &[f64], n_max: usize, ladder: &[f64], tol: &Tolerance) -> Result<SeriesSolution> {
    if n_max == 0 {
        return Err(SpectraError::input("N_max must be positive"));
    }
    if xs.is_empty() {
        return Err(SpectraError::input("no evaluation points"));
    }
    let f = |x: f64| kernel.eval(x);
    let fc = |x: f64| kernel.eval(x).conj();
    let gs: Vec<ComplexFn> = conjugate_pattern(n_max)
        .into_iter()
        .map(|c| if c { &fc as ComplexFn } else { &f as ComplexFn })
        .collect();
    let opts = ChainOptions::new(*tol).with_breakpoints(kernel.breakpoints());
    let support = kernel.potential().support_end().filter(|&s| s <= kernel.x_max());
    let cutoffs: Vec<f64> = match support {
        Some(s) => vec![s],
        None => {
            let c: Vec<f64> = ladder.iter().copied().filter(|&c| c <= kernel.x_max()).collect();
            if c.len() < 2 {
                return Err(SpectraError::input("cutoff ladder needs two rungs inside the kernel range"));
            }
            c
        }
    };
    let runs: Vec<Vec<Vec<Complex64>>> = cutoffs
        .par_iter()
        .map(|&c| tail_b_suffixes(&gs, xs, c, &opts))
        .collect::<Result<_>>()?;
    let last = runs.len() - 1;
    let ladder_spread = if last == 0 {
        0.0
    } else {
        let sum = |r: &Vec<Complex64>, comp: usize| -> Complex64 {
            r.iter().enumerate().filter(|(k, _)| (k + 1) % 2 == comp).map(|(_, t)| *t).sum()
        };
        (0..xs.len())
            .map(|i| {
                (0..2)
                    .map(|c| (sum(&runs[last][i], c) - sum(&runs[last - 1][i], c)).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    Ok(SeriesSolution {
        energy: kernel.data().energy(),
        n_max,
        xs: xs.to_vec(),
        terms: runs.into_iter().last().expect("at least one cutoff"),
        cutoff: cutoffs[last],
        ladder_spread,
        exact_cutoff: support.is_some(),
    })
}

/// Direct oracle: backward integration of the reduced system from `x_end`
/// with `Y = (1, 0)`, evaluated at `xs`.
pub fn direct_reduced(kernel: &OscKernel, x_end: f64, xs: &[f64], tol: &Tolerance) -> Result<Vec<[Complex64; 2]>> {
    let lo = xs.iter().copied().fold(x_end, f64::min);
    let one = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    if lo >= x_end {
        return Ok(vec![one; xs.len()]);
    }
    let sol = solve_reduced(kernel, x_end, one, lo, tol)?;
    let mut buf = [0.0; 4];
    xs.iter()
        .map(|&x| {
            if x >= x_end {
                return Ok(one);
            }
            sol.eval_into(x, &mut buf)?;
            Ok(pair(&buf))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WkbComparison {
    pub energy: f64,
    pub x_max: f64,
    pub xs: Vec<f64>,
    /// `|u_num - φ e^{ip}| / |φ|`.
    pub r: Vec<f64>,
    /// `|u_num| / |φ|`.
    pub modulus_ratio: Vec<f64>,
    /// `max r` over `[X/2, X]`.
    pub tail_max: f64,
    /// `(a, max r over [a, 2a])` for dyadic windows below `X`.
    pub window_max: Vec<(f64, f64)>,
    /// Exponent of a power-law fit to `window_max` when at least three
    /// windows carry positive values.
    pub decay_exponent: Option<f64>,
}

/// Integrate `-u'' + (V0 + V) u = E u` backward from `X_max`, matched to the
/// WKB principal term there, and measure the relative distance to it on a
/// grid of `n_points` points in `[0, X_max]`.
pub fn wkb_compare(
    v0: &PeriodicPotential,
    v: &DecayingPotential,
    energy: f64,
    x_max: f64,
    n_points: usize,
    tol: &Tolerance,
) -> Result<WkbComparison> {
    if n_points < 2 {
        return Err(SpectraError::input("need at least two grid points"));
    }
    let data = crate::floquet::floquet_data(v0, energy, tol)?;
    let phase = WkbPhase::new(data, v, x_max, tol)?;
    let data = phase.data();
    let (u0, du0) = phase.principal(x_max);
    let mut breaks = v0.breakpoints_in(0.0, x_max);
    breaks.extend(v.breakpoints_in(0.0, x_max));
    let sol = integrate_ode(
        |x, y, d| {
            let q = v0.eval(x) + v.eval(x) - energy;
            d[0] = y[2];
            d[1] = y[3];
            d[2] = q * y[0];
            d[3] = q * y[1];
        },
        (x_max, 0.0),
        &[u0.re, u0.im, du0.re, du0.im],
        &OdeOptions::new(*tol).with_breakpoints(breaks).with_max_step(0.25),
    )?;
    let xs: Vec<f64> = (0..n_points).map(|i| x_max * i as f64 / (n_points - 1) as f64).collect();
    let mut buf = [0.0; 4];
    let mut r = Vec::with_capacity(n_points);
    let mut modulus_ratio = Vec::with_capacity(n_points);
    for &x in &xs {
        sol.eval_into(x, &mut buf)?;
        let u = Complex64::new(buf[0], buf[1]);
        let mphi = data.phi(x).norm();
        r.push((u - phase.principal(x).0).norm() / mphi);
        modulus_ratio.push(u.norm() / mphi);
    }
    let window = |a: f64, b: f64| {
        xs.iter()
            .zip(&r)
            .filter(|(x, _)| **x >= a && **x <= b)
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    };
    let tail_max = window(0.5 * x_max, x_max);
    let mut window_max = Vec::new();
    let mut a = 0.25 * x_max;
    while a >= 1.0 && window_max.len() < 8 {
        window_max.push((a, window(a, 2.0 * a)));
        a *= 0.5;
    }
    window_max.reverse();
    let positive: Vec<&(f64, f64)> = window_max.iter().filter(|w| w.1 > 0.0).collect();
    let decay_exponent = if positive.len() >= 3 {
        let xs: Vec<f64> = positive.iter().map(|w| w.0).collect();
        let ys: Vec<f64> = positive.iter().map(|w| w.1).collect();
        crate::stats::power_law_fit(&xs, &ys).ok().map(|f| f.1)
    } else {
        None
    };
    Ok(WkbComparison {
        energy,
        x_max,
        xs,
        r,
        modulus_ratio,
        tail_max,
        window_max,
        decay_exponent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDerivativeSample {
    pub energy: f64,
    pub x: f64,
    pub y: f64,
    /// `∂_E^i [h(x, E) - h(y, E)]` for `i = 1, 2, 3`.
    pub derivatives: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMonotonicityReport {
    pub samples: Vec<PhaseDerivativeSample>,
    /// `min |∂_E Δh| / |x - y|`.
    pub lower_constant: f64,
    /// `max |∂_E^i Δh| / |x - y|` for `i = 1, 2, 3`.
    pub upper_constants: [f64; 3],
}

/// Five-point central differences of `h(x, E) - h(y, E)` in `E`; derivative
/// order `i` uses the step `width · 10^{i-5}` of `band`.
pub fn phase_monotonicity_check(
    v0: &PeriodicPotential,
    v: &DecayingPotential,
    band: &Band,
    energies: &[f64],
    x_pairs: &[(f64, f64)],
    tol: &Tolerance,
) -> Result<PhaseMonotonicityReport> {
    if x_pairs.is_empty() || energies.is_empty() {
        return Err(SpectraError::input("need energies and x pairs"));
    }
    if x_pairs.iter().any(|(x, y)| x == y || *x < 0.0 || *y < 0.0) {
        return Err(SpectraError::input("x pairs must be distinct nonnegative points"));
    }
    let reach = x_pairs.iter().map(|(x, y)| x.max(*y)).fold(1.0, f64::max);
    let steps = [1e-4, 1e-3, 1e-2].map(|s| s * band.width());
    for &e in energies {
        for &s in &steps {
            if !band.is_interior(e - 2.0 * s) || !band.is_interior(e + 2.0 * s) {
                return Err(SpectraError::domain(
                    e,
                    "finite-difference stencil leaves the band interior",
                ));
            }
        }
    }
    let fine = Tolerance::new(tol.abs_tol.min(1e-12), tol.rel_tol.min(1e-12), tol.max_steps)?;
    // Δh at each stencil node, per energy and step
    let eval = |e: f64| -> Result<Vec<f64>> {
        let data = FloquetData::in_band(v0, e, band, &fine)?;
        let k = OscKernel::with_data(data, v, reach, &fine)?;
        Ok(x_pairs.iter().map(|&(x, y)| k.h(x) - k.h(y)).collect())
    };
    let nodes: Vec<(usize, usize, f64)> = energies
        .iter()
        .enumerate()
        .flat_map(|(i, &e)| {
            steps
                .iter()
                .enumerate()
                .flat_map(move |(j, &s)| (-2..=2).map(move |o| (i, j, e + o as f64 * s)))
        })
        .collect();
    let values: Vec<Vec<f64>> = nodes.par_iter().map(|&(_, _, e)| eval(e)).collect::<Result<_>>()?;
    let at = |i: usize, j: usize, o: i32, p: usize| values[(i * 3 + j) * 5 + (o + 2) as usize][p];
    let mut samples = Vec::new();
    for (i, &e) in energies.iter().enumerate() {
        for (p, &(x, y)) in x_pairs.iter().enumerate() {
            let f = |j: usize, o: i32| at(i, j, o, p);
            let (h1, h2, h3) = (steps[0], steps[1], steps[2]);
            let d1 = (-f(0, 2) + 8.0 * f(0, 1) - 8.0 * f(0, -1) + f(0, -2)) / (12.0 * h1);
            let d2 = (-f(1, 2) + 16.0 * f(1, 1) - 30.0 * f(1, 0) + 16.0 * f(1, -1) - f(1, -2)) / (12.0 * h2 * h2);
            let d3 = (f(2, 2) - 2.0 * f(2, 1) + 2.0 * f(2, -1) - f(2, -2)) / (2.0 * h3 * h3 * h3);
            samples.push(PhaseDerivativeSample {
                energy: e,
                x,
                y,
                derivatives: [d1, d2, d3],
            });
        }
    }
    let lower_constant = samples
        .iter()
        .map(|s| s.derivatives[0].abs() / (s.x - s.y).abs())
        .fold(f64::INFINITY, f64::min);
    let mut upper_constants = [0.0f64; 3];
    for s in &samples {
        for (u, d) in upper_constants.iter_mut().zip(s.derivatives) {
            *u = u.max(d.abs() / (s.x - s.y).abs());
        }
    }
    Ok(PhaseMonotonicityReport {
        samples,
        lower_constant,
        upper_constants,
    })
}
