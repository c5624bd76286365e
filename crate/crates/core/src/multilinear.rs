//! Multilinear-operator machinery: `l^p(L^1)` norms, adapted martingale
//! structures, variation norms over them, simplex integrals `M_n`, iterated
//! tail integrals `B_n`, and the oscillatory operators `S`, `S*`.

use crate::error::{Result, SpectraError};
use crate::floquet::{floquet_data, FloquetData};
use crate::numerics::{integrate_ode, quad_points, DenseSolution, OdeOptions, Tolerance};
use crate::potentials::{DecayingPotential, PeriodicPotential, Potential};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A complex function of one real variable, shareable across threads.
pub type ComplexFn<'a> = &'a (dyn Fn(f64) -> Complex64 + Sync + 'a);

/// A real function of one real variable, shareable across threads.
pub type RealFn<'a> = &'a (dyn Fn(f64) -> f64 + Sync + 'a);

fn unit_points(a: f64, b: f64, per_unit: f64) -> Vec<f64> {
    let n = ((b - a) * per_unit).ceil().max(1.0) as usize;
    let mut pts: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    pts.push(b);
    pts
}

fn with_breaks(mut pts: Vec<f64>, breaks: &[f64]) -> Vec<f64> {
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    pts.extend(breaks.iter().copied().filter(|&p| p > a && p < b));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpL1Norm {
    pub p: f64,
    pub value: f64,
    /// `∫_k^{k+1} |f|` for `k = 0, 1, ...` with `k + 1 <= X_max`.
    pub masses: Vec<f64>,
}

/// `(Σ_k (∫_k^{k+1} |f|)^p)^{1/p}` over unit intervals inside `[0, X_max]`.
pub fn lp_l1_norm(f: RealFn<'_>, p: f64, x_max: f64, breaks: &[f64], tol: &Tolerance) -> Result<LpL1Norm> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(SpectraError::input(format!("need 1 <= p < inf, got {p}")));
    }
    if !(x_max >= 1.0) {
        return Err(SpectraError::input("X_max must be at least 1"));
    }
    let k_max = x_max.floor() as usize;
    let masses: Vec<f64> = (0..k_max)
        .into_par_iter()
        .map(|k| {
            let pts = with_breaks(vec![k as f64, k as f64 + 1.0], breaks);
            quad_points(|x| f(x).abs(), &pts, tol)
        })
        .collect::<Result<_>>()?;
    let value = masses.iter().map(|m| m.powf(p)).sum::<f64>().powf(1.0 / p);
    Ok(LpL1Norm { p, value, masses })
}

/// `ν(A) = ||f χ_A||^p_{l^p(L^1)}` for intervals `A`, with full unit masses
/// cached.
struct MassFunction<'a> {
    f: RealFn<'a>,
    p: f64,
    breaks: Vec<f64>,
    units: Vec<f64>,
    tol: Tolerance,
}

impl<'a> MassFunction<'a> {
    fn new(f: RealFn<'a>, p: f64, x_max: f64, breaks: &[f64], tol: &Tolerance) -> Result<Self> {
        let n = x_max.ceil() as usize;
        let breaks = breaks.to_vec();
        let units = (0..n)
            .into_par_iter()
            .map(|k| {
                let hi = (k as f64 + 1.0).min(x_max);
                let pts = with_breaks(vec![k as f64, hi], &breaks);
                quad_points(|x| f(x).abs(), &pts, tol)
            })
            .collect::<Result<_>>()?;
        Ok(MassFunction {
            f,
            p,
            breaks,
            units,
            tol: *tol,
        })
    }

    fn mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let pts = with_breaks(vec![a, b], &self.breaks);
        quad_points(|x| (self.f)(x).abs(), &pts, &self.tol).unwrap_or(f64::NAN)
    }

    fn nu(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let k0 = a.floor() as usize;
        let k1 = (b.ceil() as usize).max(k0 + 1);
        let mut total = 0.0;
        for k in k0..k1 {
            let lo = a.max(k as f64);
            let hi = b.min(k as f64 + 1.0);
            let full = k < self.units.len() && lo == k as f64 && hi >= (k as f64 + 1.0).min(self.x_end());
            let m = if full { self.units[k] } else { self.mass(lo, hi) };
            total += m.powf(self.p);
        }
        total
    }

    fn x_end(&self) -> f64 {
        self.units.len() as f64
    }
}

/// Nested dyadic partitions of `[0, X_max]` adapted to `f` in `l^p(L^1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleStructure {
    pub depth: usize,
    pub x_max: f64,
    pub p: f64,
    /// `levels[m - 1]` holds the `2^m - 1` interior cut points of level `m`.
    pub levels: Vec<Vec<f64>>,
    /// `ν([0, X_max])`.
    pub total_mass: f64,
    /// `ν([X_max, 4 X_max])` when `f` is defined there, as a tail diagnostic.
    pub tail_mass: Option<f64>,
}

impl MartingaleStructure {
    /// Cells `E_j^m` of level `m` (`m = 0` is the whole interval).
    pub fn cells(&self, m: usize) -> Vec<(f64, f64)> {
        let mut edges = vec![0.0];
        if m > 0 {
            edges.extend_from_slice(&self.levels[m - 1]);
        }
        edges.push(self.x_max);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Check `ν(E_j^m) <= 2^{-m} ν(total) (1 + rel)` with an independent
    /// quadrature of every cell; returns the worst ratio `ν(cell) 2^m / ν(total)`.
    pub fn adaptedness(&self, f: RealFn<'_>, breaks: &[f64], tol: &Tolerance) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for m in 1..=self.depth {
            for (a, b) in self.cells(m) {
                let nu = independent_nu(f, self.p, a, b, breaks, tol)?;
                worst = worst.max(nu * 2f64.powi(m as i32) / self.total_mass);
            }
        }
        Ok(worst)
    }
}

fn independent_nu(f: RealFn<'_>, p: f64, a: f64, b: f64, breaks: &[f64], tol: &Tolerance) -> Result<f64> {
    let mut total = 0.0;
    let mut lo = a;
    while lo < b {
        let hi = (lo.floor() + 1.0).min(b);
        let pts = with_breaks(vec![lo, hi], breaks);
        let m: f64 = quad_points(|x| f(x).abs(), &pts, tol)?;
        total += m.powf(p);
        lo = hi;
    }
    Ok(total)
}

/// Split every cell at the point where `ν` of the left part reaches half of
/// the cell's `ν` (bisection, left part never above half); cells without mass
/// are split at their midpoint.
pub fn build_martingale(
    f: RealFn<'_>,
    p: f64,
    depth: usize,
    x_max: f64,
    breaks: &[f64],
    tol: &Tolerance,
) -> Result<MartingaleStructure> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(SpectraError::input(format!("need 1 <= p < inf, got {p}")));
    }
    if depth == 0 || depth > 24 {
        return Err(SpectraError::input("martingale depth must be in 1..=24"));
    }
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(SpectraError::input("X_max must be positive"));
    }
    let qtol = Tolerance::new(tol.abs_tol.min(1e-14), tol.rel_tol.min(1e-13), tol.max_steps)?;
    let mf = MassFunction::new(f, p, x_max, breaks, &qtol)?;
    let total = mf.nu(0.0, x_max);
    if !(total > 0.0) {
        return Err(SpectraError::input("f has no l^p(L^1) mass on [0, X_max]"));
    }
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(depth);
    let mut cells = vec![(0.0, x_max)];
    for _ in 0..depth {
        let cuts: Vec<f64> = cells
            .par_iter()
            .map(|&(a, b)| split_cell(&mf, a, b))
            .collect();
        let mut next = Vec::with_capacity(cells.len() * 2);
        for (&(a, b), &t) in cells.iter().zip(&cuts) {
            next.push((a, t));
            next.push((t, b));
        }
        let mut level: Vec<f64> = next.iter().skip(1).map(|c| c.0).collect();
        level.sort_by(f64::total_cmp);
        levels.push(level);
        cells = next;
    }
    let tail_mass = {
        let v = independent_nu(f, p, x_max, 4.0 * x_max, breaks, &qtol);
        v.ok().filter(|t| t.is_finite())
    };
    Ok(MartingaleStructure {
        depth,
        x_max,
        p,
        levels,
        total_mass: total,
        tail_mass,
    })
}

fn split_cell(mf: &MassFunction<'_>, a: f64, b: f64) -> f64 {
    let whole = mf.nu(a, b);
    if !(whole > 0.0) {
        return 0.5 * (a + b);
    }
    let target = 0.5 * whole;
    let (mut lo, mut hi) = (a, b);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mf.nu(a, mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BNorm {
    pub s: f64,
    pub value: f64,
    pub depth: usize,
    /// `m^s (Σ_j |a(m, j)|²)^{1/2}` for `m = 1..=depth`.
    pub level_terms: Vec<f64>,
    pub last_level: f64,
}

impl BNorm {
    fn from_finest(finest: Vec<Complex64>, depth: usize, s: f64) -> Self {
        let mut level_vals = finest;
        let mut terms = vec![0.0; depth];
        for m in (1..=depth).rev() {
            let l2: f64 = level_vals.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            terms[m - 1] = (m as f64).powf(s) * l2;
            level_vals = level_vals.chunks(2).map(|c| c[0] + c[1]).collect();
        }
        BNorm {
            s,
            value: terms.iter().sum(),
            depth,
            last_level: *terms.last().unwrap_or(&0.0),
            level_terms: terms,
        }
    }
}

fn cell_integrals(
    g: ComplexFn<'_>,
    cells: &[(f64, f64)],
    breaks: &[f64],
    per_unit: f64,
    tol: &Tolerance,
) -> Result<Vec<Complex64>> {
    cells
        .par_iter()
        .map(|&(a, b)| {
            if b <= a {
                return Ok(Complex64::new(0.0, 0.0));
            }
            let pts = with_breaks(unit_points(a, b, per_unit), breaks);
            quad_points(g, &pts, tol)
        })
        .collect()
}

/// `||g||_{B^s} = Σ_{m>=1} m^s (Σ_j |∫_{E_j^m} g|²)^{1/2}` up to the structure depth.
pub fn b_norm(
    g: ComplexFn<'_>,
    structure: &MartingaleStructure,
    s: f64,
    breaks: &[f64],
    tol: &Tolerance,
) -> Result<BNorm> {
    let finest = structure.cells(structure.depth);
    let vals = cell_integrals(g, &finest, breaks, 2.0, tol)?;
    Ok(BNorm::from_finest(vals, structure.depth, s))
}

/// `||g χ_I||_{B^s}` for a closed interval `I`.
pub fn b_norm_restricted(
    g: ComplexFn<'_>,
    structure: &MartingaleStructure,
    s: f64,
    interval: (f64, f64),
    breaks: &[f64],
    tol: &Tolerance,
) -> Result<BNorm> {
    let finest: Vec<(f64, f64)> = structure
        .cells(structure.depth)
        .into_iter()
        .map(|(a, b)| (a.max(interval.0), b.min(interval.1)))
        .collect();
    let vals = cell_integrals(g, &finest, breaks, 2.0, tol)?;
    Ok(BNorm::from_finest(vals, structure.depth, s))
}

/// Options for the iterated-integral chains.
#[derive(Debug, Clone)]
pub struct ChainOptions {
    pub tol: Tolerance,
    pub breakpoints: Vec<f64>,
    pub max_step: Option<f64>,
}

impl ChainOptions {
    pub fn new(tol: Tolerance) -> Self {
        ChainOptions {
            tol,
            breakpoints: Vec::new(),
            max_step: None,
        }
    }

    pub fn with_breakpoints(mut self, b: Vec<f64>) -> Self {
        self.breakpoints = b;
        self
    }

    fn ode(&self) -> OdeOptions {
        let mut o = OdeOptions::new(self.tol).with_breakpoints(self.breakpoints.clone());
        o.max_step = Some(self.max_step.unwrap_or(0.5));
        o
    }
}

// y_k' = g_k y_{k-1}, y_0 = 1, y_k(x) = 0
fn forward_chain(gs: &[ComplexFn<'_>], span: (f64, f64), opts: &ChainOptions) -> Result<DenseSolution> {
    let n = gs.len();
    integrate_ode(
        |t, y, d| {
            let mut prev = Complex64::new(1.0, 0.0);
            for k in 0..n {
                let v = gs[k](t) * prev;
                d[2 * k] = v.re;
                d[2 * k + 1] = v.im;
                prev = Complex64::new(y[2 * k], y[2 * k + 1]);
            }
        },
        span,
        &vec![0.0; 2 * n],
        &opts.ode(),
    )
}

/// `M_n(g_1, ..., g_n)(x, x') = ∫_{x <= t_1 <= ... <= t_n <= x'} Π g_k(t_k)`.
pub fn multi_m(gs: &[ComplexFn<'_>], x: f64, xprime: f64, opts: &ChainOptions) -> Result<Complex64> {
    if gs.is_empty() {
        return Err(SpectraError::input("need at least one function"));
    }
    if x > xprime {
        return Err(SpectraError::input(format!("need x <= x', got ({x}, {xprime})")));
    }
    if x == xprime {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let sol = forward_chain(gs, (x, xprime), opts)?;
    let y = sol.final_state();
    let n = gs.len();
    Ok(Complex64::new(y[2 * n - 2], y[2 * n - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MStar {
    pub value: f64,
    pub x: f64,
    pub xprime: f64,
}

/// `sup |M_n(x, x')|` over `x <= x'` on `grid`, followed by one local
/// refinement pass around the grid maximizer.
pub fn multi_m_star(gs: &[ComplexFn<'_>], grid: &[f64], opts: &ChainOptions) -> Result<MStar> {
    if grid.len() < 2 {
        return Err(SpectraError::input("M_n* needs a grid with at least two points"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SpectraError::input("grid must be strictly increasing"));
    }
    if gs.is_empty() {
        return Err(SpectraError::input("need at least one function"));
    }
    let n = gs.len();
    let end = grid[grid.len() - 1];
    let rows: Vec<MStar> = (0..grid.len() - 1)
        .into_par_iter()
        .map(|i| {
            let sol = forward_chain(gs, (grid[i], end), opts)?;
            let mut best = MStar {
                value: 0.0,
                x: grid[i],
                xprime: grid[i],
            };
            let mut buf = vec![0.0; 2 * n];
            for &xp in &grid[i + 1..] {
                sol.eval_into(xp, &mut buf)?;
                let v = Complex64::new(buf[2 * n - 2], buf[2 * n - 1]).norm();
                if v > best.value {
                    best = MStar {
                        value: v,
                        x: grid[i],
                        xprime: xp,
                    };
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let mut best = rows
        .into_iter()
        .fold(MStar { value: 0.0, x: grid[0], xprime: grid[0] }, |a, b| if b.value > a.value { b } else { a });

    // refinement: half-steps around the maximizer
    let idx = |v: f64| grid.iter().position(|&g| g == v).unwrap_or(0);
    let (i, j) = (idx(best.x), idx(best.xprime));
    let around = |k: usize| -> Vec<f64> {
        let mut c = vec![grid[k]];
        if k > 0 {
            c.push(0.5 * (grid[k - 1] + grid[k]));
        }
        if k + 1 < grid.len() {
            c.push(0.5 * (grid[k] + grid[k + 1]));
        }
        c
    };
    for &x in &around(i) {
        for &xp in &around(j) {
            if xp <= x {
                continue;
            }
            let v = multi_m(gs, x, xp, opts)?.norm();
            if v > best.value {
                best = MStar { value: v, x, xprime: xp };
            }
        }
    }
    Ok(best)
}

/// The alternating pattern `g_k = conj(g)` when `n - k` is even and `g`
/// otherwise (`k = 1..=n`), as in the WKB series terms.
pub fn conjugate_pattern(n: usize) -> Vec<bool> {
    (1..=n).map(|k| (n - k) % 2 == 0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub value: Complex64,
    /// `(cutoff, value)` along the ladder.
    pub ladder: Vec<(f64, Complex64)>,
    /// `|last - previous|`.
    pub spread: f64,
    pub converged: bool,
}

/// Backward chain for suffix products: with `h_j = g_{n-j+1}`,
/// `Z_j' = -h_j χ_{[0, y_{n-j+1}]} Z_{j-1}`, `Z_0 = 1`, `Z_j(Y) = 0`; then
/// `Z_j(x) = B_j(g_{n-j+1}, ..., g_n)(x)`.
fn backward_chain(
    gs: &[ComplexFn<'_>],
    cutoffs: &[f64],
    x: f64,
    opts: &ChainOptions,
) -> Result<DenseSolution> {
    let n = gs.len();
    let top = cutoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut o = opts.ode();
    o.breakpoints.extend(cutoffs.iter().copied());
    integrate_ode(
        |t, z, d| {
            let mut prev = Complex64::new(1.0, 0.0);
            for j in 1..=n {
                let k = n - j;
                let v = if t <= cutoffs[k] { -gs[k](t) * prev } else { Complex64::new(0.0, 0.0) };
                d[2 * (j - 1)] = v.re;
                d[2 * (j - 1) + 1] = v.im;
                prev = Complex64::new(z[2 * (j - 1)], z[2 * (j - 1) + 1]);
            }
        },
        (top, x),
        &vec![0.0; 2 * n],
        &o,
    )
}

/// `∫_x^{y_1} ∫_{t_1}^{y_2} ... Π g_j(t_j)` with explicit per-function cutoffs.
pub fn tail_b_truncated(gs: &[ComplexFn<'_>], x: f64, cutoffs: &[f64], opts: &ChainOptions) -> Result<Complex64> {
    if gs.is_empty() || cutoffs.len() != gs.len() {
        return Err(SpectraError::input("need one cutoff per function"));
    }
    let top = cutoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top <= x {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let sol = backward_chain(gs, cutoffs, x, opts)?;
    let z = sol.final_state();
    let n = gs.len();
    Ok(Complex64::new(z[2 * n - 2], z[2 * n - 1]))
}

/// All suffix tails `B_j(g_{n-j+1}, ..., g_n)` for `j = 1..=n` at every point
/// of `xs` (descending evaluation is fine), from a single backward pass with a
/// common cutoff.
pub fn tail_b_suffixes(
    gs: &[ComplexFn<'_>],
    xs: &[f64],
    cutoff: f64,
    opts: &ChainOptions,
) -> Result<Vec<Vec<Complex64>>> {
    let n = gs.len();
    if n == 0 || xs.is_empty() {
        return Err(SpectraError::input("need functions and evaluation points"));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let cutoffs = vec![cutoff; n];
    if cutoff <= lo {
        return Ok(vec![vec![Complex64::new(0.0, 0.0); n]; xs.len()]);
    }
    let sol = backward_chain(gs, &cutoffs, lo, opts)?;
    let mut buf = vec![0.0; 2 * n];
    xs.iter()
        .map(|&x| {
            if x >= cutoff {
                return Ok(vec![Complex64::new(0.0, 0.0); n]);
            }
            sol.eval_into(x, &mut buf)?;
            Ok((0..n).map(|j| Complex64::new(buf[2 * j], buf[2 * j + 1])).collect())
        })
        .collect()
}

/// `B_n(g_1, ..., g_n)(x)` as a limit over the geometric cutoff ladder
/// `y, 2y, 4y, ...` (at most `levels` rungs); per-function cutoffs are
/// staggered (`y_j = Y (1 + (j-1)/(2n))`) so the limit is the multi-cutoff one.
pub fn tail_b(
    gs: &[ComplexFn<'_>],
    x: f64,
    y0: f64,
    levels: usize,
    cauchy_tol: f64,
    opts: &ChainOptions,
) -> Result<TailReport> {
    if !(y0 > x) {
        return Err(SpectraError::input("first cutoff must exceed x"));
    }
    if levels < 2 {
        return Err(SpectraError::input("cutoff ladder needs at least two rungs"));
    }
    let n = gs.len();
    let mut ladder = Vec::with_capacity(levels);
    let mut y = y0;
    for _ in 0..levels {
        let cutoffs: Vec<f64> = (0..n).map(|j| y * (1.0 + j as f64 / (2.0 * n as f64))).collect();
        let v = tail_b_truncated(gs, x, &cutoffs, opts)?;
        ladder.push((y, v));
        let k = ladder.len();
        if k >= 2 && (ladder[k - 1].1 - ladder[k - 2].1).norm() <= cauchy_tol {
            break;
        }
        y *= 2.0;
    }
    let k = ladder.len();
    let spread = (ladder[k - 1].1 - ladder[k - 2].1).norm();
    Ok(TailReport {
        value: ladder[k - 1].1,
        converged: spread <= cauchy_tol,
        spread,
        ladder,
    })
}

/// `w(x) e^{-i h(x)}` and the kernel `F = w e^{-ih} V` at one energy, with
/// `w = i / (2γ')` and `h = 2γ - ∫_0^x V/γ'`, on `[0, X]`.
#[derive(Debug, Clone)]
pub struct OscKernel {
    data: FloquetData,
    v: DecayingPotential,
    x_max: f64,
    // ∫_0^x V/γ'
    phase: DenseSolution,
}

impl OscKernel {
    pub fn new(v0: &PeriodicPotential, v: &DecayingPotential, energy: f64, x_max: f64, tol: &Tolerance) -> Result<Self> {
        let data = floquet_data(v0, energy, tol)?;
        OscKernel::with_data(data, v, x_max, tol)
    }

    pub fn with_data(data: FloquetData, v: &DecayingPotential, x_max: f64, tol: &Tolerance) -> Result<Self> {
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(SpectraError::input("kernel range must be positive"));
        }
        let mut breaks = data.v0().breakpoints_in(0.0, x_max);
        breaks.extend(v.breakpoints_in(0.0, x_max));
        let fine = Tolerance::new(tol.abs_tol.min(1e-12), tol.rel_tol.min(1e-12), tol.max_steps)?;
        let phase = integrate_ode(
            |x, _, d| d[0] = v.eval(x) / data.gamma_prime(x),
            (0.0, x_max),
            &[0.0],
            &OdeOptions::new(fine).with_breakpoints(breaks).with_max_step(1.0),
        )?;
        Ok(OscKernel {
            data,
            v: v.clone(),
            x_max,
            phase,
        })
    }

    pub fn data(&self) -> &FloquetData {
        &self.data
    }

    pub fn potential(&self) -> &DecayingPotential {
        &self.v
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.data.v0().breakpoints_in(0.0, self.x_max);
        b.extend(self.v.breakpoints_in(0.0, self.x_max));
        b
    }

    pub fn w(&self, x: f64) -> Complex64 {
        Complex64::new(0.0, 0.5 / self.data.gamma_prime(x))
    }

    pub fn h(&self, x: f64) -> f64 {
        let mut c = [0.0];
        self.phase
            .eval_into(x.clamp(0.0, self.x_max), &mut c)
            .expect("clamped into range");
        2.0 * self.data.gamma(x) - c[0]
    }

    /// `w e^{-ih}`.
    pub fn oscillator(&self, x: f64) -> Complex64 {
        self.w(x) * Complex64::from_polar(1.0, -self.h(x))
    }

    /// `F(x) = w e^{-ih} V`, zero beyond the kernel range.
    pub fn eval(&self, x: f64) -> Complex64 {
        if x > self.x_max {
            return Complex64::new(0.0, 0.0);
        }
        self.oscillator(x) * self.v.eval(x)
    }

    // panels short enough to resolve e^{-ih}
    fn panels(&self, a: f64, b: f64) -> Vec<f64> {
        let (_, gmax) = self.data.gamma_prime_range(64);
        let per_unit = (2.0 * gmax / PI).ceil().max(1.0) * 2.0;
        with_breaks(unit_points(a, b, per_unit), &self.breakpoints())
    }
}

/// `S(f) = ∫_0^X w e^{-ih} f`.
pub fn s_operator(kernel: &OscKernel, f: RealFn<'_>, tol: &Tolerance) -> Result<Complex64> {
    let pts = kernel.panels(0.0, kernel.x_max);
    quad_points(|x| kernel.oscillator(x) * f(x), &pts, tol)
}

/// `S*(f) = max_{y in y_grid} |∫_y^X w e^{-ih} f|`.
pub fn s_star(kernel: &OscKernel, f: RealFn<'_>, y_grid: &[f64], tol: &Tolerance) -> Result<f64> {
    if y_grid.is_empty() {
        return Err(SpectraError::input("empty y grid"));
    }
    let mut pts = kernel.panels(0.0, kernel.x_max);
    pts = with_breaks(pts, y_grid);
    let pieces: Vec<Complex64> = pts
        .par_windows(2)
        .map(|w| quad_points(|x| kernel.oscillator(x) * f(x), &[w[0], w[1]], tol))
        .collect::<Result<_>>()?;
    let mut suffix = vec![Complex64::new(0.0, 0.0); pts.len()];
    for i in (0..pieces.len()).rev() {
        suffix[i] = suffix[i + 1] + pieces[i];
    }
    let mut best: f64 = 0.0;
    for &y in y_grid {
        let v = if y <= 0.0 {
            suffix[0].norm()
        } else if y >= kernel.x_max {
            0.0
        } else {
            let i = pts.partition_point(|&p| p < y);
            suffix[i].norm()
        };
        best = best.max(v);
    }
    Ok(best)
}

/// Which operator `G^{(s)}` is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OscOperator {
    S,
    SStar,
}

/// `G^{(s)}_{P(f)(E)} = Σ_m m^s (Σ_j |P(f χ_j^m)(E)|²)^{1/2}` over the structure.
pub fn g_norm(
    kernel: &OscKernel,
    f: RealFn<'_>,
    structure: &MartingaleStructure,
    s: f64,
    op: OscOperator,
    tol: &Tolerance,
) -> Result<BNorm> {
    let depth = structure.depth;
    match op {
        OscOperator::S => {
            let g = |x: f64| kernel.oscillator(x) * f(x);
            let cells = structure.cells(depth);
            let vals: Vec<Complex64> = cells
                .par_iter()
                .map(|&(a, b)| quad_points(&g, &kernel.panels(a, b), tol))
                .collect::<Result<_>>()?;
            Ok(BNorm::from_finest(vals, depth, s))
        }
        OscOperator::SStar => {
            // suffix sums inside each cell on the finest panel partition
            let mut edges: Vec<f64> = structure.levels.last().cloned().unwrap_or_default();
            edges.push(0.0);
            edges.push(structure.x_max);
            let pts = with_breaks(kernel.panels(0.0, structure.x_max), &edges);
            let pieces: Vec<Complex64> = pts
                .par_windows(2)
                .map(|w| quad_points(|x| kernel.oscillator(x) * f(x), &[w[0], w[1]], tol))
                .collect::<Result<_>>()?;
            let mut terms = Vec::with_capacity(depth);
            for m in 1..=depth {
                let mut sq = 0.0;
                for (a, b) in structure.cells(m) {
                    let i0 = pts.partition_point(|&p| p < a);
                    let i1 = pts.partition_point(|&p| p < b);
                    let mut acc = Complex64::new(0.0, 0.0);
                    let mut sup: f64 = 0.0;
                    for i in (i0..i1.min(pieces.len())).rev() {
                        acc += pieces[i];
                        sup = sup.max(acc.norm());
                    }
                    sq += sup * sup;
                }
                terms.push((m as f64).powf(s) * sq.sqrt());
            }
            Ok(BNorm {
                s,
                value: terms.iter().sum(),
                depth,
                last_level: *terms.last().unwrap_or(&0.0),
                level_terms: terms,
            })
        }
    }
}

/// `Σ_{m,n} f_m f_n / (1 + |m - n|²)` divided by `Σ f_n²`.
pub fn convolution_ratio(f: &[f64]) -> f64 {
    let denom: f64 = f.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let mut num = 0.0;
    for (m, a) in f.iter().enumerate() {
        for (n, b) in f.iter().enumerate() {
            let d = m as f64 - n as f64;
            num += a * b / (1.0 + d * d);
        }
    }
    num / denom
}

/// `Σ_{k in Z} 1/(1 + k²) = π coth π`, the Young-inequality constant for
/// [`convolution_ratio`].
pub fn convolution_constant() -> f64 {
    PI / PI.tanh()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerance {
        Tolerance::uniform(1e-12)
    }

    fn chain() -> ChainOptions {
        ChainOptions::new(Tolerance::uniform(1e-12))
    }

    fn one(_: f64) -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn lp_norm_of_indicator() {
        let f = |x: f64| if x <= 2.0 { 1.0 } else { 0.0 };
        let n2 = lp_l1_norm(&f, 2.0, 5.0, &[2.0], &tol()).unwrap();
        assert_abs_diff_eq!(n2.value, 2f64.sqrt(), epsilon = 1e-12);
        let n1 = lp_l1_norm(&f, 1.0, 5.0, &[2.0], &tol()).unwrap();
        assert_abs_diff_eq!(n1.value, 2.0, epsilon = 1e-12);
        assert!(lp_l1_norm(&f, 0.5, 5.0, &[], &tol()).is_err());
    }

    #[test]
    fn lp_norm_matches_direct_sum() {
        let f = |x: f64| 1.0 / (1.0 + x);
        let n = lp_l1_norm(&f, 2.0, 1e4, &[], &tol()).unwrap();
        let direct: f64 = (0..10_000)
            .map(|k| (((k + 2) as f64) / ((k + 1) as f64)).ln().powi(2))
            .sum::<f64>()
            .sqrt();
        assert_abs_diff_eq!(n.value, direct, epsilon = 1e-10);
    }

    #[test]
    fn martingale_uniform_mass() {
        let f = |x: f64| if x <= 4.0 { 1.0 } else { 0.0 };
        let m = build_martingale(&f, 1.0, 2, 4.0, &[], &tol()).unwrap();
        assert_abs_diff_eq!(m.levels[0][0], 2.0, epsilon = 1e-12);
        for (a, b) in m.levels[1].iter().zip([1.0, 2.0, 3.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(m.cells(2).len(), 4);
    }

    #[test]
    fn martingale_exponential_split() {
        let f = |x: f64| (-x).exp();
        let m = build_martingale(&f, 1.0, 1, 20.0, &[], &tol()).unwrap();
        let t = -((1.0 + (-20f64).exp()) / 2.0).ln();
        assert_abs_diff_eq!(m.levels[0][0], t, epsilon = 1e-10);
    }

    #[test]
    fn martingale_is_adapted() {
        let f = |x: f64| (1.0 + x).powf(-0.9);
        let m = build_martingale(&f, 1.5, 8, 200.0, &[], &tol()).unwrap();
        let worst = m.adaptedness(&f, &[], &tol()).unwrap();
        assert!(worst <= 1.0 + 1e-9, "worst ratio {worst}");
        // nesting
        for l in 1..m.depth {
            for c in &m.levels[l - 1] {
                assert!(m.levels[l].contains(c));
            }
        }
    }

    #[test]
    fn b_norm_hand_computation() {
        let f = |x: f64| if x <= 4.0 { 1.0 } else { 0.0 };
        let m = build_martingale(&f, 1.0, 2, 4.0, &[], &tol()).unwrap();
        let g = |x: f64| Complex64::new(f(x), 0.0);
        let b = b_norm(&g, &m, 1.0, &[], &tol()).unwrap();
        assert_abs_diff_eq!(b.value, 2.0 * 2f64.sqrt() + 4.0, epsilon = 1e-10);
        let z = |_: f64| Complex64::new(0.0, 0.0);
        assert_eq!(b_norm(&z, &m, 1.0, &[], &tol()).unwrap().value, 0.0);
    }

    #[test]
    fn b_norm_is_monotone_in_depth() {
        let f = |x: f64| (1.0 + x).powf(-0.9);
        let g = |x: f64| Complex64::from_polar((1.0 + x).powf(-0.9), x);
        let mut last = 0.0;
        for depth in 1..=6 {
            let m = build_martingale(&f, 1.5, depth, 100.0, &[], &tol()).unwrap();
            let b = b_norm(&g, &m, 1.0, &[], &tol()).unwrap();
            assert!(b.value >= last);
            last = b.value;
        }
    }

    #[test]
    fn simplex_volumes() {
        let gs: Vec<ComplexFn> = vec![&one; 8];
        for n in 1..=8 {
            let v = multi_m(&gs[..n], 0.0, 1.7, &chain()).unwrap();
            let want = 1.7f64.powi(n as i32) / (1..=n).product::<usize>() as f64;
            assert_abs_diff_eq!(v.re, want, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(multi_m(&gs[..2], 0.0, 1.0, &chain()).unwrap().re, 0.5, epsilon = 1e-12);
        assert!(multi_m(&gs[..2], 1.0, 0.0, &chain()).is_err());
    }

    #[test]
    fn simplex_matches_exact_cell_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<[f64; 3]> = (0..3).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let vr = &vals;
        let pc = |k: usize| move |x: f64| Complex64::new(vr[k][(x.floor() as usize).min(2)], 0.0);
        let (g1, g2, g3) = (pc(0), pc(1), pc(2));
        let gs: Vec<ComplexFn> = vec![&g1, &g2, &g3];
        let opts = chain().with_breakpoints(vec![1.0, 2.0]);
        let v = multi_m(&gs, 0.0, 3.0, &opts).unwrap().re;
        // oracle: 99 aligned cells per axis; ordered cell triples contribute
        // h³, h³/2 or h³/6 depending on coincidences
        let n = 99;
        let h = 3.0 / n as f64;
        let c = |k: usize, i: usize| vals[k][i * 3 / n];
        let mut s = 0.0;
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let w = if i == j && j == k {
                        1.0 / 6.0
                    } else if i == j || j == k {
                        0.5
                    } else {
                        1.0
                    };
                    s += w * c(0, i) * c(1, j) * c(2, k);
                }
            }
        }
        s *= h * h * h;
        assert_relative_eq!(v, s, max_relative = 1e-4);
    }

    #[test]
    fn m_star_of_indicator() {
        let g = |x: f64| Complex64::new(if x <= 1.0 { 1.0 } else { 0.0 }, 0.0);
        let gs: Vec<ComplexFn> = vec![&g, &g];
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let opts = chain().with_breakpoints(vec![1.0]);
        let r = multi_m_star(&gs, &grid, &opts).unwrap();
        assert_abs_diff_eq!(r.value, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(r.x, 0.0, epsilon = 1e-12);
        assert!(multi_m_star(&gs, &[], &opts).is_err());
    }

    #[test]
    fn m_star_interior_maximizer() {
        // ∫_x^{x'} cos t is maximal on [π/2 .. ] patterns inside the support
        let g = |x: f64| Complex64::new(x.cos(), 0.0);
        let gs: Vec<ComplexFn> = vec![&g];
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let r = multi_m_star(&gs, &grid, &chain()).unwrap();
        // dense oracle: sup |sin x' - sin x| = 2
        assert_abs_diff_eq!(r.value, 2.0, epsilon = 2e-3);
        assert!(r.xprime < 10.0);
    }

    #[test]
    fn tail_of_exponentials() {
        let g = |t: f64| Complex64::new((-t).exp(), 0.0);
        let gs: Vec<ComplexFn> = vec![&g, &g];
        for x in [0.0, 0.5, 2.0] {
            let r = tail_b(&gs, x, x + 20.0, 6, 1e-10, &chain()).unwrap();
            assert!(r.converged);
            assert_abs_diff_eq!(r.value.re, (-2.0 * x).exp() / 2.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn tail_derivative_identity() {
        let g1 = |t: f64| Complex64::from_polar(1.0 / (1.0 + t).powi(2), 0.5 * t);
        let g2 = |t: f64| Complex64::new((-0.3 * t).exp(), 0.0);
        let gs: Vec<ComplexFn> = vec![&g1, &g2];
        let only2: Vec<ComplexFn> = vec![&g2];
        let h = 1e-4;
        let cut = [200.0, 200.0];
        for i in 0..20 {
            let x = 0.3 + 0.45 * i as f64;
            let bp = tail_b_truncated(&gs, x + h, &cut, &chain()).unwrap();
            let bm = tail_b_truncated(&gs, x - h, &cut, &chain()).unwrap();
            let b1 = tail_b_truncated(&only2, x, &cut[..1], &chain()).unwrap();
            let fd = (bp - bm) / (2.0 * h);
            assert!((fd + g1(x) * b1).norm() < 1e-4);
        }
    }

    #[test]
    fn oscillatory_tail_matches_integration_by_parts() {
        let g = |t: f64| Complex64::from_polar(1.0 / (1.0 + t), t);
        let gs: Vec<ComplexFn> = vec![&g];
        let x = 1.0;
        let r = tail_b(&gs, x, 2.0 * PI * 160.0, 12, 1e-5, &chain()).unwrap();
        // oracle: quadrature to Y plus two integration-by-parts tail terms
        let y = 2.0 * PI * 5000.0;
        let pts: Vec<f64> = std::iter::once(x).chain((1..=10_000).map(|k| k as f64 * PI)).filter(|&p| p >= x && p <= y).collect();
        let head: Complex64 = quad_points(g, &pts, &Tolerance::uniform(1e-13)).unwrap();
        let e = Complex64::from_polar(1.0, y);
        let oracle = head + Complex64::i() * e / (1.0 + y) + e / (1.0 + y).powi(2);
        assert!((r.value - oracle).norm() < 1e-5, "{} vs {oracle}", r.value);
    }

    #[test]
    fn suffixes_match_individual_tails() {
        let g = |t: f64| Complex64::from_polar((-0.2 * t).exp(), t);
        let gc = |t: f64| g(t).conj();
        // pattern for n = 3: conj, g, conj
        let gs: Vec<ComplexFn> = vec![&gc, &g, &gc];
        let xs = [0.0, 1.0, 2.5];
        let all = tail_b_suffixes(&gs, &xs, 120.0, &chain()).unwrap();
        for (xi, &x) in xs.iter().enumerate() {
            let b3 = tail_b_truncated(&gs, x, &[120.0; 3], &chain()).unwrap();
            assert!((all[xi][2] - b3).norm() < 1e-9);
            let b1 = tail_b_truncated(&gs[2..], x, &[120.0], &chain()).unwrap();
            assert!((all[xi][0] - b1).norm() < 1e-9);
        }
        assert_eq!(conjugate_pattern(3), vec![true, false, true]);
    }

    #[test]
    fn free_kernel_and_s_operator() {
        let z = PeriodicPotential::zero();
        let v = DecayingPotential::zero();
        let e: f64 = 1.0;
        let k = OscKernel::new(&z, &v, e, 5.0, &Tolerance::default()).unwrap();
        assert!((k.w(0.3) - Complex64::new(0.0, 0.5)).norm() < 1e-9);
        assert_abs_diff_eq!(k.h(2.0), 4.0, epsilon = 1e-8);
        assert_eq!(k.eval(1.0), Complex64::new(0.0, 0.0));
        let zero = |_: f64| 0.0;
        assert_eq!(s_operator(&k, &zero, &tol()).unwrap(), Complex64::new(0.0, 0.0));
        let ind = |x: f64| if x <= 1.0 { 1.0 } else { 0.0 };
        let s = s_operator(&k, &ind, &Tolerance::uniform(1e-11)).unwrap();
        let a = 2.0 * e.sqrt();
        let want = k.w(0.0) * (Complex64::from_polar(1.0, -a) - 1.0) / Complex64::new(0.0, -a);
        assert!((s - want).norm() < 1e-8, "{s} vs {want}");
    }

    #[test]
    fn kernel_phase_with_potential() {
        let z = PeriodicPotential::zero();
        let v = DecayingPotential::parse("power:1,1").unwrap();
        let k = OscKernel::new(&z, &v, 1.0, 50.0, &Tolerance::default()).unwrap();
        for x in [0.5, 3.0, 20.0] {
            assert_abs_diff_eq!(k.h(x), 2.0 * x - (1.0 + x).ln(), epsilon = 1e-8);
        }
    }

    #[test]
    fn g_norm_dominates_sup_cells() {
        let v0 = PeriodicPotential::mathieu(1.0);
        let v = DecayingPotential::parse("power:1,0.9").unwrap();
        let k = OscKernel::new(&v0, &v, 4.0, 100.0, &Tolerance::default()).unwrap();
        let f = |x: f64| v.eval(x);
        let m = build_martingale(&f, 1.5, 5, 100.0, &[], &Tolerance::default()).unwrap();
        let gs = g_norm(&k, &f, &m, 1.0, OscOperator::S, &Tolerance::uniform(1e-10)).unwrap();
        let gstar = g_norm(&k, &f, &m, 1.0, OscOperator::SStar, &Tolerance::uniform(1e-10)).unwrap();
        for (l, (a, b)) in gs.level_terms.iter().zip(&gstar.level_terms).enumerate() {
            assert!(b + 1e-10 >= *a, "level {}: {a} > {b}", l + 1);
        }
        let zero = |_: f64| 0.0;
        assert_eq!(g_norm(&k, &zero, &m, 1.0, OscOperator::S, &tol()).unwrap().value, 0.0);
        // S-star over y in [0, X] dominates |S|
        let ys: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let ss = s_star(&k, &f, &ys, &Tolerance::uniform(1e-10)).unwrap();
        let s = s_operator(&k, &f, &Tolerance::uniform(1e-10)).unwrap();
        assert!(ss + 1e-9 >= s.norm());
    }

    #[test]
    fn convolution_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = convolution_constant();
        for _ in 0..100 {
            let n = rng.gen_range(1..80);
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            assert!(convolution_ratio(&f) <= c);
        }
        let flat = vec![1.0; 400];
        assert!(convolution_ratio(&flat) > 0.95 * c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn lp_embedding_monotone(alpha in 0.5f64..2.0, p in 1.0f64..2.0, dq in 0.0f64..1.0) {
            let f = move |x: f64| (1.0 + x).powf(-alpha);
            let np = lp_l1_norm(&f, p, 50.0, &[], &Tolerance::uniform(1e-10)).unwrap();
            let nq = lp_l1_norm(&f, p + dq, 50.0, &[], &Tolerance::uniform(1e-10)).unwrap();
            prop_assert!(nq.value <= np.value * (1.0 + 1e-12));
        }
    }
}
