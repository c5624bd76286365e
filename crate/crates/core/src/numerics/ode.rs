//! Dormand-Prince 5(4) with the standard fourth-order continuous extension.
//!
//! Integration runs in either direction. Declared breakpoints split the span
//! into segments that are integrated separately, so the scheme never steps
//! across a discontinuity of the right-hand side.

use super::Tolerance;
use crate::error::{Result, SpectraError};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// difference between the fifth- and fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Options for [`integrate_ode`] and [`propagate`].
#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub tol: Tolerance,
    /// Points where the right-hand side may be discontinuous. Points outside
    /// the integration span are ignored.
    pub breakpoints: Vec<f64>,
    /// Upper bound on the step magnitude.
    pub max_step: Option<f64>,
}

impl OdeOptions {
    pub fn new(tol: Tolerance) -> Self {
        OdeOptions {
            tol,
            breakpoints: Vec::new(),
            max_step: None,
        }
    }

    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Self {
        self.breakpoints = breakpoints;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = Some(max_step);
        self
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions::new(Tolerance::default())
    }
}

/// Continuous solution of an initial value problem.
///
/// Node values are the accepted step results and are returned verbatim when
/// the solution is evaluated exactly at a node.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    dim: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    // per step: rc2, rc3, rc4, rc5 (dim entries each)
    coef: Vec<f64>,
    forward: bool,
}

impl DenseSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x_start(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_end(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    /// Accepted step endpoints, in integration order.
    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn node_state(&self, i: usize) -> &[f64] {
        &self.ys[i * self.dim..(i + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.node_state(self.xs.len() - 1)
    }

    pub fn step_count(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.bounds();
        x >= lo && x <= hi
    }

    fn bounds(&self) -> (f64, f64) {
        if self.forward {
            (self.x_start(), self.x_end())
        } else {
            (self.x_end(), self.x_start())
        }
    }

    fn locate(&self, x: f64) -> usize {
        let steps = self.xs.len() - 1;
        let idx = if self.forward {
            self.xs.partition_point(|&v| v <= x)
        } else {
            self.xs.partition_point(|&v| v >= x)
        };
        idx.saturating_sub(1).min(steps.saturating_sub(1))
    }

    /// Evaluate the interpolant at `x` into `out`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        if !self.contains(x) {
            let (lo, hi) = self.bounds();
            return Err(SpectraError::input(format!(
                "x = {x} outside solution span [{lo}, {hi}]"
            )));
        }
        let n = self.dim;
        if self.xs.len() == 1 {
            out.copy_from_slice(self.node_state(0));
            return Ok(());
        }
        let i = self.locate(x);
        if x == self.xs[i] {
            out.copy_from_slice(self.node_state(i));
            return Ok(());
        }
        if x == self.xs[i + 1] {
            out.copy_from_slice(self.node_state(i + 1));
            return Ok(());
        }
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let s1 = 1.0 - s;
        let y0 = self.node_state(i);
        let c = &self.coef[i * 4 * n..(i + 1) * 4 * n];
        for k in 0..n {
            let (r2, r3, r4, r5) = (c[k], c[n + k], c[2 * n + k], c[3 * n + k]);
            out[k] = y0[k] + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }
}

trait StepSink {
    #[allow(clippy::too_many_arguments)]
    fn accept(&mut self, x_new: f64, h: f64, y0: &[f64], y1: &[f64], k: &Stages);
}

struct NoDense;

impl StepSink for NoDense {
    fn accept(&mut self, _: f64, _: f64, _: &[f64], _: &[f64], _: &Stages) {}
}

impl StepSink for DenseSolution {
    fn accept(&mut self, x_new: f64, h: f64, y0: &[f64], y1: &[f64], k: &Stages) {
        let n = self.dim;
        self.xs.push(x_new);
        self.ys.extend_from_slice(y1);
        let base = self.coef.len();
        self.coef.resize(base + 4 * n, 0.0);
        let c = &mut self.coef[base..];
        for i in 0..n {
            let ydiff = y1[i] - y0[i];
            let bspl = h * k.k1[i] - ydiff;
            c[i] = ydiff;
            c[n + i] = bspl;
            c[2 * n + i] = ydiff - h * k.k7[i] - bspl;
            c[3 * n + i] = h
                * (D1 * k.k1[i]
                    + D3 * k.k3[i]
                    + D4 * k.k4[i]
                    + D5 * k.k5[i]
                    + D6 * k.k6[i]
                    + D7 * k.k7[i]);
        }
    }
}

struct Stages {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    k5: Vec<f64>,
    k6: Vec<f64>,
    k7: Vec<f64>,
    tmp: Vec<f64>,
    y1: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Stages {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            k5: vec![0.0; n],
            k6: vec![0.0; n],
            k7: vec![0.0; n],
            tmp: vec![0.0; n],
            y1: vec![0.0; n],
        }
    }
}

fn check_finite(x: f64, v: &[f64]) -> Result<()> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(SpectraError::NonFinite { x })
    }
}

fn segment_ends(x0: f64, x1: f64, breakpoints: &[f64]) -> Vec<f64> {
    let dir = (x1 - x0).signum();
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| (b - x0) * dir > 0.0 && (x1 - b) * dir > 0.0)
        .collect();
    inner.sort_by(|a, b| (a * dir).partial_cmp(&(b * dir)).unwrap());
    inner.dedup();
    inner.push(x1);
    inner
}

fn nudge(x: f64, dir: f64) -> f64 {
    x + dir * 4.0 * f64::EPSILON * x.abs().max(1.0)
}

fn weighted_rms(v: &[f64], y0: &[f64], y1: &[f64], tol: &Tolerance) -> f64 {
    let n = v.len() as f64;
    let s: f64 = v
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = tol.abs_tol + tol.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn drive<F, S>(
    mut rhs: F,
    x0: f64,
    x1: f64,
    y0: &[f64],
    opts: &OdeOptions,
    sink: &mut S,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    S: StepSink,
{
    let n = y0.len();
    if n == 0 {
        return Err(SpectraError::input("empty state vector"));
    }
    if !x0.is_finite() || !x1.is_finite() {
        return Err(SpectraError::input("integration span must be finite"));
    }
    check_finite(x0, y0)?;
    let mut y = y0.to_vec();
    if x0 == x1 {
        return Ok(y);
    }
    let tol = opts.tol;
    let dir = (x1 - x0).signum();
    let max_step = opts.max_step.unwrap_or(f64::INFINITY).abs();
    let mut k = Stages::new(n);
    let mut x = x0;
    let mut steps = 0usize;
    let mut h_guess: Option<f64> = None;

    for end in segment_ends(x0, x1, &opts.breakpoints) {
        // evaluate one-sided at segment ends so a jump sits outside the segment
        rhs(nudge(x, dir), &y, &mut k.k1);
        check_finite(x, &k.k1)?;
        let seg_len = (end - x).abs();
        let mut h = match h_guess {
            Some(h) => h.abs(),
            None => initial_step(&mut rhs, x, &y, &k.k1, dir, &tol, &mut k.tmp, &mut k.k2)?,
        }
        .min(seg_len)
        .min(max_step);
        let mut last_rejected = false;

        loop {
            steps += 1;
            if steps > tol.max_steps {
                return Err(SpectraError::StepLimit {
                    max_steps: tol.max_steps,
                    x_reached: x,
                });
            }
            let remaining = (end - x).abs();
            let mut last = false;
            if h >= remaining * (1.0 - 1e-12) || remaining - h < 1e-9 * h {
                h = remaining;
                last = true;
            }
            let hs = h * dir;
            if hs.abs() <= 8.0 * f64::EPSILON * x.abs().max(1.0) {
                return Err(SpectraError::Precision(format!(
                    "step size underflow at x = {x}"
                )));
            }

            for i in 0..n {
                k.tmp[i] = y[i] + hs * A21 * k.k1[i];
            }
            rhs(x + C2 * hs, &k.tmp, &mut k.k2);
            for i in 0..n {
                k.tmp[i] = y[i] + hs * (A31 * k.k1[i] + A32 * k.k2[i]);
            }
            rhs(x + C3 * hs, &k.tmp, &mut k.k3);
            for i in 0..n {
                k.tmp[i] = y[i] + hs * (A41 * k.k1[i] + A42 * k.k2[i] + A43 * k.k3[i]);
            }
            rhs(x + C4 * hs, &k.tmp, &mut k.k4);
            for i in 0..n {
                k.tmp[i] = y[i]
                    + hs * (A51 * k.k1[i] + A52 * k.k2[i] + A53 * k.k3[i] + A54 * k.k4[i]);
            }
            rhs(x + C5 * hs, &k.tmp, &mut k.k5);
            for i in 0..n {
                k.tmp[i] = y[i]
                    + hs * (A61 * k.k1[i]
                        + A62 * k.k2[i]
                        + A63 * k.k3[i]
                        + A64 * k.k4[i]
                        + A65 * k.k5[i]);
            }
            let x_new = if last { end } else { x + hs };
            let x_eval = if last { nudge(end, -dir) } else { x_new };
            rhs(x_eval, &k.tmp, &mut k.k6);
            for i in 0..n {
                k.y1[i] = y[i]
                    + hs * (A71 * k.k1[i]
                        + A73 * k.k3[i]
                        + A74 * k.k4[i]
                        + A75 * k.k5[i]
                        + A76 * k.k6[i]);
            }
            rhs(x_eval, &k.y1, &mut k.k7);
            check_finite(x_new, &k.k7)?;
            check_finite(x_new, &k.y1)?;

            for i in 0..n {
                k.tmp[i] = hs
                    * (E1 * k.k1[i]
                        + E3 * k.k3[i]
                        + E4 * k.k4[i]
                        + E5 * k.k5[i]
                        + E6 * k.k6[i]
                        + E7 * k.k7[i]);
            }
            let err = weighted_rms(&k.tmp, &y, &k.y1, &tol);
            if !err.is_finite() {
                return Err(SpectraError::NonFinite { x });
            }
            let mut fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };

            if err <= 1.0 {
                sink.accept(x_new, hs, &y, &k.y1, &k);
                x = x_new;
                std::mem::swap(&mut y, &mut k.y1);
                std::mem::swap(&mut k.k1, &mut k.k7);
                if last_rejected {
                    fac = fac.min(1.0);
                }
                last_rejected = false;
                let h_next = (h * fac).min(max_step);
                if last {
                    h_guess = Some(h_next);
                    break;
                }
                h = h_next;
            } else {
                last_rejected = true;
                h *= fac.min(1.0);
            }
        }
    }
    Ok(y)
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    rhs: &mut F,
    x: f64,
    y: &[f64],
    f0: &[f64],
    dir: f64,
    tol: &Tolerance,
    y_probe: &mut [f64],
    f1: &mut [f64],
) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let d0 = weighted_rms(y, y, y, tol);
    let d1 = weighted_rms(f0, y, y, tol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    for i in 0..y.len() {
        y_probe[i] = y[i] + dir * h0 * f0[i];
    }
    rhs(x + dir * h0, y_probe, f1);
    check_finite(x + dir * h0, f1)?;
    for i in 0..y.len() {
        y_probe[i] = f1[i] - f0[i];
    }
    let d2 = weighted_rms(y_probe, y, y, tol) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    Ok((100.0 * h0).min(h1))
}

/// Integrate `y' = rhs(x, y)` from `x_span.0` to `x_span.1` and keep the
/// continuous extension of every step.
pub fn integrate_ode<F>(rhs: F, x_span: (f64, f64), y0: &[f64], opts: &OdeOptions) -> Result<DenseSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut sol = DenseSolution {
        dim: y0.len(),
        xs: vec![x_span.0],
        ys: y0.to_vec(),
        coef: Vec::new(),
        forward: x_span.1 >= x_span.0,
    };
    drive(rhs, x_span.0, x_span.1, y0, opts, &mut sol)?;
    Ok(sol)
}

/// Like [`integrate_ode`] but only returns the final state.
pub fn propagate<F>(rhs: F, x_span: (f64, f64), y0: &[f64], opts: &OdeOptions) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    drive(rhs, x_span.0, x_span.1, y0, opts, &mut NoDense)
}
