//! Periodic backgrounds `V0`, decaying perturbations `V` and their truncations.
//!
//! Potentials are built from short descriptor strings so that every run can be
//! reproduced from its command line:
//!
//! | periodic              | decaying                       |
//! |-----------------------|--------------------------------|
//! | `zero`                | `zero`                         |
//! | `mathieu:A`           | `power:c,alpha`                |
//! | `square:A,w`          | `wvn:c,omega,alpha,phi`        |
//! | `samples:path`        | `bump:c,a,b`                   |
//! |                       | terms joined with `+`          |

use crate::error::{Result, SpectraError};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Anything that can be evaluated as a real potential on the half line.
pub trait Potential: Send + Sync {
    fn eval(&self, x: f64) -> f64;

    /// Points in `[a, b]` where the potential or its derivative may jump.
    fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
enum PeriodicShape {
    Zero,
    Mathieu { amplitude: f64 },
    Square { amplitude: f64, width: f64 },
    Samples { source: String, xs: Vec<f64>, values: Vec<f64> },
}

/// A 1-periodic potential, evaluated by reducing `x` modulo 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPotential {
    shape: PeriodicShape,
    // breakpoints in [0, 1)
    breaks: Vec<f64>,
}

impl PeriodicPotential {
    pub fn zero() -> Self {
        PeriodicPotential {
            shape: PeriodicShape::Zero,
            breaks: Vec::new(),
        }
    }

    pub fn mathieu(amplitude: f64) -> Self {
        PeriodicPotential {
            shape: PeriodicShape::Mathieu { amplitude },
            breaks: Vec::new(),
        }
    }

    pub fn square(amplitude: f64, width: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&width) || !amplitude.is_finite() {
            return Err(SpectraError::Parse(format!(
                "square potential needs finite amplitude and width in [0, 1], got {amplitude}, {width}"
            )));
        }
        let mut breaks = vec![0.0];
        if width > 0.0 && width < 1.0 {
            breaks.push(width);
        }
        Ok(PeriodicPotential {
            shape: PeriodicShape::Square { amplitude, width },
            breaks,
        })
    }

    /// Piecewise-linear potential through `(x, value)` rows with `x` in `[0, 1)`,
    /// closed up periodically between the last and the first row.
    pub fn from_samples(source: &str, mut rows: Vec<(f64, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(SpectraError::Parse(format!("{source}: no samples")));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if rows.iter().any(|(x, v)| !(0.0..1.0).contains(x) || !v.is_finite()) {
            return Err(SpectraError::Parse(format!(
                "{source}: sample abscissae must lie in [0, 1) and values must be finite"
            )));
        }
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(SpectraError::Parse(format!("{source}: duplicate abscissa")));
        }
        let (xs, values): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        let breaks = xs.clone();
        Ok(PeriodicPotential {
            shape: PeriodicShape::Samples {
                source: source.to_string(),
                xs,
                values,
            },
            breaks,
        })
    }

    /// Parse a descriptor; `samples:path` reads the file from disk.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (kind, args) = split_descriptor(spec);
        match kind {
            "zero" if args.is_none() => Ok(PeriodicPotential::zero()),
            "mathieu" => {
                let p = parse_numbers(spec, args, 1)?;
                Ok(PeriodicPotential::mathieu(p[0]))
            }
            "square" => {
                let p = parse_numbers(spec, args, 2)?;
                PeriodicPotential::square(p[0], p[1])
            }
            "samples" => {
                let path = args.ok_or_else(|| SpectraError::Parse("samples: missing path".into()))?;
                let text = std::fs::read_to_string(Path::new(path))
                    .map_err(|e| SpectraError::Parse(format!("samples:{path}: {e}")))?;
                let rows = parse_sample_rows(path, &text)?;
                PeriodicPotential::from_samples(path, rows)
            }
            _ => Err(SpectraError::Parse(format!("unknown periodic potential `{spec}`"))),
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.shape {
            PeriodicShape::Zero => true,
            PeriodicShape::Mathieu { amplitude } => *amplitude == 0.0,
            PeriodicShape::Square { amplitude, width } => *amplitude == 0.0 || *width == 0.0,
            PeriodicShape::Samples { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    /// Breakpoints within one period, in `[0, 1)`.
    pub fn period_breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    fn eval_reduced(&self, t: f64) -> f64 {
        match &self.shape {
            PeriodicShape::Zero => 0.0,
            PeriodicShape::Mathieu { amplitude } => amplitude * (2.0 * PI * t).cos(),
            PeriodicShape::Square { amplitude, width } => {
                if t < *width {
                    *amplitude
                } else {
                    0.0
                }
            }
            PeriodicShape::Samples { xs, values, .. } => {
                let n = xs.len();
                if n == 1 {
                    return values[0];
                }
                let i = xs.partition_point(|&x| x <= t);
                let (x0, v0, x1, v1) = if i == 0 {
                    (xs[n - 1] - 1.0, values[n - 1], xs[0], values[0])
                } else if i == n {
                    (xs[n - 1], values[n - 1], xs[0] + 1.0, values[0])
                } else {
                    (xs[i - 1], values[i - 1], xs[i], values[i])
                };
                v0 + (v1 - v0) * (t - x0) / (x1 - x0)
            }
        }
    }
}

impl Potential for PeriodicPotential {
    fn eval(&self, x: f64) -> f64 {
        let t = x - x.floor();
        // x - floor(x) can round up to exactly 1.0 for tiny negative x
        let t = if t >= 1.0 { 0.0 } else { t };
        self.eval_reduced(t)
    }

    fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        if self.breaks.is_empty() || !(b > a) {
            return Vec::new();
        }
        let mut out = Vec::new();
        let first = a.floor() as i64;
        let last = b.ceil() as i64;
        for n in first..=last {
            for &t in &self.breaks {
                let p = n as f64 + t;
                if p >= a && p <= b {
                    out.push(p);
                }
            }
        }
        out
    }
}

impl fmt::Display for PeriodicPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            PeriodicShape::Zero => write!(f, "zero"),
            PeriodicShape::Mathieu { amplitude } => write!(f, "mathieu:{amplitude}"),
            PeriodicShape::Square { amplitude, width } => write!(f, "square:{amplitude},{width}"),
            PeriodicShape::Samples { source, .. } => write!(f, "samples:{source}"),
        }
    }
}

impl FromStr for PeriodicPotential {
    type Err = SpectraError;
    fn from_str(s: &str) -> Result<Self> {
        PeriodicPotential::parse(s)
    }
}

/// One additive term of a decaying potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayTerm {
    /// `c / (1 + x)^alpha`
    Power { c: f64, alpha: f64 },
    /// `c sin(2 omega x + phi) / (1 + x)^alpha`
    WignerVonNeumann { c: f64, omega: f64, alpha: f64, phi: f64 },
    /// `c` on `[a, b]`, zero elsewhere
    Bump { c: f64, a: f64, b: f64 },
}

impl DecayTerm {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            DecayTerm::Power { c, alpha } => c * (1.0 + x).powf(-alpha),
            DecayTerm::WignerVonNeumann { c, omega, alpha, phi } => {
                c * (2.0 * omega * x + phi).sin() * (1.0 + x).powf(-alpha)
            }
            DecayTerm::Bump { c, a, b } => {
                if x >= a && x <= b {
                    c
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for DecayTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DecayTerm::Power { c, alpha } => write!(f, "power:{c},{alpha}"),
            DecayTerm::WignerVonNeumann { c, omega, alpha, phi } => {
                write!(f, "wvn:{c},{omega},{alpha},{phi}")
            }
            DecayTerm::Bump { c, a, b } => write!(f, "bump:{c},{a},{b}"),
        }
    }
}

/// Decay envelope `|V(x)| <= amplitude / (1 + x)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub amplitude: f64,
    pub exponent: f64,
}

impl Envelope {
    pub fn bound(&self, x: f64) -> f64 {
        self.amplitude * (1.0 + x).powf(-self.exponent)
    }
}

/// A sum of decaying terms on `[0, inf)` with its envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayingPotential {
    terms: Vec<DecayTerm>,
    envelope: Envelope,
    lp_tag: Option<f64>,
}

impl DecayingPotential {
    pub fn zero() -> Self {
        DecayingPotential::from_terms(Vec::new()).expect("empty sum is valid")
    }

    pub fn from_terms(terms: Vec<DecayTerm>) -> Result<Self> {
        for t in &terms {
            let ok = match *t {
                DecayTerm::Power { c, alpha } => c.is_finite() && alpha.is_finite() && alpha >= 0.0,
                DecayTerm::WignerVonNeumann { c, omega, alpha, phi } => {
                    c.is_finite() && omega.is_finite() && phi.is_finite() && alpha.is_finite() && alpha >= 0.0
                }
                DecayTerm::Bump { c, a, b } => c.is_finite() && a.is_finite() && b.is_finite() && 0.0 <= a && a <= b,
            };
            if !ok {
                return Err(SpectraError::Parse(format!("invalid term `{t}`")));
            }
        }
        let envelope = envelope_of(&terms);
        Ok(DecayingPotential {
            terms,
            envelope,
            lp_tag: None,
        })
    }

    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec.is_empty() {
            return Err(SpectraError::Parse("empty potential descriptor".into()));
        }
        let mut terms = Vec::new();
        for part in spec.split('+') {
            let part = part.trim();
            let (kind, args) = split_descriptor(part);
            match kind {
                "zero" if args.is_none() => {}
                "power" => {
                    let p = parse_numbers(part, args, 2)?;
                    if p[1] < 0.0 {
                        return Err(SpectraError::Parse(format!("`{part}`: alpha must be >= 0")));
                    }
                    terms.push(DecayTerm::Power { c: p[0], alpha: p[1] });
                }
                "wvn" => {
                    let p = parse_numbers(part, args, 4)?;
                    if p[2] < 0.0 {
                        return Err(SpectraError::Parse(format!("`{part}`: alpha must be >= 0")));
                    }
                    terms.push(DecayTerm::WignerVonNeumann {
                        c: p[0],
                        omega: p[1],
                        alpha: p[2],
                        phi: p[3],
                    });
                }
                "bump" => {
                    let p = parse_numbers(part, args, 3)?;
                    if !(p[1] >= 0.0 && p[1] <= p[2]) {
                        return Err(SpectraError::Parse(format!("`{part}`: need 0 <= a <= b")));
                    }
                    terms.push(DecayTerm::Bump { c: p[0], a: p[1], b: p[2] });
                }
                _ => return Err(SpectraError::Parse(format!("unknown decaying potential `{part}`"))),
            }
        }
        DecayingPotential::from_terms(terms)
    }

    /// Attach an `l^p(L^1)` membership tag.
    pub fn with_lp_tag(mut self, p: f64) -> Self {
        self.lp_tag = Some(p);
        self
    }

    /// The attached tag, or the smallest admissible exponent implied by the
    /// envelope: `V` is in `l^p(L^1)` for every `p > 1/alpha` (every `p >= 1`
    /// when the terms have compact support or `alpha > 1`).
    pub fn lp_exponent(&self) -> f64 {
        if let Some(p) = self.lp_tag {
            return p;
        }
        let slowest = self
            .terms
            .iter()
            .filter_map(|t| match *t {
                DecayTerm::Power { alpha, .. } | DecayTerm::WignerVonNeumann { alpha, .. } => Some(alpha),
                DecayTerm::Bump { .. } => None,
            })
            .fold(f64::INFINITY, f64::min);
        if slowest.is_finite() && slowest > 0.0 {
            (1.0 / slowest).max(1.0)
        } else if slowest == 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    }

    pub fn envelope(&self) -> Envelope {
        self.envelope
    }

    pub fn terms(&self) -> &[DecayTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| match *t {
            DecayTerm::Power { c, .. } | DecayTerm::WignerVonNeumann { c, .. } => c == 0.0,
            DecayTerm::Bump { c, a, b } => c == 0.0 || a == b,
        })
    }

    /// Right end of the support if every term is compactly supported.
    pub fn support_end(&self) -> Option<f64> {
        let mut end: f64 = 0.0;
        for t in &self.terms {
            match *t {
                DecayTerm::Bump { b, .. } => end = end.max(b),
                DecayTerm::Power { c, .. } | DecayTerm::WignerVonNeumann { c, .. } => {
                    if c != 0.0 {
                        return None;
                    }
                }
            }
        }
        Some(end)
    }

    pub fn truncate(&self, length: f64) -> Result<TruncatedPotential> {
        TruncatedPotential::new(self.clone(), length)
    }
}

// Envelope rule: power and wvn terms contribute |c| at the slowest of their
// exponents; a bump on [a, b] contributes |c| (1 + b)^alpha. With no decaying
// terms the exponent defaults to 1.
fn envelope_of(terms: &[DecayTerm]) -> Envelope {
    let exponent = terms
        .iter()
        .filter_map(|t| match *t {
            DecayTerm::Power { alpha, .. } | DecayTerm::WignerVonNeumann { alpha, .. } => Some(alpha),
            DecayTerm::Bump { .. } => None,
        })
        .fold(f64::INFINITY, f64::min);
    let exponent = if exponent.is_finite() { exponent } else { 1.0 };
    let amplitude = terms
        .iter()
        .map(|t| match *t {
            DecayTerm::Power { c, .. } | DecayTerm::WignerVonNeumann { c, .. } => c.abs(),
            DecayTerm::Bump { c, b, .. } => c.abs() * (1.0 + b).powf(exponent),
        })
        .sum();
    Envelope { amplitude, exponent }
}

impl Potential for DecayingPotential {
    fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .terms
            .iter()
            .flat_map(|t| match *t {
                DecayTerm::Bump { a: lo, b: hi, .. } => vec![lo, hi],
                _ => Vec::new(),
            })
            .filter(|&p| p >= a && p <= b)
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

impl fmt::Display for DecayingPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "zero");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, "+")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for DecayingPotential {
    type Err = SpectraError;
    fn from_str(s: &str) -> Result<Self> {
        DecayingPotential::parse(s)
    }
}

/// `V_L`: equal to `V` on `[0, L]` (closed at `L`) and zero beyond.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedPotential {
    base: DecayingPotential,
    length: f64,
}

impl TruncatedPotential {
    pub fn new(base: DecayingPotential, length: f64) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(SpectraError::input(format!("truncation point must be positive, got {length}")));
        }
        Ok(TruncatedPotential { base, length })
    }

    pub fn base(&self) -> &DecayingPotential {
        &self.base
    }

    pub fn length(&self) -> f64 {
        self.length
    }
}

impl Potential for TruncatedPotential {
    fn eval(&self, x: f64) -> f64 {
        if x <= self.length {
            self.base.eval(x)
        } else {
            0.0
        }
    }

    fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = self.base.breakpoints_in(a, b.min(self.length));
        if self.length >= a && self.length <= b {
            out.push(self.length);
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Pointwise sum of two potentials, e.g. `V0 + V_L`.
#[derive(Clone, Copy)]
pub struct SumPotential<'a> {
    pub first: &'a dyn Potential,
    pub second: &'a dyn Potential,
}

impl<'a> SumPotential<'a> {
    pub fn new(first: &'a dyn Potential, second: &'a dyn Potential) -> Self {
        SumPotential { first, second }
    }
}

impl Potential for SumPotential<'_> {
    fn eval(&self, x: f64) -> f64 {
        self.first.eval(x) + self.second.eval(x)
    }

    fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = self.first.breakpoints_in(a, b);
        out.extend(self.second.breakpoints_in(a, b));
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Merge the breakpoints of `V0 + V` on `[a, b]`.
pub fn combined_breakpoints(v0: &PeriodicPotential, v: &dyn Potential, a: f64, b: f64) -> Vec<f64> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let mut out = v0.breakpoints_in(lo, hi);
    out.extend(v.breakpoints_in(lo, hi));
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn split_descriptor(s: &str) -> (&str, Option<&str>) {
    match s.split_once(':') {
        Some((k, rest)) => (k.trim(), Some(rest.trim())),
        None => (s.trim(), None),
    }
}

fn parse_numbers(spec: &str, args: Option<&str>, count: usize) -> Result<Vec<f64>> {
    let args = args.ok_or_else(|| SpectraError::Parse(format!("`{spec}`: missing parameters")))?;
    let values: std::result::Result<Vec<f64>, _> = args.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| SpectraError::Parse(format!("`{spec}`: {e}")))?;
    if values.len() != count {
        return Err(SpectraError::Parse(format!(
            "`{spec}`: expected {count} parameter(s), got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SpectraError::Parse(format!("`{spec}`: parameters must be finite")));
    }
    Ok(values)
}

fn parse_sample_rows(source: &str, text: &str) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 2 {
            return Err(SpectraError::Parse(format!(
                "{source}:{}: expected two columns",
                lineno + 1
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| SpectraError::Parse(format!("{source}:{}: {e}", lineno + 1)))
        };
        rows.push((parse(cols[0])?, parse(cols[1])?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{quad_points, Tolerance};
    use proptest::prelude::*;

    #[test]
    fn periodic_descriptors() {
        let z = PeriodicPotential::parse("zero").unwrap();
        assert_eq!(z.eval(0.3), 0.0);
        let m = PeriodicPotential::parse("mathieu:1.0").unwrap();
        assert!(m.eval(0.25).abs() < 1e-15);
        assert_eq!(m.eval(0.0), 1.0);
        let s = PeriodicPotential::parse("square:2,0.5").unwrap();
        let t = Tolerance::uniform(1e-13);
        let mass: f64 = quad_points(|x| s.eval(x), &[0.0, 0.5, 1.0], &t).unwrap();
        assert!((mass - 1.0).abs() < 1e-13);
        assert_eq!(s.breakpoints_in(0.0, 2.0), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn malformed_descriptors_fail_to_parse() {
        for bad in ["", "mathieu", "mathieu:x", "square:1", "square:1,2", "triangle:1", "zero:1"] {
            assert!(matches!(PeriodicPotential::parse(bad), Err(SpectraError::Parse(_))), "{bad}");
        }
        for bad in ["power:1", "power:1,-1", "wvn:1,1,1", "bump:1,3,2", "gauss:1", "power:1,nan"] {
            assert!(matches!(DecayingPotential::parse(bad), Err(SpectraError::Parse(_))), "{bad}");
        }
    }

    #[test]
    fn descriptors_round_trip() {
        for s in ["zero", "mathieu:1.5", "square:2,0.25"] {
            assert_eq!(PeriodicPotential::parse(s).unwrap().to_string(), s);
        }
        for s in ["zero", "power:1,0.9", "wvn:1,1,1,0+bump:5,0,1"] {
            assert_eq!(DecayingPotential::parse(s).unwrap().to_string(), s);
        }
    }

    #[test]
    fn decaying_descriptors() {
        let p = DecayingPotential::parse("power:1,1").unwrap();
        assert_eq!(p.eval(0.0), 1.0);
        assert!((p.eval(9.0) - 0.1).abs() < 1e-15);
        let z = DecayingPotential::parse("zero").unwrap();
        assert_eq!(z.envelope().amplitude, 0.0);
        let w = DecayingPotential::parse("wvn:1,1,1,0").unwrap();
        for i in 0..10_000 {
            let x = i as f64 * 0.01;
            assert!((w.eval(x) - (2.0 * x).sin() / (1.0 + x)).abs() < 1e-15);
            assert!(w.eval(x).abs() * (1.0 + x) <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn sum_envelope_and_lp_exponent() {
        let v = DecayingPotential::parse("power:2,0.9+wvn:-1,3,1.5,0.2").unwrap();
        assert_eq!(v.envelope().amplitude, 3.0);
        assert_eq!(v.envelope().exponent, 0.9);
        assert!((v.lp_exponent() - 1.0 / 0.9).abs() < 1e-15);
        assert_eq!(v.clone().with_lp_tag(1.5).lp_exponent(), 1.5);
        let b = DecayingPotential::parse("bump:5,0,1").unwrap();
        assert_eq!(b.support_end(), Some(1.0));
        assert_eq!(b.lp_exponent(), 1.0);
        assert_eq!(b.eval(1.0), 5.0);
        assert_eq!(b.eval(1.0 + 1e-12), 0.0);
    }

    #[test]
    fn truncation_is_closed_at_length() {
        let v = DecayingPotential::parse("power:1,1").unwrap();
        let vl = v.truncate(10.0).unwrap();
        assert_eq!(vl.eval(10.5), 0.0);
        assert!((vl.eval(10.0) - 1.0 / 11.0).abs() < 1e-16);
        assert!(v.truncate(0.0).is_err());
        assert!(v.truncate(-1.0).is_err());
        assert_eq!(vl.breakpoints_in(0.0, 20.0), vec![10.0]);
        let t = Tolerance::uniform(1e-12);
        let total: f64 = quad_points(|x| vl.eval(x), &[0.0, 10.0, 50.0], &t).unwrap();
        let direct: f64 = quad_points(|x| v.eval(x), &[0.0, 10.0], &t).unwrap();
        assert!((total - direct).abs() < 1e-12);
        assert!((direct - 11f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn samples_file_interpolates_periodically() {
        let dir = std::env::temp_dir().join(format!("spectra-samples-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("v0.txt");
        std::fs::write(&path, "# x value\n0.0 1.0\n0.5 3.0\n").unwrap();
        let v0 = PeriodicPotential::parse(&format!("samples:{}", path.display())).unwrap();
        assert!((v0.eval(0.25) - 2.0).abs() < 1e-15);
        assert!((v0.eval(0.75) - 2.0).abs() < 1e-15);
        assert!((v0.eval(1.5) - 3.0).abs() < 1e-15);
        std::fs::write(&path, "0.0 1.0 2.0\n").unwrap();
        assert!(PeriodicPotential::parse(&format!("samples:{}", path.display())).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    proptest! {
        #[test]
        fn periodicity_is_exact(x in -50.0f64..50.0, a in -5.0f64..5.0, w in 0.0f64..1.0) {
            for v0 in [PeriodicPotential::mathieu(a), PeriodicPotential::square(a, w).unwrap()] {
                let lhs = v0.eval(x);
                let rhs = v0.eval(x + 1.0);
                // reduction mod 1 can differ in the last ulp of the fractional part
                if (x + 1.0) - (x + 1.0).floor() == x - x.floor() {
                    prop_assert_eq!(lhs, rhs);
                } else {
                    prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + a.abs()));
                }
            }
        }

        #[test]
        fn envelope_bounds_value(x in 0.0f64..1e4, c in -3.0f64..3.0, alpha in 0.1f64..2.0, om in 0.0f64..5.0) {
            let v = DecayingPotential::from_terms(vec![
                DecayTerm::Power { c, alpha },
                DecayTerm::WignerVonNeumann { c: 0.5 * c, omega: om, alpha: alpha + 0.3, phi: 0.1 },
                DecayTerm::Bump { c: 2.0, a: 1.0, b: 3.0 },
            ]).unwrap();
            let env = v.envelope();
            prop_assert!(v.eval(x).abs() * (1.0 + x).powf(env.exponent) <= env.amplitude * (1.0 + 1e-12));
        }
    }
}
