use crate::args::*;
use crate::error::CliError;
use crate::output::{Cell, Table};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use spectra_core::floquet::{band_edges, discriminant, floquet_data, monodromy, solve_real};
use spectra_core::multilinear::{
    b_norm, build_martingale, conjugate_pattern, convolution_constant, convolution_ratio, multi_m, multi_m_star,
    tail_b, ChainOptions, ComplexFn, OscKernel,
};
use spectra_core::potentials::SumPotential;
use spectra_core::pruefer::{
    fourier_mode_integral, orthogonality_integrals, osc_integral, pruefer_flow, PrueferInit, Weight,
};
use spectra_core::spectral::{
    density_prufer, density_weyl, lee_bound_check, normalization_constant, pruefer_vectors, WeightedL2,
};
use spectra_core::stats::{linear_fit, power_law_fit};
use spectra_core::wkb::{direct_reduced, kernel_identity_residual, series_solution, wkb_compare};
use spectra_core::{Band, DecayingPotential, PeriodicPotential, Potential, SpectraError, Tolerance, WkbPhase};
use std::f64::consts::PI;

type Res<T> = Result<T, CliError>;

fn tolerance(c: &Common) -> Res<Tolerance> {
    Ok(Tolerance::new(c.tol, c.tol, 10_000_000)?)
}

fn v0_of(s: &str) -> Res<PeriodicPotential> {
    Ok(PeriodicPotential::parse(s)?)
}

fn v_of(s: &str) -> Res<DecayingPotential> {
    Ok(DecayingPotential::parse(s)?)
}

fn v0_floor(v0: &PeriodicPotential) -> f64 {
    (0..1000).map(|i| v0.eval(i as f64 / 1000.0)).fold(f64::INFINITY, f64::min)
}

/// Band `i` (0-based, counted from the bottom of the spectrum). The scan
/// starts on `[min V0, min V0 + 41]` and widens only while fewer than `i + 1`
/// bands are found, so the topmost band may come back clipped.
pub fn nth_band(v0: &PeriodicPotential, i: usize) -> Res<Band> {
    let lo = v0_floor(v0);
    let mut width = 41.0;
    for _ in 0..4 {
        let bs = band_edges(v0, (lo, lo + width), &Tolerance::default())?;
        if let Some(b) = bs.bands.get(i) {
            return Ok(*b);
        }
        width *= 2.0;
    }
    Err(CliError::input(format!("band {i} not found below E = {}", lo + width / 2.0)))
}

fn energy_or_band(v0: &PeriodicPotential, energy: Option<f64>, band: usize) -> Res<f64> {
    match energy {
        Some(e) => Ok(e),
        None => Ok(nth_band(v0, band)?.midpoint()),
    }
}

pub fn bands(a: &BandsArgs) -> Res<Table> {
    let v0 = v0_of(&a.v0)?;
    let bs = band_edges(&v0, (a.emin, a.emax), &tolerance(&a.common)?)?;
    let mut t = Table::new(&["index", "lower", "upper", "width", "lower_clipped", "upper_clipped"]);
    for (i, b) in bs.bands.iter().enumerate() {
        t.push(vec![
            i.into(),
            b.lower.into(),
            b.upper.into(),
            b.width().into(),
            b.lower_clipped.into(),
            b.upper_clipped.into(),
        ]);
    }
    t.note("bands", bs.bands.len());
    t.note("gaps", bs.gaps().len());
    Ok(t)
}

pub fn density(a: &DensityArgs) -> Res<Table> {
    let v0 = v0_of(&a.v0)?;
    let v = v_of(&a.v)?;
    let tol = tolerance(&a.common)?;
    if a.esteps == 0 {
        return Err(CliError::input("--esteps must be positive"));
    }
    let energies: Vec<f64> = match a.band {
        Some(i) => {
            let b = nth_band(&v0, i)?;
            (0..a.esteps)
                .map(|k| b.at(0.25 + 0.5 * k as f64 / (a.esteps.max(2) - 1) as f64))
                .collect()
        }
        None => (0..a.esteps)
            .map(|k| {
                if a.esteps == 1 {
                    a.emin
                } else {
                    a.emin + (a.emax - a.emin) * k as f64 / (a.esteps - 1) as f64
                }
            })
            .collect(),
    };
    let free = v0.is_zero() && v.is_zero();
    let want_p = a.method != DensityMethodArg::Weyl;
    let want_w = a.method != DensityMethodArg::Prufer;
    let rows: Vec<Option<(f64, f64, f64, bool)>> = energies
        .par_iter()
        .map(|&e| {
            let p = if want_p {
                match density_prufer(&v0, &v, a.length, e, &tol) {
                    Ok(s) => s.density,
                    Err(SpectraError::Domain { .. }) => return Ok(None),
                    Err(err) => return Err(CliError::from(err)),
                }
            } else {
                f64::NAN
            };
            let (w, warn) = if want_w {
                match density_weyl(&v0, &v, a.length, e, &a.eps, &tol) {
                    Ok(s) => (s.density, s.warning),
                    Err(SpectraError::Domain { .. }) => return Ok(None),
                    Err(err) => return Err(CliError::from(err)),
                }
            } else {
                (f64::NAN, false)
            };
            Ok(Some((e, p, w, warn)))
        })
        .collect::<Res<_>>()?;
    let mut cols = vec!["energy", "density_prufer", "density_weyl", "rel_gap", "weyl_warning"];
    if free {
        cols.push("closed_form");
    }
    let mut t = Table::new(&cols);
    let mut worst_gap: f64 = 0.0;
    let mut worst_free: f64 = 0.0;
    let mut skipped = 0usize;
    for r in rows {
        let Some((e, p, w, warn)) = r else {
            skipped += 1;
            continue;
        };
        let gap = ((p - w) / p).abs();
        if gap.is_finite() {
            worst_gap = worst_gap.max(gap);
        }
        let mut row: Vec<Cell> = vec![e.into(), p.into(), w.into(), gap.into(), warn.into()];
        if free {
            let c = e.max(0.0).sqrt() / PI;
            for d in [p, w] {
                if d.is_finite() {
                    worst_free = worst_free.max(((d - c) / c).abs());
                }
            }
            row.push(c.into());
        }
        t.push(row);
    }
    t.note("max_rel_gap", worst_gap);
    if free {
        t.note("max_rel_err_closed_form", worst_free);
    }
    t.note("skipped_outside_bands", skipped);
    Ok(t)
}

pub fn prufer(a: &PruferArgs) -> Res<Table> {
    let tol = tolerance(&a.common)?;
    if a.scenarios > 0 {
        return prufer_scenarios(a, &tol);
    }
    let v0 = v0_of(&a.v0)?;
    let v = v_of(&a.v)?;
    let e = energy_or_band(&v0, a.energy, a.band)?;
    let data = floquet_data(&v0, e, &tol)?;
    let init = PrueferInit::from_solution(&data, a.u0, a.du0)?;
    let tr = pruefer_flow(&v0, &v, e, a.length, init, &tol)?;
    let sum = SumPotential::new(&v0, &v);
    let direct = solve_real(&sum, e, (0.0, a.length), (a.u0, a.du0), &tol)?;
    let mut t = Table::new(&["x", "ln_r", "theta", "u_pruefer", "u_direct"]);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (i, &x) in tr.grid.points().iter().enumerate() {
        let (u, _) = tr.reconstruct_solution(x)?;
        let d = direct.eval(x)?[0];
        worst = worst.max((u - d).abs());
        scale = scale.max(d.abs());
        if i % a.stride.max(1) == 0 {
            t.push(vec![x.into(), tr.ln_r[i].into(), tr.theta[i].into(), u.into(), d.into()]);
        }
    }
    t.note("energy", e);
    t.note("omega", data.omega());
    t.note("rel_sup_gap", worst / scale);
    Ok(t)
}

fn prufer_scenarios(a: &PruferArgs, tol: &Tolerance) -> Res<Table> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
    let mut t = Table::new(&["scenario", "v0", "v", "energy", "rel_sup_gap"]);
    let mut worst: f64 = 0.0;
    for s in 0..a.scenarios {
        let v0 = if rng.gen_bool(0.5) {
            PeriodicPotential::mathieu(rng.gen_range(0.0..3.0))
        } else {
            PeriodicPotential::square(rng.gen_range(0.5..3.0), rng.gen_range(0.2..0.8))?
        };
        let v = v_of(&format!("power:{:.3},{:.3}", rng.gen_range(0.2..2.0), rng.gen_range(0.6..1.5)))?;
        let bs = band_edges(&v0, (v0_floor(&v0) - 1.0, 30.0), &Tolerance::default())?;
        let interior: Vec<&Band> = bs.bands.iter().filter(|b| !b.lower_clipped && !b.upper_clipped).collect();
        if interior.is_empty() {
            return Err(CliError::input("no complete band below E = 30"));
        }
        let band = interior[rng.gen_range(0..interior.len())];
        let e = band.at(rng.gen_range(0.2..0.8));
        let (u0, du0) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let data = floquet_data(&v0, e, tol)?;
        let init = PrueferInit::from_solution(&data, u0, du0)?;
        let tr = pruefer_flow(&v0, &v, e, a.length, init, tol)?;
        let sum = SumPotential::new(&v0, &v);
        let direct = solve_real(&sum, e, (0.0, a.length), (u0, du0), tol)?;
        let (mut num, mut den): (f64, f64) = (0.0, 0.0);
        for &x in tr.grid.points() {
            let (u, _) = tr.reconstruct_solution(x)?;
            let d = direct.eval(x)?[0];
            num = num.max((u - d).abs());
            den = den.max(d.abs());
        }
        worst = worst.max(num / den);
        t.push(vec![s.into(), v0.to_string().into(), v.to_string().into(), e.into(), (num / den).into()]);
    }
    t.note("max_rel_sup_gap", worst);
    Ok(t)
}

pub fn wkb_error(a: &WkbArgs) -> Res<Table> {
    let tol = tolerance(&a.common)?;
    let v0 = v0_of(&a.v0)?;
    let v = v_of(&a.v)?;
    let e = energy_or_band(&v0, a.energy, a.band)?;
    match a.mode {
        WkbMode::Compare => {
            let c = wkb_compare(&v0, &v, e, a.xmax, a.points, &tol)?;
            let series = match v.support_end() {
                Some(end) if end < a.xmax => {
                    let k = OscKernel::new(&v0, &v, e, end, &tol)?;
                    let xs: Vec<f64> = c.xs.iter().copied().filter(|&x| x <= end).collect();
                    let fine = Tolerance::uniform(tol.abs_tol.min(1e-12));
                    let s = series_solution(&k, &xs, a.nmax, &[], &fine)?;
                    let d = direct_reduced(&k, end, &xs, &fine)?;
                    let errs: Vec<f64> = d
                        .iter()
                        .enumerate()
                        .map(|(i, di)| {
                            let y = s.value(i);
                            (y[0] - di[0]).norm().max((y[1] - di[1]).norm())
                        })
                        .collect();
                    Some((end, errs))
                }
                _ => None,
            };
            let mut t = Table::new(&["x", "r", "modulus_ratio", "series_vs_direct"]);
            for (i, &x) in c.xs.iter().enumerate() {
                let se = series
                    .as_ref()
                    .and_then(|(_, errs)| errs.get(i).copied())
                    .unwrap_or(f64::NAN);
                t.push(vec![x.into(), c.r[i].into(), c.modulus_ratio[i].into(), se.into()]);
            }
            t.note("energy", e);
            t.note("max_r_upper_half", c.tail_max);
            t.note("decay_exponent", c.decay_exponent.unwrap_or(f64::NAN));
            if let Some((end, errs)) = &series {
                let beyond = c
                    .xs
                    .iter()
                    .zip(&c.r)
                    .filter(|(x, _)| **x >= *end)
                    .map(|(_, r)| *r)
                    .fold(0.0, f64::max);
                t.note("support_end", *end);
                t.note("max_series_vs_direct", errs.iter().copied().fold(0.0, f64::max));
                t.note("max_r_beyond_support", beyond);
            }
            Ok(t)
        }
        WkbMode::Identity => {
            let k = OscKernel::new(&v0, &v, e, a.xmax, &tol)?;
            let ph = WkbPhase::new(k.data().clone(), &v, a.xmax, &tol)?;
            let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
            let mut t = Table::new(&["x", "residual"]);
            let mut worst: f64 = 0.0;
            for _ in 0..a.points.min(100_000) {
                let x = rng.gen_range(0.0..a.xmax);
                let r = kernel_identity_residual(&k, &ph, &[x]);
                worst = worst.max(r);
                t.push(vec![x.into(), r.into()]);
            }
            let c = convolution_constant();
            let mut conv: f64 = 0.0;
            for _ in 0..100 {
                let n = rng.gen_range(1..200);
                let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                conv = conv.max(convolution_ratio(&f));
            }
            t.note("energy", e);
            t.note("max_identity_residual", worst);
            t.note("max_convolution_ratio", conv);
            t.note("convolution_constant", c);
            Ok(t)
        }
    }
}

enum GFun {
    Plain(DecayingPotential, f64),
    Kernel(Box<OscKernel>),
}

impl GFun {
    fn eval(&self, x: f64) -> Complex64 {
        match self {
            GFun::Plain(v, w) => Complex64::from_polar(1.0, w * x) * v.eval(x),
            GFun::Kernel(k) => k.eval(x),
        }
    }

    fn breakpoints(&self, x_max: f64) -> Vec<f64> {
        match self {
            GFun::Plain(v, _) => v.breakpoints_in(0.0, x_max),
            GFun::Kernel(k) => k.breakpoints(),
        }
    }
}

fn parse_g(spec: &str, v0: &PeriodicPotential, x_max: f64, tol: &Tolerance) -> Res<GFun> {
    let (desc, modifier) = match spec.split_once('@') {
        Some((d, m)) => (d, Some(m)),
        None => (spec, None),
    };
    let v = v_of(desc)?;
    let num = |s: &str| -> Res<f64> {
        s.parse::<f64>()
            .map_err(|_| CliError::input(format!("`{spec}`: `{s}` is not a number")))
    };
    match modifier.map(|m| m.split_once('=').unwrap_or((m, ""))) {
        None => Ok(GFun::Plain(v, 0.0)),
        Some(("w", s)) => Ok(GFun::Plain(v, num(s)?)),
        Some(("E", s)) => Ok(GFun::Kernel(Box::new(OscKernel::new(v0, &v, num(s)?, x_max, tol)?))),
        Some(("band", s)) => {
            let i = s
                .parse::<usize>()
                .map_err(|_| CliError::input(format!("`{spec}`: band index `{s}`")))?;
            let e = nth_band(v0, i)?.midpoint();
            Ok(GFun::Kernel(Box::new(OscKernel::new(v0, &v, e, x_max, tol)?)))
        }
        Some((other, _)) => Err(CliError::input(format!("`{spec}`: unknown modifier `{other}`"))),
    }
}

pub fn mlinear(a: &MlinearArgs) -> Res<Table> {
    let tol = tolerance(&a.common)?;
    let v0 = v0_of(&a.v0)?;
    if a.g.is_empty() {
        return Err(CliError::input("at least one --g is required"));
    }
    if a.nmax == 0 || a.nmax > 12 {
        return Err(CliError::input("--nmax must be in 1..=12"));
    }
    let gs: Vec<GFun> = a.g.iter().map(|s| parse_g(s, &v0, a.xmax, &tol)).collect::<Res<_>>()?;
    let opts_for = |g: &GFun| ChainOptions::new(tol).with_breakpoints(g.breakpoints(a.xmax));
    match a.mode {
        MlinearMode::Bound => {
            if a.grid < 2 {
                return Err(CliError::input("--grid needs at least two points"));
            }
            let one = |_: f64| Complex64::new(1.0, 0.0);
            let ones: Vec<ComplexFn> = vec![&one; 8];
            let mut vol_err: f64 = 0.0;
            for n in 1..=8 {
                let v = multi_m(&ones[..n], 0.0, 2.5, &ChainOptions::new(Tolerance::uniform(1e-12)))?;
                let fact: f64 = (1..=n).map(|k| k as f64).product();
                vol_err = vol_err.max((v - 2.5f64.powi(n as i32) / fact).norm());
            }
            let mut t = Table::new(&["g", "n", "m_star", "b_norm", "ratio", "x", "x_prime"]);
            let mut spreads = Vec::new();
            let mut c_fit: f64 = 0.0;
            let mut all_within = true;
            let grid: Vec<f64> = (0..a.grid).map(|i| a.xmax * i as f64 / (a.grid - 1) as f64).collect();
            for (gi, g) in gs.iter().enumerate() {
                let f = |x: f64| g.eval(x);
                let fc = |x: f64| g.eval(x).conj();
                let absf = |x: f64| g.eval(x).norm();
                let br = g.breakpoints(a.xmax);
                let m = build_martingale(&absf, a.p, a.depth, a.xmax, &br, &tol)?;
                let bn = b_norm(&f, &m, a.s, &br, &tol)?.value;
                let mut ratios = Vec::new();
                for n in 1..=a.nmax {
                    let list: Vec<ComplexFn> = conjugate_pattern(n)
                        .into_iter()
                        .map(|c| if c { &fc as ComplexFn } else { &f as ComplexFn })
                        .collect();
                    let ms = multi_m_star(&list, &grid, &opts_for(g))?;
                    let fact: f64 = (1..=n).map(|k| k as f64).product();
                    let ratio = (ms.value * fact.sqrt() / bn.powi(n as i32)).powf(1.0 / n as f64);
                    ratios.push(ratio);
                    t.push(vec![
                        a.g[gi].clone().into(),
                        n.into(),
                        ms.value.into(),
                        bn.into(),
                        ratio.into(),
                        ms.x.into(),
                        ms.xprime.into(),
                    ]);
                }
                let hi = ratios.iter().copied().fold(f64::MIN, f64::max);
                let lo = ratios.iter().copied().fold(f64::MAX, f64::min);
                spreads.push(hi / lo);
                if gi == 0 {
                    c_fit = hi;
                } else {
                    all_within &= hi <= 3.0 * c_fit;
                }
            }
            t.note("simplex_volume_err", vol_err);
            t.note("max_ratio_spread", spreads.iter().copied().fold(0.0, f64::max));
            t.note("fitted_constant", c_fit);
            t.note("others_within_3c", all_within);
            Ok(t)
        }
        MlinearMode::Tail => {
            let g = &gs[0];
            let f = |x: f64| g.eval(x);
            let opts = opts_for(g);
            let mut t = Table::new(&["x", "n", "re", "im", "closed_form_re", "closed_form_im", "spread"]);
            let mut worst: f64 = 0.0;
            let mut d_worst: f64 = 0.0;
            let h = 1e-4;
            let xs: Vec<f64> = (0..5).map(|i| 0.25 + 0.125 * a.cutoff.min(a.xmax) * i as f64 / 4.0).collect();
            for &x in &xs {
                let b1 = tail_b(&[&f as ComplexFn], x, a.cutoff, 8, 1e-10, &opts)?;
                for n in 1..=a.nmax {
                    let list: Vec<ComplexFn> = vec![&f as ComplexFn; n];
                    let r = tail_b(&list, x, a.cutoff, 8, 1e-10, &opts)?;
                    let fact: f64 = (1..=n).map(|k| k as f64).product();
                    let closed = b1.value.powi(n as i32) / fact;
                    worst = worst.max((r.value - closed).norm());
                    t.push(vec![
                        x.into(),
                        n.into(),
                        r.value.re.into(),
                        r.value.im.into(),
                        closed.re.into(),
                        closed.im.into(),
                        r.spread.into(),
                    ]);
                }
                let pair: Vec<ComplexFn> = vec![&f as ComplexFn; 2];
                let bp = tail_b(&pair, x + h, a.cutoff, 8, 1e-10, &opts)?.value;
                let bm = tail_b(&pair, x - h, a.cutoff, 8, 1e-10, &opts)?.value;
                d_worst = d_worst.max(((bp - bm) / (2.0 * h) + f(x) * b1.value).norm());
            }
            t.note("max_closed_form_err", worst);
            t.note("max_derivative_identity_err", d_worst);
            Ok(t)
        }
    }
}

pub fn ortho(a: &OrthoArgs) -> Res<Table> {
    let tol = tolerance(&a.common)?;
    match a.mode {
        OrthoMode::Osc => {
            let g = |_: f64| PI / 2.0;
            let mut t = Table::new(&["kind", "param", "value"]);
            let mut vals = Vec::new();
            for &gm in &a.gammas {
                let v = osc_integral(gm, &g, a.lscale / gm, &tol)?.abs();
                vals.push(v);
                t.push(vec!["gamma".into(), gm.into(), v.into()]);
            }
            if vals.len() < 3 {
                return Err(CliError::input("need at least three --gammas"));
            }
            let lx: Vec<f64> = a.gammas.iter().map(|g| (1.0 / g).ln()).collect();
            let fit = linear_fit(&lx, &vals)?;
            let (g0, g1) = (a.gammas[0], a.gammas[1]);
            let c = (vals[1] - vals[0]) / (1.0 / g1 - 1.0 / g0);
            let cp = vals[0] - c / g0;
            let env = a.gammas.iter().zip(&vals).skip(2).all(|(g, v)| *v <= c / g + cp + 1e-9);
            if a.kmax < 3 {
                return Err(CliError::input("--kmax must be at least 3"));
            }
            let ks: Vec<f64> = (2..=a.kmax).map(|k| k as f64).collect();
            let mut modes = Vec::new();
            for &k in &ks {
                let m = fourier_mode_integral(k as i64, 1.0, &g, a.lscale, &tol)?.norm();
                modes.push(m);
                t.push(vec!["mode".into(), k.into(), m.into()]);
            }
            let (_, expo, _) = power_law_fit(&ks, &modes)?;
            t.note("log_fit_a", fit.intercept);
            t.note("log_fit_b", fit.slope);
            t.note("log_fit_r2", fit.r_squared);
            t.note("envelope_c", c);
            t.note("envelope_c_prime", cp);
            t.note("envelope_holds", env);
            t.note("mode_exponent", expo);
            Ok(t)
        }
        OrthoMode::Orth => {
            let v0 = v0_of(&a.v0)?;
            let v = v_of(&a.v)?;
            let w: Weight = a.weight.parse()?;
            if a.deltas.len() < 3 || a.lengths.len() < 2 {
                return Err(CliError::input("need at least three --deltas and two --lengths"));
            }
            let mut t = Table::new(&["kind", "param", "i22", "i4"]);
            let mut i22 = Vec::new();
            for &d in &a.deltas {
                let r = orthogonality_integrals(&v0, &v, a.e1, a.e1 + d, a.length, w, &tol)?;
                i22.push(r.i22.abs());
                t.push(vec!["delta".into(), d.into(), r.i22.into(), r.i4.into()]);
            }
            let mut i4 = Vec::new();
            for &l in &a.lengths {
                let r = orthogonality_integrals(&v0, &v, a.e1, a.e1 + a.deltas[0], l, w, &tol)?;
                i4.push(r.i4.abs());
                t.push(vec!["length".into(), l.into(), r.i22.into(), r.i4.into()]);
            }
            let lx: Vec<f64> = a.deltas.iter().map(|d| (1.0 / d).ln()).collect();
            let mid = lx.len() / 2;
            let first = linear_fit(&lx[..=mid], &i22[..=mid])?.slope;
            let last = linear_fit(&lx[mid..], &i22[mid..])?.slope;
            let drift = (i4[i4.len() - 1] - i4[0]).abs();
            t.note("slope_first_half", first);
            t.note("slope_last_half", last);
            t.note("no_superlinear_growth", last <= 1.5 * first + 0.05);
            t.note("i4_drift", drift);
            Ok(t)
        }
        OrthoMode::Lee => {
            let mut t = Table::new(&["kind", "index", "param", "lhs", "rhs", "holds"]);
            let space = WeightedL2::new(1.0, 64)?;
            let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
            let dim = space.nodes().len();
            let mut tested = 0;
            let mut all_hold = true;
            let mut attempts = 0;
            while tested < a.families {
                attempts += 1;
                if attempts > 100 * a.families.max(1) {
                    return Err(CliError::input("could not draw families with α < 1"));
                }
                let n = rng.gen_range(2..6);
                let vecs: Vec<Vec<f64>> = (0..n)
                    .map(|i| {
                        let raw: Vec<f64> = (0..dim)
                            .map(|j| (if j * n / dim == i { 1.0 } else { 0.0 }) + 0.05 * rng.gen_range(-1.0..1.0))
                            .collect();
                        let nr = space.norm(&raw);
                        raw.into_iter().map(|r| r / nr).collect()
                    })
                    .collect();
                let g: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                match lee_bound_check(&space, &vecs, &g) {
                    Ok(r) => {
                        all_hold &= r.holds;
                        t.push(vec!["family".into(), tested.into(), r.alpha.into(), r.lhs.into(), r.rhs.into(), r.holds.into()]);
                        tested += 1;
                    }
                    Err(SpectraError::Hypothesis(_)) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            let v0 = v0_of(&a.v0)?;
            let v = v_of(&a.v)?;
            let band = nth_band(&v0, a.band)?;
            let energies: Vec<f64> = (0..5).map(|i| band.at(0.1 + 0.2 * i as f64)).collect();
            let big = WeightedL2::new(1000.0, 40_000)?;
            let (vecs, _) = pruefer_vectors(&v0, &v, &energies, &big, &tol)?;
            let g = big.sample(|x| v.eval(x));
            let pr = lee_bound_check(&big, &vecs, &g)?;
            t.push(vec!["pruefer".into(), 0usize.into(), pr.alpha.into(), pr.lhs.into(), pr.rhs.into(), pr.holds.into()]);
            let mut spread: f64 = 0.0;
            for (i, &e) in energies.iter().enumerate() {
                let data = floquet_data(&v0, e, &tol)?;
                let gam = data.capital_gamma(&tol)?;
                let mut offs = Vec::new();
                for &l in &a.lengths {
                    let tr = pruefer_flow(&v0, &v, e, l, PrueferInit::dirichlet(&data), &tol)?;
                    let am = normalization_constant(&tr, &tol)?;
                    offs.push(am - 0.5 * gam * l.ln());
                    t.push(vec![
                        "normalization".into(),
                        i.into(),
                        l.into(),
                        am.into(),
                        (0.5 * gam * l.ln()).into(),
                        true.into(),
                    ]);
                }
                let hi = offs.iter().copied().fold(f64::MIN, f64::max);
                let lo = offs.iter().copied().fold(f64::MAX, f64::min);
                spread = spread.max(hi - lo);
            }
            t.note("families_tested", tested);
            t.note("families_hold", all_hold);
            t.note("pruefer_alpha", pr.alpha);
            t.note("pruefer_holds", pr.holds);
            t.note("normalization_offset_spread", spread);
            Ok(t)
        }
    }
}

pub fn martingale(a: &MartingaleArgs) -> Res<Table> {
    let tol = tolerance(&a.common)?;
    let v = v_of(&a.f)?;
    let f = |x: f64| v.eval(x);
    let br = v.breakpoints_in(0.0, a.xmax);
    let m = build_martingale(&f, a.p, a.depth, a.xmax, &br, &tol)?;
    let mut t = Table::new(&["level", "cell", "a", "b", "mass_ratio"]);
    let mut worst: f64 = 0.0;
    for level in 1..=m.depth {
        for (j, (lo, hi)) in m.cells(level).into_iter().enumerate() {
            let mut nu = 0.0;
            let mut x = lo;
            while x < hi {
                let y = (x.floor() + 1.0).min(hi);
                let mass: f64 = spectra_core::numerics::quad(|s| f(s).abs(), (x, y), &tol)?;
                nu += mass.powf(a.p);
                x = y;
            }
            let ratio = nu * 2f64.powi(level as i32) / m.total_mass;
            worst = worst.max(ratio);
            t.push(vec![level.into(), j.into(), lo.into(), hi.into(), ratio.into()]);
        }
    }
    t.note("total_mass", m.total_mass);
    t.note("tail_mass", m.tail_mass.unwrap_or(f64::NAN));
    t.note("max_mass_ratio", worst);
    t.note("adapted", worst <= 1.0 + 1e-9);
    Ok(t)
}

pub fn mcheck(a: &McheckArgs) -> Res<Table> {
    let tol = tolerance(&a.common)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
    let mut t = Table::new(&["kind", "v0", "energy", "error"]);
    let mut det_err: f64 = 0.0;
    for _ in 0..a.samples {
        let v0 = if rng.gen_bool(0.5) {
            PeriodicPotential::mathieu(rng.gen_range(-5.0..5.0))
        } else {
            PeriodicPotential::square(rng.gen_range(-5.0..5.0), rng.gen_range(0.1..0.9))?
        };
        let e = rng.gen_range(-5.0..60.0);
        let err = (monodromy(&v0, e, &tol)?.det() - 1.0).abs();
        det_err = det_err.max(err);
        t.push(vec!["det".into(), v0.to_string().into(), e.into(), err.into()]);
    }
    let z = PeriodicPotential::zero();
    let mut disc_err: f64 = 0.0;
    let n = a.esteps.max(2);
    for i in 0..n {
        let e = 0.1 + (50.0 - 0.1) * i as f64 / (n - 1) as f64;
        let err = (discriminant(&z, e, &tol)? - 2.0 * e.sqrt().cos()).abs();
        disc_err = disc_err.max(err);
        t.push(vec!["free-discriminant".into(), "zero".into(), e.into(), err.into()]);
    }
    t.note("max_det_err", det_err);
    t.note("max_free_discriminant_err", disc_err);
    Ok(t)
}
