//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero when any criterion fails.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectra_core::floquet::{band_edges, discriminant, floquet_data, monodromy, solve_real};
use spectra_core::multilinear::{
    b_norm, build_martingale, conjugate_pattern, convolution_constant, convolution_ratio, multi_m, multi_m_star,
    tail_b, tail_b_truncated, ChainOptions, ComplexFn,
};
use spectra_core::pruefer::{fourier_mode_integral, orthogonality_integrals, osc_integral, pruefer_flow, PrueferInit, Weight};
use spectra_core::spectral::{
    density_prufer, density_weyl, lee_bound_check, normalization_constant, pruefer_vectors, WeightedL2,
};
use spectra_core::stats::{linear_fit, power_law_fit};
use spectra_core::wkb::{direct_reduced, kernel, kernel_identity_residual, series_solution, wkb_compare};
use spectra_core::{DecayingPotential, PeriodicPotential, Potential, Tolerance, WkbPhase};
use std::f64::consts::PI;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(start: Instant, limit: Duration, out: Outcome) -> Outcome {
    let el = start.elapsed();
    match out {
        Ok(d) if el <= limit => Ok(format!("{d}; {:.1}s", el.as_secs_f64())),
        Ok(d) => Err(format!("{d}; runtime {:.1}s over {:.0}s", el.as_secs_f64(), limit.as_secs_f64())),
        Err(d) => Err(format!("{d}; {:.1}s", el.as_secs_f64())),
    }
}

fn tol() -> Tolerance {
    Tolerance::uniform(1e-10)
}

fn mathieu_band(i: usize) -> (PeriodicPotential, spectra_core::Band) {
    let v0 = PeriodicPotential::mathieu(1.0);
    let bs = band_edges(&v0, (-1.0, 40.0), &Tolerance::default()).expect("band scan");
    (v0, bs.bands[i])
}

fn c1_free_density() -> Outcome {
    let start = Instant::now();
    let z = PeriodicPotential::zero();
    let v = DecayingPotential::zero();
    let mut worst: f64 = 0.0;
    for e in [1.0f64, 4.0, 9.0] {
        let want = e.sqrt() / PI;
        let p = density_prufer(&z, &v, 1.0, e, &tol()).map_err(|x| x.to_string())?;
        let w = density_weyl(&z, &v, 1.0, e, &[1e-3, 1e-4, 1e-5], &tol()).map_err(|x| x.to_string())?;
        worst = worst.max(((p.density - want) / want).abs()).max(((w.density - want) / want).abs());
    }
    within_time(
        start,
        Duration::from_secs(10),
        check(worst <= 1e-4, format!("max relative error {worst:.2e} (tol 1e-4)")),
    )
}

fn c2_cross_method() -> Outcome {
    let start = Instant::now();
    let (v0, band) = mathieu_band(0);
    let v = DecayingPotential::parse("bump:5,0,1").map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let e = band.at(0.25 + 0.5 * i as f64 / 49.0);
        let p = density_prufer(&v0, &v, 2.0, e, &tol()).map_err(|x| x.to_string())?;
        let w = density_weyl(&v0, &v, 2.0, e, &[1e-3, 1e-4, 1e-5], &tol()).map_err(|x| x.to_string())?;
        worst = worst.max(((p.density - w.density) / p.density).abs());
    }
    within_time(
        start,
        Duration::from_secs(300),
        check(worst <= 0.02, format!("max relative gap {worst:.2e} over 50 energies (tol 2e-2)")),
    )
}

fn c3_pruefer_direct() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let v0 = if rng.gen_bool(0.5) {
            PeriodicPotential::mathieu(rng.gen_range(0.0..3.0))
        } else {
            PeriodicPotential::square(rng.gen_range(0.5..3.0), rng.gen_range(0.2..0.8)).map_err(|e| e.to_string())?
        };
        let spec = format!("power:{:.3},{:.3}", rng.gen_range(0.2..2.0), rng.gen_range(0.6..1.5));
        let v = DecayingPotential::parse(&spec).map_err(|e| e.to_string())?;
        let bs = band_edges(&v0, (-2.0, 30.0), &Tolerance::default()).map_err(|e| e.to_string())?;
        let interior: Vec<_> = bs.bands.iter().filter(|b| !b.lower_clipped && !b.upper_clipped).collect();
        let band = interior[rng.gen_range(0..interior.len())];
        let e = band.at(rng.gen_range(0.2..0.8));
        let (u0, du0) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let data = floquet_data(&v0, e, &tol()).map_err(|x| x.to_string())?;
        let init = PrueferInit::from_solution(&data, u0, du0).map_err(|x| x.to_string())?;
        let tr = pruefer_flow(&v0, &v, e, 50.0, init, &Tolerance::uniform(1e-11)).map_err(|x| x.to_string())?;
        let sum = spectra_core::potentials::SumPotential::new(&v0, &v);
        let direct = solve_real(&sum, e, (0.0, 50.0), (u0, du0), &Tolerance::uniform(1e-11)).map_err(|x| x.to_string())?;
        let (mut num, mut den): (f64, f64) = (0.0, 0.0);
        for i in 0..=5000 {
            let x = 0.01 * i as f64;
            let (u, _) = tr.reconstruct_solution(x).map_err(|x| x.to_string())?;
            let d = direct.eval(x).map_err(|x| x.to_string())?[0];
            num = num.max((u - d).abs());
            den = den.max(d.abs());
        }
        worst = worst.max(num / den);
    }
    check(worst <= 1e-5, format!("max relative sup-norm gap {worst:.2e} over 20 scenarios (tol 1e-5)"))
}

fn c4_monodromy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut det_err: f64 = 0.0;
    for _ in 0..100 {
        let v0 = if rng.gen_bool(0.5) {
            PeriodicPotential::mathieu(rng.gen_range(-5.0..5.0))
        } else {
            PeriodicPotential::square(rng.gen_range(-5.0..5.0), rng.gen_range(0.1..0.9)).map_err(|e| e.to_string())?
        };
        let e = rng.gen_range(-5.0..60.0);
        let m = monodromy(&v0, e, &tol()).map_err(|x| x.to_string())?;
        det_err = det_err.max((m.det() - 1.0).abs());
    }
    let z = PeriodicPotential::zero();
    let mut disc_err: f64 = 0.0;
    for i in 0..=499 {
        let e = 0.1 + (50.0 - 0.1) * i as f64 / 499.0;
        let d = discriminant(&z, e, &tol()).map_err(|x| x.to_string())?;
        disc_err = disc_err.max((d - 2.0 * e.sqrt().cos()).abs());
    }
    check(
        det_err <= 1e-9 && disc_err <= 1e-8,
        format!("max |det Q - 1| = {det_err:.2e} (tol 1e-9), max |Δ - 2cos√E| = {disc_err:.2e} (tol 1e-8)"),
    )
}

fn ratio_profile(g: ComplexFn<'_>, x_max: f64, breaks: &[f64]) -> Result<Vec<f64>, String> {
    let t = Tolerance::uniform(1e-10);
    let absg = |x: f64| g(x).norm();
    let m = build_martingale(&absg, 1.5, 6, x_max, breaks, &t).map_err(|e| e.to_string())?;
    let bn = b_norm(g, &m, 1.0, breaks, &t).map_err(|e| e.to_string())?.value;
    let gc = |x: f64| g(x).conj();
    // spacing well below the oscillation period of the kernels
    let grid: Vec<f64> = (0..=240).map(|i| x_max * i as f64 / 240.0).collect();
    let opts = ChainOptions::new(Tolerance::uniform(1e-9)).with_breakpoints(breaks.to_vec());
    let mut out = Vec::new();
    for n in 1..=6usize {
        let gs: Vec<ComplexFn> = conjugate_pattern(n)
            .into_iter()
            .map(|c| if c { &gc as ComplexFn } else { g })
            .collect();
        let ms = multi_m_star(&gs, &grid, &opts).map_err(|e| e.to_string())?;
        let fact: f64 = (1..=n).map(|k| k as f64).product();
        out.push((ms.value * fact.sqrt() / bn.powi(n as i32)).powf(1.0 / n as f64));
    }
    Ok(out)
}

fn c5_multilinear_shape() -> Outcome {
    let one = |_: f64| Complex64::new(1.0, 0.0);
    let ones: Vec<ComplexFn> = vec![&one; 8];
    let mut vol_err: f64 = 0.0;
    for n in 1..=8 {
        let xp = 2.5;
        let v = multi_m(&ones[..n], 0.0, xp, &ChainOptions::new(Tolerance::uniform(1e-12))).map_err(|e| e.to_string())?;
        let fact: f64 = (1..=n).map(|k| k as f64).product();
        vol_err = vol_err.max((v - xp.powi(n as i32) / fact).norm());
    }
    let g1 = |t: f64| Complex64::from_polar((1.0 + t).powf(-0.9), t);
    let (v0, band) = mathieu_band(1);
    let v = DecayingPotential::parse("power:1,0.9").map_err(|e| e.to_string())?;
    let k2 = kernel(&v0, &v, band.midpoint(), 60.0, &tol()).map_err(|e| e.to_string())?;
    let g2 = |t: f64| k2.eval(t);
    let g3 = |t: f64| Complex64::from_polar((-0.1 * t).exp(), 0.5 * t);
    let p1 = ratio_profile(&g1, 60.0, &[])?;
    let p2 = ratio_profile(&g2, 60.0, &k2.breakpoints())?;
    let p3 = ratio_profile(&g3, 60.0, &[])?;
    let spread = |p: &[f64]| {
        let hi = p.iter().copied().fold(f64::MIN, f64::max);
        let lo = p.iter().copied().fold(f64::MAX, f64::min);
        hi / lo
    };
    let spreads = [spread(&p1), spread(&p2), spread(&p3)];
    if std::env::var_os("ACCEPTANCE_VERBOSE").is_some() {
        eprintln!("profiles: {p1:.4?}\n{p2:.4?}\n{p3:.4?}");
    }
    // constant fitted on the first kernel, then checked on the other two
    let c = p1.iter().copied().fold(0.0, f64::max);
    let bounded = p2.iter().chain(&p3).all(|&r| r <= 3.0 * c);
    let ok = vol_err <= 1e-10 && spreads.iter().all(|&s| s < 3.0) && bounded;
    check(
        ok,
        format!(
            "simplex volume err {vol_err:.1e}; ratio spread over n=1..6 {:.2}/{:.2}/{:.2} (< 3); fitted C = {c:.3}, others within 3C: {bounded}",
            spreads[0], spreads[1], spreads[2]
        ),
    )
}

fn c6_martingale() -> Outcome {
    let f = |x: f64| (1.0 + x).powf(-0.9);
    let t = Tolerance::uniform(1e-12);
    let m = build_martingale(&f, 1.5, 8, 1000.0, &[], &t).map_err(|e| e.to_string())?;
    let worst = m.adaptedness(&f, &[], &t).map_err(|e| e.to_string())?;
    check(
        worst <= 1.0 + 1e-9,
        format!("max ν(cell)·2^m/ν(total) = {worst:.12} over depth 8 (bound 1 + 1e-9)"),
    )
}

fn c7_tail_calculus() -> Outcome {
    let g = |t: f64| Complex64::new((-t).exp(), 0.0);
    let gs: Vec<ComplexFn> = vec![&g, &g];
    let opts = ChainOptions::new(Tolerance::uniform(1e-12));
    let mut b2_err: f64 = 0.0;
    for x in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let r = tail_b(&gs, x, x + 20.0, 8, 1e-12, &opts).map_err(|e| e.to_string())?;
        b2_err = b2_err.max((r.value.re - (-2.0 * x).exp() / 2.0).abs());
    }
    let g1 = |t: f64| Complex64::from_polar(1.0 / (1.0 + t), t);
    let g2 = |t: f64| Complex64::new((-0.5 * t).exp(), 0.0);
    let pair: Vec<ComplexFn> = vec![&g1, &g2];
    let single: Vec<ComplexFn> = vec![&g2];
    let h = 1e-4;
    let cut = [200.0, 200.0];
    let mut d_err: f64 = 0.0;
    for i in 0..20 {
        let x = 0.25 + 0.5 * i as f64;
        let bp = tail_b_truncated(&pair, x + h, &cut, &opts).map_err(|e| e.to_string())?;
        let bm = tail_b_truncated(&pair, x - h, &cut, &opts).map_err(|e| e.to_string())?;
        let b1 = tail_b_truncated(&single, x, &cut[..1], &opts).map_err(|e| e.to_string())?;
        d_err = d_err.max(((bp - bm) / (2.0 * h) + g1(x) * b1).norm());
    }
    check(
        b2_err <= 1e-8 && d_err <= 1e-4,
        format!("B2 error {b2_err:.2e} (tol 1e-8); derivative identity error {d_err:.2e} (tol 1e-4)"),
    )
}

fn c8_wkb() -> Outcome {
    let start = Instant::now();
    let z = PeriodicPotential::zero();
    let bump = DecayingPotential::parse("bump:1,0,5").map_err(|e| e.to_string())?;
    let k = kernel(&z, &bump, 1.0, 8.0, &tol()).map_err(|e| e.to_string())?;
    let xs: Vec<f64> = (0..=50).map(|i| 0.1 * i as f64).collect();
    let t = Tolerance::uniform(1e-12);
    let s = series_solution(&k, &xs, 24, &[], &t).map_err(|e| e.to_string())?;
    let d = direct_reduced(&k, 5.0, &xs, &t).map_err(|e| e.to_string())?;
    let mut series_err: f64 = 0.0;
    for (i, di) in d.iter().enumerate() {
        let y = s.value(i);
        series_err = series_err.max((y[0] - di[0]).norm()).max((y[1] - di[1]).norm());
    }
    let cb = wkb_compare(&z, &bump, 1.0, 20.0, 201, &tol()).map_err(|e| e.to_string())?;
    let beyond = cb
        .xs
        .iter()
        .zip(&cb.r)
        .filter(|(x, _)| **x >= 5.0)
        .map(|(_, r)| *r)
        .fold(0.0, f64::max);
    let (v0, band) = mathieu_band(1);
    let v = DecayingPotential::parse("power:1,0.9").map_err(|e| e.to_string())?;
    let c = wkb_compare(&v0, &v, band.midpoint(), 1000.0, 2001, &tol()).map_err(|e| e.to_string())?;
    let ok = series_err <= 1e-6 && beyond <= 1e-8 && c.tail_max <= 0.05;
    within_time(
        start,
        Duration::from_secs(600),
        check(
            ok,
            format!(
                "bump series vs direct {series_err:.2e} (tol 1e-6); r beyond support {beyond:.2e}; power:1,0.9 max r on [500,1000] = {:.3e} (tol 0.05), fitted decay exponent {}",
                c.tail_max,
                c.decay_exponent.map_or("n/a".into(), |e| format!("{e:.2}"))
            ),
        ),
    )
}

fn c9_oscillatory() -> Outcome {
    let t = Tolerance::uniform(1e-10);
    let g = |_: f64| PI / 2.0;
    let gammas = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
    let mut vals = Vec::new();
    for &gm in &gammas {
        let v = osc_integral(gm, &g, 1e3 / gm, &t).map_err(|e| e.to_string())?;
        vals.push(v.abs());
    }
    let lx: Vec<f64> = gammas.iter().map(|g: &f64| (1.0 / g).ln()).collect();
    let fit = linear_fit(&lx, &vals).map_err(|e| e.to_string())?;
    // c/γ + c' fitted on the two largest γ, verified on the rest
    let c = (vals[1] - vals[0]) / (1.0 / gammas[1] - 1.0 / gammas[0]);
    let cp = vals[0] - c / gammas[0];
    let dominated = gammas.iter().zip(&vals).skip(2).all(|(g, v)| *v <= c / g + cp + 1e-9);
    let ks: Vec<f64> = (2..=32).map(|k| k as f64).collect();
    let mut modes = Vec::new();
    for &k in &ks {
        let m = fourier_mode_integral(k as i64, 1.0, &g, 1e3, &t).map_err(|e| e.to_string())?;
        modes.push(m.norm());
    }
    let (_, expo, _) = power_law_fit(&ks, &modes).map_err(|e| e.to_string())?;
    let ok = fit.r_squared >= 0.95 && dominated && (0.8..=1.2).contains(&expo);
    check(
        ok,
        format!(
            "log fit R² = {:.4} (>= 0.95); c/γ + c' envelope holds: {dominated}; mode exponent {expo:.3} (in [0.8, 1.2])",
            fit.r_squared
        ),
    )
}

fn c10_orthogonality() -> Outcome {
    let z = PeriodicPotential::zero();
    let v = DecayingPotential::zero();
    let t = Tolerance::uniform(1e-10);
    let deltas = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
    let mut i22 = Vec::new();
    for &d in &deltas {
        let r = orthogonality_integrals(&z, &v, 1.0, 1.0 + d, 1e4, Weight::One, &t).map_err(|e| e.to_string())?;
        i22.push(r.i22.abs());
    }
    let lx: Vec<f64> = deltas.iter().map(|d: &f64| (1.0 / d).ln()).collect();
    let first = linear_fit(&lx[..3], &i22[..3]).map_err(|e| e.to_string())?.slope;
    let last = linear_fit(&lx[2..], &i22[2..]).map_err(|e| e.to_string())?.slope;
    let no_superlinear = last <= 1.5 * first + 0.05;
    let mut i4 = Vec::new();
    for l in [1e2, 1e3, 1e4] {
        let r = orthogonality_integrals(&z, &v, 1.0, 1.1, l, Weight::One, &t).map_err(|e| e.to_string())?;
        i4.push(r.i4.abs());
    }
    let drift = (i4[2] - i4[0]).abs();
    check(
        no_superlinear && drift <= 0.05,
        format!(
            "|I22| slope vs log(1/δ): first half {first:.3}, last half {last:.3} (last <= 1.5·first + 0.05); |I4| at L = 1e2/1e3/1e4: {:.4}/{:.4}/{:.4}, drift {drift:.2e} (tol 0.05)",
            i4[0], i4[1], i4[2]
        ),
    )
}

fn c11_lee() -> Outcome {
    let space = WeightedL2::new(1.0, 64).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let dim = space.nodes().len();
    let mut tested = 0;
    let mut all_hold = true;
    while tested < 100 {
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
                tested += 1;
            }
            Err(spectra_core::SpectraError::Hypothesis(_)) => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    let t = Tolerance::uniform(1e-10);
    let (v0, band) = mathieu_band(1);
    let v = DecayingPotential::parse("power:1,1").map_err(|e| e.to_string())?;
    let energies: Vec<f64> = (0..5).map(|i| band.at(0.1 + 0.2 * i as f64)).collect();
    let big = WeightedL2::new(1000.0, 40_000).map_err(|e| e.to_string())?;
    let (vecs, _) = pruefer_vectors(&v0, &v, &energies, &big, &t).map_err(|e| e.to_string())?;
    let g = big.sample(|x| v.eval(x));
    let pr = lee_bound_check(&big, &vecs, &g).map_err(|e| e.to_string())?;
    // A_i - Γ/2 log L across three decades
    let mut spread: f64 = 0.0;
    for &e in &energies {
        let data = floquet_data(&v0, e, &t).map_err(|x| x.to_string())?;
        let gam = data.capital_gamma(&t).map_err(|x| x.to_string())?;
        let mut offs = Vec::new();
        for l in [1e2, 1e3, 1e4] {
            let tr = pruefer_flow(&v0, &v, e, l, PrueferInit::dirichlet(&data), &t).map_err(|x| x.to_string())?;
            let a = normalization_constant(&tr, &t).map_err(|x| x.to_string())?;
            offs.push(a - 0.5 * gam * l.ln());
        }
        let hi = offs.iter().copied().fold(f64::MIN, f64::max);
        let lo = offs.iter().copied().fold(f64::MAX, f64::min);
        spread = spread.max(hi - lo);
    }
    check(
        all_hold && pr.holds && spread <= 0.25,
        format!(
            "random families: {tested} tested, all hold: {all_hold}; Prüfer family α = {:.3}, holds: {}; max spread of A_i - Γ/2·log L over L = 1e2..1e4: {spread:.2e} (tol 0.25)",
            pr.alpha, pr.holds
        ),
    )
}

fn c12_appendix() -> Outcome {
    let (v0, band) = mathieu_band(1);
    let v = DecayingPotential::parse("power:1,0.9").map_err(|e| e.to_string())?;
    let k = kernel(&v0, &v, band.midpoint(), 100.0, &tol()).map_err(|e| e.to_string())?;
    let ph = WkbPhase::new(k.data().clone(), &v, 100.0, &tol()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(192);
    let xs: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..100.0)).collect();
    let res = kernel_identity_residual(&k, &ph, &xs);
    let c = convolution_constant();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(1..200);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        worst = worst.max(convolution_ratio(&f));
    }
    check(
        res <= 1e-8 && worst <= c,
        format!("kernel identity residual {res:.2e} (tol 1e-8); max convolution ratio {worst:.4} <= π·coth π = {c:.4}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("free-case spectral density", c1_free_density),
        ("cross-method density consistency", c2_cross_method),
        ("Prüfer vs direct integration", c3_pruefer_direct),
        ("monodromy unimodularity", c4_monodromy),
        ("multilinear bound shape", c5_multilinear_shape),
        ("martingale adaptedness", c6_martingale),
        ("tail-integral calculus", c7_tail_calculus),
        ("WKB series and asymptotics", c8_wkb),
        ("oscillatory integral bounds", c9_oscillatory),
        ("almost-orthogonality growth", c10_orthogonality),
        ("unit-vector inequality and normalization", c11_lee),
        ("kernel identity and convolution bound", c12_appendix),
    ];
    let filter: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if filter.is_some_and(|n| n != i + 1) {
            continue;
        }
        match f() {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d}", i + 1)
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
