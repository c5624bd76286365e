//! Shared fixtures for the benchmarks.

use num_complex::Complex64;
use spectra_core::floquet::band_edges;
use spectra_core::{Band, DecayingPotential, PeriodicPotential, Tolerance};

pub fn tol() -> Tolerance {
    Tolerance::uniform(1e-10)
}

/// Mathieu background with amplitude 1 and its second band.
pub fn mathieu_band() -> (PeriodicPotential, Band) {
    let v0 = PeriodicPotential::mathieu(1.0);
    let bs = band_edges(&v0, (-1.0, 40.0), &Tolerance::default()).expect("band scan");
    (v0, bs.bands[1])
}

pub fn coulomb_like() -> DecayingPotential {
    DecayingPotential::parse("power:1,0.9").expect("valid descriptor")
}

/// `e^{it} / (1 + t)^0.9`
pub fn oscillating(t: f64) -> Complex64 {
    Complex64::from_polar((1.0 + t).powf(-0.9), t)
}

pub fn decaying(t: f64) -> Complex64 {
    Complex64::new((-t).exp(), 0.0)
}
