//! Numerical spectral analysis of one-dimensional Schrödinger operators
//! `-u'' + (V0 + V) u = E u` on the half line, where `V0` is 1-periodic and
//! `V` decays.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: adaptive ODE integration, quadrature, root finding.
//! - [`potentials`]: periodic backgrounds, decaying perturbations, truncation.
//! - [`floquet`]: monodromy, discriminant, bands, Floquet solutions and phases.
//! - [`pruefer`]: generalized Prüfer amplitude/angle dynamics and the
//!   oscillatory-integral estimates built on them.
//! - [`spectral`]: spectral density of eventually periodic operators, Weyl
//!   m-function, separate-set scans.
//! - [`multilinear`]: `l^p(L^1)` norms, martingale structures, variation norms,
//!   simplex integrals and tail integrals.
//! - [`wkb`]: reduction to the first-order off-diagonal system, its series
//!   solution and WKB comparisons.

pub mod error;
pub mod floquet;
pub mod multilinear;
pub mod numerics;
pub mod potentials;
pub mod pruefer;
pub mod spectral;
pub mod stats;
pub mod wkb;

pub use error::{Result, SpectraError};
pub use floquet::{Band, BandStructure, FloquetData, Monodromy};
pub use multilinear::{BNorm, LpL1Norm, MartingaleStructure, OscKernel};
pub use numerics::{DenseSolution, Grid, OdeOptions, Tolerance};
pub use potentials::{DecayingPotential, PeriodicPotential, Potential, TruncatedPotential};
pub use pruefer::{PrueferTrajectory, RhoDecomposition};
pub use spectral::{SeparateSetReport, SpectralDensitySample, WeylM};
pub use wkb::{SeriesSolution, WkbPhase};
