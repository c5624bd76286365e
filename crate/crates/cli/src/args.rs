use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "spectra", version, about = "Spectral experiments for perturbed periodic Schrödinger operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Band edges of a periodic background.
    #[command(args_override_self = true)]
    Bands(BandsArgs),
    /// Spectral density by the Prüfer formula and by the Weyl m-function.
    #[command(args_override_self = true)]
    Density(DensityArgs),
    /// Prüfer trajectories, or randomized Prüfer-vs-direct comparisons.
    #[command(args_override_self = true)]
    Prufer(PruferArgs),
    /// WKB principal-term comparison and kernel identity residuals.
    #[command(name = "wkb-error", args_override_self = true)]
    WkbError(WkbArgs),
    /// Simplex integrals, their maxima and iterated tail integrals.
    #[command(args_override_self = true)]
    Mlinear(MlinearArgs),
    /// Oscillatory integrals, almost-orthogonality and unit-vector checks.
    #[command(args_override_self = true)]
    Ortho(OrthoArgs),
    /// Adapted martingale structure of a function in l^p(L^1).
    #[command(args_override_self = true)]
    Martingale(MartingaleArgs),
    /// Monodromy determinant and free discriminant checks.
    #[command(args_override_self = true)]
    Mcheck(McheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bands(_) => "bands",
            Command::Density(_) => "density",
            Command::Prufer(_) => "prufer",
            Command::WkbError(_) => "wkb-error",
            Command::Mlinear(_) => "mlinear",
            Command::Ortho(_) => "ortho",
            Command::Martingale(_) => "martingale",
            Command::Mcheck(_) => "mcheck",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Bands(a) => &a.common,
            Command::Density(a) => &a.common,
            Command::Prufer(a) => &a.common,
            Command::WkbError(a) => &a.common,
            Command::Mlinear(a) => &a.common,
            Command::Ortho(a) => &a.common,
            Command::Martingale(a) => &a.common,
            Command::Mcheck(a) => &a.common,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let v = match self {
            Command::Bands(a) => serde_json::to_value(a),
            Command::Density(a) => serde_json::to_value(a),
            Command::Prufer(a) => serde_json::to_value(a),
            Command::WkbError(a) => serde_json::to_value(a),
            Command::Mlinear(a) => serde_json::to_value(a),
            Command::Ortho(a) => serde_json::to_value(a),
            Command::Martingale(a) => serde_json::to_value(a),
            Command::Mcheck(a) => serde_json::to_value(a),
        };
        v.expect("argument structs serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Common {
    /// Output format.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// File of `key=value` lines; command-line flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Absolute and relative integrator tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Seed for every randomized part of a run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BandsArgs {
    /// Periodic background descriptor.
    #[arg(long, default_value = "zero")]
    pub v0: String,
    #[arg(long, default_value_t = 0.0)]
    pub emin: f64,
    #[arg(long, default_value_t = 50.0)]
    pub emax: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityMethodArg {
    Prufer,
    Weyl,
    Both,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DensityArgs {
    #[arg(long, default_value = "zero")]
    pub v0: String,
    /// Decaying perturbation descriptor; truncated at `L`.
    #[arg(long, default_value = "zero")]
    pub v: String,
    /// Truncation length.
    #[arg(long = "L", default_value_t = 1.0)]
    #[serde(rename = "L")]
    pub length: f64,
    #[arg(long, default_value_t = 1.0)]
    pub emin: f64,
    #[arg(long, default_value_t = 9.0)]
    pub emax: f64,
    #[arg(long, default_value_t = 9)]
    pub esteps: usize,
    /// Use the central half of band `i` (0-based) instead of [emin, emax].
    #[arg(long)]
    pub band: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    pub method: DensityMethodArg,
    /// Decreasing ε sequence for the m-function route.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.0001,0.00001")]
    pub eps: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PruferArgs {
    #[arg(long, default_value = "mathieu:1")]
    pub v0: String,
    #[arg(long, default_value = "power:1,1")]
    pub v: String,
    #[arg(long)]
    pub energy: Option<f64>,
    /// Use the midpoint of band `i` when no energy is given.
    #[arg(long, default_value_t = 0)]
    pub band: usize,
    #[arg(long = "L", default_value_t = 50.0)]
    #[serde(rename = "L")]
    pub length: f64,
    #[arg(long, default_value_t = 0.0)]
    pub u0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub du0: f64,
    /// Emit every n-th trajectory sample.
    #[arg(long, default_value_t = 8)]
    pub stride: usize,
    /// Run this many randomized Prüfer-vs-direct scenarios instead.
    #[arg(long, default_value_t = 0)]
    pub scenarios: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WkbMode {
    Compare,
    Identity,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct WkbArgs {
    #[arg(long, default_value = "mathieu:1")]
    pub v0: String,
    #[arg(long, default_value = "power:1,0.9")]
    pub v: String,
    #[arg(long)]
    pub energy: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub band: usize,
    #[arg(long, default_value_t = 1000.0)]
    pub xmax: f64,
    #[arg(long, default_value_t = 2001)]
    pub points: usize,
    /// Series order for compactly supported perturbations.
    #[arg(long, default_value_t = 24)]
    pub nmax: usize,
    #[arg(long, value_enum, default_value = "compare")]
    pub mode: WkbMode,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MlinearMode {
    Bound,
    Tail,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct MlinearArgs {
    /// Function `DESC[@w=OMEGA|@E=ENERGY|@band=I]`: a decaying-potential
    /// descriptor, optionally times `e^{iωx}` or turned into the oscillatory
    /// kernel at an energy of `--v0`. Repeatable.
    #[arg(long, default_value = "power:1,0.9@w=1")]
    pub g: Vec<String>,
    #[arg(long, default_value = "zero")]
    pub v0: String,
    #[arg(long, default_value_t = 1.5)]
    pub p: f64,
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    #[arg(long, default_value_t = 60.0)]
    pub xmax: f64,
    #[arg(long, default_value_t = 6)]
    pub nmax: usize,
    /// Grid points for the maximal simplex integral.
    #[arg(long, default_value_t = 241)]
    pub grid: usize,
    /// First cutoff of the tail ladder.
    #[arg(long, default_value_t = 100.0)]
    pub cutoff: f64,
    #[arg(long, value_enum, default_value = "bound")]
    pub mode: MlinearMode,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrthoMode {
    Osc,
    Orth,
    Lee,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct OrthoArgs {
    #[arg(long, value_enum, default_value = "orth")]
    pub mode: OrthoMode,
    #[arg(long, default_value = "zero")]
    pub v0: String,
    #[arg(long, default_value = "zero")]
    pub v: String,
    #[arg(long, default_value_t = 1.0)]
    pub e1: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001,0.0001,0.00001")]
    pub deltas: Vec<f64>,
    #[arg(long = "L", default_value_t = 1e4)]
    #[serde(rename = "L")]
    pub length: f64,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    pub lengths: Vec<f64>,
    /// Periodic weight: zero, one, cos2pi, inv-gamma-prime-sq, phi-mod-sq.
    #[arg(long, default_value = "one")]
    pub weight: String,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001,0.0001,0.00001")]
    pub gammas: Vec<f64>,
    /// Oscillatory integrals run to `L = lscale / γ`.
    #[arg(long, default_value_t = 1e3)]
    pub lscale: f64,
    #[arg(long, default_value_t = 32)]
    pub kmax: i64,
    /// Band for the Prüfer unit vectors.
    #[arg(long, default_value_t = 0)]
    pub band: usize,
    #[arg(long, default_value_t = 100)]
    pub families: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct MartingaleArgs {
    #[arg(long, default_value = "power:1,0.9")]
    pub f: String,
    #[arg(long, default_value_t = 1.5)]
    pub p: f64,
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    #[arg(long, default_value_t = 1000.0)]
    pub xmax: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct McheckArgs {
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 500)]
    pub esteps: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}
