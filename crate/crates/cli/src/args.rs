use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rulab", version, about = "Checks for positive semigroups on model vector lattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// CSV output path; defaults to `<command>.csv`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Seed for randomized probes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lattice identities on given or random element pairs.
    LatticeCheck(LatticeCheck),
    /// Certify ru-convergence of a finite sequence.
    RuLimit(RuLimit),
    /// Quadrature of an orbit and the integral identities of the generator.
    IntegralCheck(IntegralCheck),
    /// T(t+s)x = T(t)T(s)x on a grid of times.
    SemigroupLaw(SemigroupLaw),
    /// Generator action by certified difference quotients.
    Generator(Generator),
    /// Resolvent value and power bound.
    Resolvent(Resolvent),
    /// Exponential order bound for an orbit.
    Eob(Eob),
    /// Lower bounds ruling out compactly supported regulators for translation.
    CcDiagnostic(CcDiagnostic),
    /// Yosida construction trace of T(t)x.
    Yosida(Yosida),
    /// Generator to semigroup and back.
    HyRoundtrip(HyRoundtrip),
    /// Compare two semigroups that share a generator.
    Uniqueness(Uniqueness),
}

#[derive(Debug, Args)]
pub struct LatticeCheck {
    /// First element (JSON); random pairs are drawn when omitted.
    #[arg(long, requires = "y")]
    pub x: Option<PathBuf>,
    #[arg(long, requires = "x")]
    pub y: Option<PathBuf>,
    /// Random pairs per lattice kind.
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    /// Dimension of the random vectors.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
}

#[derive(Debug, Args)]
pub struct RuLimit {
    /// JSON object with `terms`, optional `limit`, `regulator` and `epsilons`.
    #[arg(long)]
    pub sequence: PathBuf,
}

#[derive(Debug, Args)]
pub struct IntegralCheck {
    #[arg(long)]
    pub spec: PathBuf,
    /// Probe element; all ones when omitted.
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct SemigroupLaw {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0])]
    pub t: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0])]
    pub s: Vec<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct Generator {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub x: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Laplace,
    Direct,
}

#[derive(Debug, Args)]
pub struct Resolvent {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = Method::Direct)]
    pub method: Method,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub w: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub k_max: usize,
    /// Horizon of the order bound behind Laplace tail control.
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
}

#[derive(Debug, Args)]
pub struct Eob {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub w: f64,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct CcDiagnostic {
    /// Zero-extended grid function; a hat on [-1, 1] when omitted.
    #[arg(long)]
    pub f: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub w: f64,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct Yosida {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub n_max: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct HyRoundtrip {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 1.0])]
    pub t: Vec<f64>,
    #[arg(long, default_value_t = 256)]
    pub n_max: usize,
}

#[derive(Debug, Args)]
pub struct Uniqueness {
    #[arg(long)]
    pub spec: PathBuf,
    /// Second semigroup; the Yosida construction from `--spec` when omitted.
    #[arg(long)]
    pub other: Option<PathBuf>,
    /// Probe elements; the standard basis (or all ones on grids) when omitted.
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 1.0])]
    pub t: Vec<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = 256)]
    pub n_max: usize,
}
