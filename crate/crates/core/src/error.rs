use thiserror::Error;

use crate::lattice::LatticeKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("incompatible lattice kinds: {left:?} vs {right:?}")]
    IncompatibleKinds {
        left: LatticeKind,
        right: LatticeKind,
    },

    #[error("invalid lattice kind: {0}")]
    InvalidKind(String),

    #[error("invalid element: {0}")]
    InvalidElement(String),

    #[error("not an order unit: component {index} is {value}")]
    NotAnOrderUnit { index: usize, value: f64 },

    #[error("regulator is negative at component {index} ({value})")]
    NegativeRegulator { index: usize, value: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("regulator synthesis failed at epsilon = {epsilon}: {reason}")]
    SynthesisFailed { epsilon: f64, reason: String },

    #[error("Riemann sums did not settle within {max_levels} dyadic levels")]
    NoConvergence { max_levels: u32 },

    #[error("difference quotients are not ru-Cauchy (refuted at epsilon = {epsilon})")]
    NotDifferentiable { epsilon: f64 },

    #[error("generator is not Metzler: entry ({row}, {col}) = {value}")]
    NotMetzler { row: usize, col: usize, value: f64 },

    #[error("invalid semigroup spec: {0}")]
    SpecInvalid(String),

    #[error("element is not in the generator domain (refuted at epsilon = {epsilon})")]
    NotInDomain { epsilon: f64 },

    #[error("lambda = {lambda} does not dominate the order exponent w = {w}")]
    LambdaNotDominating { lambda: f64, w: f64 },

    #[error("lambda - A is singular at lambda = {lambda}")]
    Singular { lambda: f64 },

    #[error("resolvent R({n}, A) is not a positive operator")]
    NotPositiveResolvent { n: f64 },

    #[error("Yosida iterates are not ru-Cauchy up to n = {n_max} (profile {profile:?})")]
    NotCauchyAtScale { n_max: usize, profile: Vec<f64> },

    #[error("semigroups do not commute (residual {residual:e})")]
    NonCommuting { residual: f64 },

    #[error("round trip failed at stage {stage}: {detail}")]
    RoundTripFailed { stage: String, detail: String },

    #[error("semigroups disagree at t = {t}, probe {probe}: unit norm {norm:e}")]
    Mismatch { t: f64, probe: usize, norm: f64 },

    #[error("f(0) = {value} is not strictly positive")]
    ZeroAtOrigin { value: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),
}
