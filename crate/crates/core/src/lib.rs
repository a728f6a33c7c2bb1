//! Regulator-relative calculus for positive operator semigroups on model
//! vector lattices.

pub mod calculus;
pub mod error;
pub mod expm;
pub mod generator;
pub mod lattice;
pub mod ru;
pub mod semigroup;
pub mod yosida;

pub use calculus::{DerivativeOptions, OrbitMap};
pub use error::{Error, Result};
pub use generator::{EobCertificate, GeneratorSpec, ResolventReport};
pub use lattice::{Boundary, Element, GridSpec, LatticeKind, PositivityVerdict, Residual};
pub use ru::{Budget, RuCertificate, RuSchedule, RuVerdict};
pub use semigroup::{PositivityClaim, Semigroup, SemigroupHandle, SemigroupSpec};
pub use yosida::{ConstructionTrace, YosidaApproximant};
