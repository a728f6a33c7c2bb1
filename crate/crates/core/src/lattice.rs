//! Concrete Archimedean vector lattices.
//!
//! Two models are provided: finite vectors ordered componentwise, and real
//! functions sampled on a uniform grid over `[lower, upper]`. The grid carries
//! a boundary policy that says how the function continues outside the
//! sampled interval:
//!
//! * [`Boundary::Zero`] extends by zero (finite model of compactly supported
//!   continuous functions),
//! * [`Boundary::Constant`] extends by the edge values (bounded uniformly
//!   continuous functions),
//! * [`Boundary::Periodic`] wraps around (continuous functions on a circle).
//!
//! All lattice operations act componentwise and are exact in floating point
//! apart from the rounding of the arithmetic itself. Comparisons always take
//! an explicit slack.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Zero,
    Constant,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
    pub boundary: Boundary,
}

impl GridSpec {
    pub fn new(lower: f64, upper: f64, step: f64, boundary: Boundary) -> Result<Self> {
        let grid = GridSpec {
            lower,
            upper,
            step,
            boundary,
        };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.step.is_finite()) {
            return Err(Error::InvalidKind("grid bounds must be finite".into()));
        }
        if self.upper <= self.lower {
            return Err(Error::InvalidKind(format!(
                "upper {} must exceed lower {}",
                self.upper, self.lower
            )));
        }
        if self.step <= 0.0 {
            return Err(Error::InvalidKind(format!("step {} must be positive", self.step)));
        }
        let ratio = (self.upper - self.lower) / self.step;
        let cells = ratio.round();
        if cells < 1.0 || (ratio - cells).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::InvalidKind(format!(
                "(upper - lower) / step = {ratio} is not an integer"
            )));
        }
        Ok(())
    }

    /// Number of grid cells.
    pub fn cells(&self) -> usize {
        ((self.upper - self.lower) / self.step).round() as usize
    }

    /// Number of samples (`cells + 1`).
    pub fn len(&self) -> usize {
        self.cells() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of sample `i`.
    pub fn coord(&self, i: usize) -> f64 {
        let cells = self.cells() as f64;
        self.lower + (self.upper - self.lower) * (i as f64 / cells)
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.coord(i)).collect()
    }
}

/// Which model lattice an element lives in.
///
/// JSON form: `{"vector": 2}` or
/// `{"grid": {"lower": -5, "upper": 5, "step": 0.01, "boundary": "zero"}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Vector(usize),
    Grid(GridSpec),
}

impl LatticeKind {
    pub fn vector(dim: usize) -> Self {
        LatticeKind::Vector(dim)
    }

    pub fn grid(lower: f64, upper: f64, step: f64, boundary: Boundary) -> Result<Self> {
        Ok(LatticeKind::Grid(GridSpec::new(lower, upper, step, boundary)?))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LatticeKind::Vector(0) => Err(Error::InvalidKind("vector dimension must be >= 1".into())),
            LatticeKind::Vector(_) => Ok(()),
            LatticeKind::Grid(g) => g.validate(),
        }
    }

    /// Number of stored samples.
    pub fn len(&self) -> usize {
        match self {
            LatticeKind::Vector(d) => *d,
            LatticeKind::Grid(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_grid(&self) -> Option<&GridSpec> {
        match self {
            LatticeKind::Grid(g) => Some(g),
            LatticeKind::Vector(_) => None,
        }
    }
}

/// A member of one of the model lattices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawElement")]
pub struct Element {
    kind: LatticeKind,
    samples: Vec<f64>,
}

#[derive(Deserialize)]
struct RawElement {
    kind: LatticeKind,
    samples: Vec<f64>,
}

impl TryFrom<RawElement> for Element {
    type Error = Error;

    fn try_from(raw: RawElement) -> Result<Self> {
        Element::new(raw.kind, raw.samples)
    }
}

impl Element {
    pub fn new(kind: LatticeKind, samples: Vec<f64>) -> Result<Self> {
        kind.validate()?;
        if samples.len() != kind.len() {
            return Err(Error::InvalidElement(format!(
                "expected {} samples, got {}",
                kind.len(),
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidElement(format!(
                "sample {i} is not finite ({})",
                samples[i]
            )));
        }
        Ok(Element { kind, samples })
    }

    /// Finite vector from a slice. Panics on non-finite input or an empty slice.
    pub fn vector(values: &[f64]) -> Self {
        Element::new(LatticeKind::Vector(values.len()), values.to_vec())
            .expect("vector literal must be nonempty and finite")
    }

    pub fn zeros(kind: LatticeKind) -> Self {
        Element {
            kind,
            samples: vec![0.0; kind.len()],
        }
    }

    /// The constant-one element, used as the reference unit of every model.
    pub fn ones(kind: LatticeKind) -> Self {
        Element {
            kind,
            samples: vec![1.0; kind.len()],
        }
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut samples = vec![0.0; dim];
        samples[i] = 1.0;
        Element {
            kind: LatticeKind::Vector(dim),
            samples,
        }
    }

    /// Samples `f` at the grid coordinates (or at `0, 1, ..` for vectors).
    pub fn from_fn(kind: LatticeKind, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = match &kind {
            LatticeKind::Vector(d) => (0..*d).map(|i| f(i as f64)).collect(),
            LatticeKind::Grid(g) => g.coords().into_iter().map(f).collect(),
        };
        Element::new(kind, samples)
    }

    pub(crate) fn from_parts_unchecked(kind: LatticeKind, samples: Vec<f64>) -> Self {
        debug_assert_eq!(kind.len(), samples.len());
        Element { kind, samples }
    }

    pub fn kind(&self) -> &LatticeKind {
        &self.kind
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|&v| v == 0.0)
    }

    pub fn is_positive(&self) -> bool {
        self.samples.iter().all(|&v| v >= 0.0)
    }

    pub fn check_compatible(&self, other: &Element) -> Result<()> {
        if self.kind == other.kind {
            Ok(())
        } else {
            Err(Error::IncompatibleKinds {
                left: self.kind,
                right: other.kind,
            })
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Element {
        Element {
            kind: self.kind,
            samples: self.samples.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(&self, other: &Element, f: impl Fn(f64, f64) -> f64) -> Result<Element> {
        self.check_compatible(other)?;
        Ok(Element {
            kind: self.kind,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, a: f64) -> Element {
        self.map(|v| a * v)
    }

    pub fn add(&self, other: &Element) -> Result<Element> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Element) -> Result<Element> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn abs(&self) -> Element {
        abs(self)
    }

    pub fn sup(&self, other: &Element) -> Result<Element> {
        sup(self, other)
    }

    pub fn inf(&self, other: &Element) -> Result<Element> {
        inf(self, other)
    }

    pub fn positive_part(&self) -> Element {
        self.map(|v| v.max(0.0))
    }

    pub fn negative_part(&self) -> Element {
        self.map(|v| (-v).max(0.0))
    }

    /// `|self - other|`.
    pub fn abs_diff(&self, other: &Element) -> Result<Element> {
        self.zip_with(other, |a, b| (a - b).abs())
    }

    /// Largest absolute sample.
    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Norm relative to the constant-one unit.
    pub fn reference_norm(&self) -> f64 {
        self.sup_norm()
    }

    /// Value of the continuous piecewise-linear interpolant at `x`, continued
    /// outside the grid according to its boundary policy.
    pub fn eval_at(&self, x: f64) -> Result<f64> {
        let grid = self
            .kind
            .as_grid()
            .ok_or_else(|| Error::Unsupported("eval_at requires a grid element".into()))?;
        let pos = (x - grid.lower) / grid.step;
        let base = pos.floor();
        let frac = pos - base;
        let i = base as i64;
        if frac == 0.0 {
            Ok(self.extended(i))
        } else {
            Ok((1.0 - frac) * self.extended(i) + frac * self.extended(i + 1))
        }
    }

    /// Sample at a possibly out-of-range grid index, per boundary policy.
    pub(crate) fn extended(&self, i: i64) -> f64 {
        let n = self.samples.len() as i64;
        if (0..n).contains(&i) {
            return self.samples[i as usize];
        }
        match self.kind {
            LatticeKind::Vector(_) => 0.0,
            LatticeKind::Grid(g) => match g.boundary {
                Boundary::Zero => 0.0,
                Boundary::Constant => {
                    if i < 0 {
                        self.samples[0]
                    } else {
                        self.samples[(n - 1) as usize]
                    }
                }
                Boundary::Periodic => {
                    let cells = n - 1;
                    self.samples[i.rem_euclid(cells) as usize]
                }
            },
        }
    }
}

/// Result of a componentwise order comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityVerdict {
    pub nonnegative: bool,
    pub first_violation_index: Option<usize>,
    pub violation_magnitude: Option<f64>,
}

impl PositivityVerdict {
    pub fn holds() -> Self {
        PositivityVerdict {
            nonnegative: true,
            first_violation_index: None,
            violation_magnitude: None,
        }
    }

    fn violated(index: usize, magnitude: f64) -> Self {
        PositivityVerdict {
            nonnegative: false,
            first_violation_index: Some(index),
            violation_magnitude: Some(magnitude),
        }
    }
}

/// `a x + b y`.
pub fn combine(a: f64, x: &Element, b: f64, y: &Element) -> Result<Element> {
    x.zip_with(y, |u, v| a * u + b * v)
}

pub fn sup(x: &Element, y: &Element) -> Result<Element> {
    x.zip_with(y, f64::max)
}

pub fn inf(x: &Element, y: &Element) -> Result<Element> {
    x.zip_with(y, f64::min)
}

pub fn abs(x: &Element) -> Element {
    x.map(f64::abs)
}

/// Checks `x <= y + slack` componentwise.
pub fn leq(x: &Element, y: &Element, slack: f64) -> Result<PositivityVerdict> {
    x.check_compatible(y)?;
    if !(slack >= 0.0) {
        return Err(Error::InvalidElement(format!("slack {slack} must be nonnegative")));
    }
    for (i, (&a, &b)) in x.samples.iter().zip(&y.samples).enumerate() {
        if a > b + slack {
            return Ok(PositivityVerdict::violated(i, a - b - slack));
        }
    }
    Ok(PositivityVerdict::holds())
}

/// `inf { λ > 0 : |x| <= λ unit }` for a strictly positive unit.
pub fn unit_norm(x: &Element, unit: &Element) -> Result<f64> {
    x.check_compatible(unit)?;
    if let Some(index) = unit.samples.iter().position(|&u| !(u > 0.0)) {
        return Err(Error::NotAnOrderUnit {
            index,
            value: unit.samples[index],
        });
    }
    Ok(x
        .samples
        .iter()
        .zip(&unit.samples)
        .fold(0.0, |m, (&v, &u)| m.max(v.abs() / u)))
}

/// A residual element paired with the regulator it is measured against.
///
/// The check passes when `residual <= tol * regulator` componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub residual: Element,
    pub regulator: Element,
    pub tol: f64,
}

impl Residual {
    pub fn new(residual: Element, regulator: Element, tol: f64) -> Result<Self> {
        residual.check_compatible(&regulator)?;
        Ok(Residual {
            residual,
            regulator,
            tol,
        })
    }

    pub fn verdict(&self) -> PositivityVerdict {
        leq(&self.residual, &self.regulator.scale(self.tol), 0.0)
            .expect("residual and regulator share a kind")
    }

    pub fn passed(&self) -> bool {
        self.verdict().nonnegative
    }

    /// Residual size against the constant-one unit.
    pub fn unit_norm(&self) -> f64 {
        self.residual.reference_norm()
    }
}
