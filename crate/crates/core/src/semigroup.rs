//! Concrete positive operator semigroups with an evaluable action.
//!
//! * matrix semigroups `exp(tA)` for a Metzler generator `A`, including the
//!   discrete-Laplacian heat semigroup,
//! * the left translation `(T(t)f)(x) = f(x + t)` on a grid, with linear
//!   interpolation for fractional shifts,
//! * multiplication semigroups `T(t)f = e^{q t} f`,
//! * rescalings `S(t) = e^{μt} T(αt)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calculus::{ru_integral, OrbitMap};
use crate::error::{Error, Result};
use crate::expm::expm_apply;
use crate::lattice::{Element, GridSpec, LatticeKind, Residual};

/// Declarative description of a semigroup.
///
/// JSON forms:
/// `{"matrix":{"generator":[[-2,1],[1,-2]]}}`,
/// `{"translation":{"kind":{"grid":{...}}}}`,
/// `{"multiplication":{"q":{"kind":...,"samples":[...]}}}`,
/// `{"rescaled":{"base":{...},"alpha":2,"mu":3}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemigroupSpec {
    Matrix { generator: Vec<Vec<f64>> },
    Translation { kind: LatticeKind },
    Multiplication { q: Element },
    Rescaled { base: Box<SemigroupSpec>, alpha: f64, mu: f64 },
}

impl SemigroupSpec {
    pub fn matrix(a: &DMatrix<f64>) -> Self {
        SemigroupSpec::Matrix {
            generator: a.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    /// Heat semigroup of the discrete Laplacian, see [`heat_generator`].
    pub fn heat(points: usize, spacing: f64, diffusivity: f64, periodic: bool) -> Self {
        SemigroupSpec::matrix(&heat_generator(points, spacing, diffusivity, periodic))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PositivityClaim {
    Proven,
    Unchecked,
}

/// Anything with an evaluable action `x ↦ T(t)x`.
pub trait Semigroup: Sync {
    fn kind(&self) -> LatticeKind;

    fn apply(&self, t: f64, x: &Element) -> Result<Element>;

    fn positivity(&self) -> PositivityClaim {
        PositivityClaim::Unchecked
    }

    /// Generator as a matrix, when the semigroup is a matrix semigroup.
    fn generator_matrix(&self) -> Option<DMatrix<f64>> {
        None
    }
}

/// The orbit `t ↦ T(t)x`.
pub fn orbit<'a>(h: &'a dyn Semigroup, x: &'a Element) -> OrbitMap<'a> {
    OrbitMap::new("T(t)x", *x.kind(), move |t| h.apply(t, x).expect("orbit evaluation"))
}

/// First off-diagonal entry that is negative, if any.
pub fn metzler_violation(a: &DMatrix<f64>) -> Option<(usize, usize, f64)> {
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if i != j && a[(i, j)] < 0.0 {
                return Some((i, j, a[(i, j)]));
            }
        }
    }
    None
}

pub fn is_metzler(a: &DMatrix<f64>) -> bool {
    metzler_violation(a).is_none()
}

/// `diffusivity / spacing² · Δ` on `points` nodes, absorbing (Dirichlet) or
/// periodic at the ends.
pub fn heat_generator(points: usize, spacing: f64, diffusivity: f64, periodic: bool) -> DMatrix<f64> {
    let c = diffusivity / (spacing * spacing);
    let mut a = DMatrix::zeros(points, points);
    for i in 0..points {
        a[(i, i)] = -2.0 * c;
        if i > 0 {
            a[(i, i - 1)] += c;
        } else if periodic && points > 1 {
            a[(i, points - 1)] += c;
        }
        if i + 1 < points {
            a[(i, i + 1)] += c;
        } else if periodic && points > 1 {
            a[(i, 0)] += c;
        }
    }
    a
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::SpecInvalid("generator matrix is empty".into()));
    }
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::SpecInvalid("generator matrix must be square".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::SpecInvalid("generator entries must be finite".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

#[derive(Debug, Clone)]
enum Action {
    Matrix(DMatrix<f64>),
    Translation(GridSpec),
    Multiplication(Element),
    Rescaled {
        base: Box<SemigroupHandle>,
        alpha: f64,
        mu: f64,
    },
}

/// An immutable, evaluable semigroup built from a [`SemigroupSpec`].
#[derive(Debug, Clone)]
pub struct SemigroupHandle {
    spec: SemigroupSpec,
    kind: LatticeKind,
    positivity: PositivityClaim,
    action: Action,
}

impl SemigroupHandle {
    pub fn spec(&self) -> &SemigroupSpec {
        &self.spec
    }
}

/// Builds a handle. Positivity is `Proven` for Metzler matrices,
/// translations, multiplications and rescalings of proven bases.
pub fn make_semigroup(spec: &SemigroupSpec) -> Result<SemigroupHandle> {
    let (kind, positivity, action) = match spec {
        SemigroupSpec::Matrix { generator } => {
            let a = matrix_from_rows(generator)?;
            let claim = if is_metzler(&a) {
                PositivityClaim::Proven
            } else {
                PositivityClaim::Unchecked
            };
            (LatticeKind::Vector(a.nrows()), claim, Action::Matrix(a))
        }
        SemigroupSpec::Translation { kind } => {
            kind.validate()?;
            let grid = *kind
                .as_grid()
                .ok_or_else(|| Error::SpecInvalid("translation needs a grid kind".into()))?;
            (*kind, PositivityClaim::Proven, Action::Translation(grid))
        }
        SemigroupSpec::Multiplication { q } => (*q.kind(), PositivityClaim::Proven, Action::Multiplication(q.clone())),
        SemigroupSpec::Rescaled { base, alpha, mu } => {
            if !(*alpha > 0.0) || !alpha.is_finite() || !mu.is_finite() {
                return Err(Error::SpecInvalid(format!("rescaling needs alpha > 0 (got {alpha}) and finite mu")));
            }
            let base = make_semigroup(base)?;
            (
                base.kind,
                base.positivity,
                Action::Rescaled {
                    base: Box::new(base),
                    alpha: *alpha,
                    mu: *mu,
                },
            )
        }
    };
    Ok(SemigroupHandle {
        spec: spec.clone(),
        kind,
        positivity,
        action,
    })
}

/// Like [`make_semigroup`] but fails with `NotMetzler` when a matrix
/// generator (at any nesting depth) has a negative off-diagonal entry.
pub fn make_positive_semigroup(spec: &SemigroupSpec) -> Result<SemigroupHandle> {
    fn check(spec: &SemigroupSpec) -> Result<()> {
        match spec {
            SemigroupSpec::Matrix { generator } => {
                if let Some((row, col, value)) = metzler_violation(&matrix_from_rows(generator)?) {
                    return Err(Error::NotMetzler { row, col, value });
                }
                Ok(())
            }
            SemigroupSpec::Rescaled { base, .. } => check(base),
            _ => Ok(()),
        }
    }
    check(spec)?;
    make_semigroup(spec)
}

/// `S(t) = e^{μt} T(αt)`, with generator `αA + μI`.
pub fn rescale(h: &SemigroupHandle, alpha: f64, mu: f64) -> Result<SemigroupHandle> {
    make_semigroup(&SemigroupSpec::Rescaled {
        base: Box::new(h.spec.clone()),
        alpha,
        mu,
    })
}

/// Integer shifts within this fraction of a cell are treated as exact.
const SNAP: f64 = 1e-9;

fn translate(grid: &GridSpec, t: f64, x: &Element) -> Element {
    let mut cells = t / grid.step;
    if (cells - cells.round()).abs() <= SNAP * cells.abs().max(1.0) {
        cells = cells.round();
    }
    let whole = cells.floor();
    let frac = cells - whole;
    let k = whole as i64;
    let samples = (0..x.len() as i64)
        .map(|i| {
            if frac == 0.0 {
                x.extended(i + k)
            } else {
                (1.0 - frac) * x.extended(i + k) + frac * x.extended(i + k + 1)
            }
        })
        .collect();
    Element::from_parts_unchecked(*x.kind(), samples)
}

impl Semigroup for SemigroupHandle {
    fn kind(&self) -> LatticeKind {
        self.kind
    }

    fn apply(&self, t: f64, x: &Element) -> Result<Element> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidSchedule(format!("time {t} must be finite and >= 0")));
        }
        x.check_compatible(&Element::zeros(self.kind))?;
        match &self.action {
            Action::Matrix(a) => Element::new(self.kind, expm_apply(a, t, x.samples())),
            Action::Translation(grid) => Ok(translate(grid, t, x)),
            Action::Multiplication(q) => Element::new(
                self.kind,
                q.samples()
                    .iter()
                    .zip(x.samples())
                    .map(|(&qi, &xi)| (qi * t).exp() * xi)
                    .collect(),
            ),
            Action::Rescaled { base, alpha, mu } => Ok(base.apply(alpha * t, x)?.scale((mu * t).exp())),
        }
    }

    fn positivity(&self) -> PositivityClaim {
        self.positivity
    }

    fn generator_matrix(&self) -> Option<DMatrix<f64>> {
        match &self.action {
            Action::Matrix(a) => Some(a.clone()),
            Action::Rescaled { base, alpha, mu } => base.generator_matrix().map(|a| {
                let n = a.nrows();
                a * *alpha + DMatrix::identity(n, n) * *mu
            }),
            _ => None,
        }
    }
}

/// `|T(t+s)x - T(t)T(s)x|` against the regulator `|x| + 1`.
pub fn check_semigroup_law(h: &dyn Semigroup, t: f64, s: f64, x: &Element, tol: f64) -> Result<Residual> {
    let joint = h.apply(t + s, x)?;
    let composed = h.apply(t, &h.apply(s, x)?)?;
    let regulator = x.abs().add(&Element::ones(*x.kind()))?;
    Residual::new(joint.abs_diff(&composed)?, regulator, tol)
}

/// `y_h = (1/h) ∫₀ʰ T(τ)x dτ`, accurate to `tol · (|x| + 1)`.
pub fn average_orbit(h: &dyn Semigroup, x: &Element, hstep: f64, tol: f64) -> Result<Element> {
    if !(hstep > 0.0) {
        return Err(Error::InvalidSchedule(format!("averaging window {hstep} must be positive")));
    }
    let regulator = x.abs().add(&Element::ones(*x.kind()))?.scale(hstep);
    let integral = ru_integral(&orbit(h, x), hstep, tol, &regulator)?;
    Ok(integral.value.scale(1.0 / hstep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{leq, Boundary};
    use crate::ru::{synthesize_regulator, verify_ru_limit, Budget, RuSchedule};

    fn v(xs: &[f64]) -> Element {
        Element::vector(xs)
    }

    fn scalar(a: f64) -> SemigroupHandle {
        make_semigroup(&SemigroupSpec::Matrix { generator: vec![vec![a]] }).unwrap()
    }

    fn sym2() -> SemigroupHandle {
        make_semigroup(&SemigroupSpec::Matrix {
            generator: vec![vec![-2.0, 1.0], vec![1.0, -2.0]],
        })
        .unwrap()
    }

    fn periodic_grid(step: f64) -> LatticeKind {
        LatticeKind::grid(-1.0, 1.0, step, Boundary::Periodic).unwrap()
    }

    #[test]
    fn zero_generator_is_identity() {
        let h = scalar(0.0);
        for t in [0.0, 0.5, 10.0] {
            assert_eq!(h.apply(t, &v(&[2.5])).unwrap(), v(&[2.5]));
        }
    }

    #[test]
    fn scalar_decay() {
        let y = scalar(-1.0).apply(1.0, &v(&[1.0])).unwrap();
        assert!((y.samples()[0] - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn identity_at_time_zero_is_exact() {
        let x = v(&[0.3, -1.7]);
        assert_eq!(sym2().apply(0.0, &x).unwrap(), x);
        let kind = periodic_grid(0.1);
        let f = Element::from_fn(kind, |s| (std::f64::consts::PI * s).sin()).unwrap();
        let h = make_semigroup(&SemigroupSpec::Translation { kind }).unwrap();
        assert_eq!(h.apply(0.0, &f).unwrap(), f);
    }

    #[test]
    fn multiplication_order_exponent() {
        let kind = LatticeKind::grid(-5.0, 5.0, 0.01, Boundary::Constant).unwrap();
        let q = Element::from_fn(kind, f64::sin).unwrap();
        let h = make_semigroup(&SemigroupSpec::Multiplication { q: q.clone() }).unwrap();
        let f = Element::from_fn(kind, |s| (s / 3.0).cos()).unwrap();
        let norm_q = q.sup_norm();
        assert!(norm_q <= 1.0);
        for t in [0.0, 0.5, 2.0, 7.0] {
            let y = h.apply(t, &f).unwrap();
            let bound = f.abs().scale((t * norm_q).exp());
            assert!(leq(&y.abs(), &bound, 0.0).unwrap().nonnegative);
        }
    }

    #[test]
    fn not_metzler_rejected_only_when_demanded() {
        let spec = SemigroupSpec::Matrix {
            generator: vec![vec![0.0, 1.0], vec![-1.0, 0.0]],
        };
        assert_eq!(make_semigroup(&spec).unwrap().positivity(), PositivityClaim::Unchecked);
        assert_eq!(
            make_positive_semigroup(&spec).unwrap_err(),
            Error::NotMetzler { row: 1, col: 0, value: -1.0 }
        );
        assert_eq!(make_positive_semigroup(&SemigroupSpec::heat(5, 0.1, 1.0, false)).unwrap().positivity(), PositivityClaim::Proven);
    }

    #[test]
    fn invalid_specs() {
        assert!(make_semigroup(&SemigroupSpec::Matrix { generator: vec![] }).is_err());
        assert!(make_semigroup(&SemigroupSpec::Matrix { generator: vec![vec![1.0, 2.0]] }).is_err());
        assert!(make_semigroup(&SemigroupSpec::Translation { kind: LatticeKind::Vector(3) }).is_err());
        let bad = SemigroupSpec::Rescaled {
            base: Box::new(SemigroupSpec::Matrix { generator: vec![vec![0.0]] }),
            alpha: 0.0,
            mu: 1.0,
        };
        assert!(make_semigroup(&bad).is_err());
        assert!(scalar(1.0).apply(-1.0, &v(&[1.0])).is_err());
        assert!(scalar(1.0).apply(1.0, &v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn semigroup_law_examples() {
        let x = v(&[1.0, 0.0]);
        assert!(check_semigroup_law(&sym2(), 0.0, 0.0, &x, 1e-15).unwrap().residual.is_zero());

        let kind = LatticeKind::grid(0.0, 2.0, 0.1, Boundary::Periodic).unwrap();
        let f = Element::from_fn(kind, |s| (std::f64::consts::PI * s).sin() + 2.0).unwrap();
        let h = make_semigroup(&SemigroupSpec::Translation { kind }).unwrap();
        assert!(check_semigroup_law(&h, 0.3, 0.7, &f, 1e-15).unwrap().residual.is_zero());

        let r = check_semigroup_law(&sym2(), 0.5, 0.5, &x, 1e-10).unwrap();
        assert!(r.passed());
        // exp(A) = exp(A/2)^2 by diagonalising in the basis (1,1), (1,-1).
        let y = sym2().apply(1.0, &x).unwrap();
        let (e1, e3) = ((-1.0f64).exp(), (-3.0f64).exp());
        assert!((y.samples()[0] - 0.5 * (e1 + e3)).abs() < 1e-14);
        assert!((y.samples()[1] - 0.5 * (e1 - e3)).abs() < 1e-14);
    }

    #[test]
    fn fractional_translation_interpolates() {
        let kind = LatticeKind::grid(0.0, 4.0, 1.0, Boundary::Zero).unwrap();
        let f = Element::new(kind, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let h = make_semigroup(&SemigroupSpec::Translation { kind }).unwrap();
        assert_eq!(h.apply(0.5, &f).unwrap().samples(), &[0.5, 1.5, 2.5, 3.5, 2.0]);
        assert_eq!(h.apply(2.0, &f).unwrap().samples(), &[2.0, 3.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn average_orbit_examples() {
        let y = average_orbit(&scalar(-1.0), &v(&[1.0]), 0.01, 1e-9).unwrap();
        let exact = (1.0 - (-0.01f64).exp()) / 0.01;
        assert!((y.samples()[0] - exact).abs() < 1e-8);
        assert!((exact - 0.995017).abs() < 1e-6);

        assert!(average_orbit(&sym2(), &v(&[0.0, 0.0]), 0.1, 1e-9).unwrap().is_zero());

        let x = v(&[1.0, 0.0]);
        let errs: Vec<f64> = [0.1, 0.01, 0.001]
            .iter()
            .map(|&h| average_orbit(&sym2(), &x, h, 1e-10).unwrap().sub(&x).unwrap().sup_norm())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2]);
        // |y_h - x| <= (h/2)|Ax| + O(h²); |Ax| = (2, 1).
        assert!(errs[2] <= 0.001 * 1.01);
    }

    #[test]
    fn rescaling_examples() {
        let base = scalar(-1.0);
        let same = rescale(&base, 1.0, 0.0).unwrap();
        assert_eq!(same.apply(0.7, &v(&[1.0])).unwrap(), base.apply(0.7, &v(&[1.0])).unwrap());

        let r = rescale(&base, 2.0, 3.0).unwrap();
        assert_eq!(r.generator_matrix().unwrap()[(0, 0)], 1.0);
        let y = r.apply(1.0, &v(&[1.0])).unwrap().samples()[0];
        assert!((y - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn orbit_continuity_at_origin() {
        let x = v(&[1.0, 0.5]);
        let h = sym2();
        let sched = RuSchedule::new(vec![1.0, 0.1, 0.01, 0.001], 30).unwrap();
        let seq = |n: usize| h.apply(0.5f64.powi(n as i32), &x).unwrap();
        let u = synthesize_regulator(seq, &x, &sched, &Budget::Log2).unwrap();
        assert!(verify_ru_limit(seq, &x, &u, &sched).unwrap().is_certified());
    }

    #[test]
    fn heat_semigroup_is_positive_and_decays() {
        let h = make_positive_semigroup(&SemigroupSpec::heat(20, 0.05, 1.0, false)).unwrap();
        let x = Element::basis(20, 10);
        let y = h.apply(0.01, &x).unwrap();
        assert!(y.is_positive());
        assert!(y.samples().iter().sum::<f64>() < 1.0);
        let periodic = make_positive_semigroup(&SemigroupSpec::heat(20, 0.05, 1.0, true)).unwrap();
        let mass: f64 = periodic.apply(0.01, &x).unwrap().samples().iter().sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spec_json_roundtrip() {
        let text = r#"{"rescaled":{"base":{"matrix":{"generator":[[-1]]}},"alpha":2,"mu":3}}"#;
        let spec: SemigroupSpec = serde_json::from_str(text).unwrap();
        let h = make_semigroup(&spec).unwrap();
        assert_eq!(h.generator_matrix().unwrap()[(0, 0)], 1.0);
        let again: SemigroupSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again, spec);
    }
}
