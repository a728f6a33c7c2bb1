//! Relatively uniform calculus on paths `t ↦ f(t)` in a model lattice.
//!
//! Integrals are Riemann sums over dyadic refinements of `[0, s]`, accepted
//! once two consecutive levels agree to within `tol · regulator`.
//! Derivatives are difference quotients whose ru-Cauchy behaviour is
//! certified before a Richardson-extrapolated value is returned.

use std::fmt;
use std::io;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{combine, Element, LatticeKind, Residual};
use crate::ru::{verify_ru_cauchy, verify_ru_limit, RuCertificate, RuSchedule};

/// A deterministic path `t ↦ f(t)` for `t >= 0`.
pub struct OrbitMap<'a> {
    eval: Box<dyn Fn(f64) -> Element + Send + Sync + 'a>,
    kind: LatticeKind,
    label: String,
}

impl<'a> OrbitMap<'a> {
    pub fn new(
        label: impl Into<String>,
        kind: LatticeKind,
        eval: impl Fn(f64) -> Element + Send + Sync + 'a,
    ) -> Self {
        OrbitMap {
            eval: Box::new(eval),
            kind,
            label: label.into(),
        }
    }

    /// `t ↦ x` for all `t`.
    pub fn constant(x: Element) -> OrbitMap<'static> {
        let kind = *x.kind();
        OrbitMap::new("constant", kind, move |_| x.clone())
    }

    /// `t ↦ g(t) · x` for a scalar function `g`.
    pub fn scalar(label: impl Into<String>, x: Element, g: impl Fn(f64) -> f64 + Send + Sync + 'a) -> Self {
        let kind = *x.kind();
        OrbitMap::new(label, kind, move |t| x.scale(g(t)))
    }

    pub fn eval(&self, t: f64) -> Element {
        let y = (self.eval)(t);
        debug_assert_eq!(y.kind(), &self.kind, "orbit `{}` changed kind", self.label);
        y
    }

    pub fn kind(&self) -> &LatticeKind {
        &self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for OrbitMap<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OrbitMap")
            .field("label", &self.label)
            .field("kind", &self.kind)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagRule {
    Left,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    Uniform(usize),
    Dyadic(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSpec {
    pub endpoint: f64,
    pub mode: PartitionMode,
    pub tag_rule: TagRule,
}

impl PartitionSpec {
    pub fn cells(&self) -> usize {
        match self.mode {
            PartitionMode::Uniform(c) => c,
            PartitionMode::Dyadic(levels) => 1usize << levels,
        }
    }

    pub fn mesh(&self) -> f64 {
        self.endpoint / self.cells() as f64
    }
}

/// Pairwise summation with a fixed split order.
fn pairwise_sum(terms: &[Element]) -> Element {
    match terms.len() {
        0 => unreachable!("partitions have at least one cell"),
        1 => terms[0].clone(),
        n => {
            let (l, r) = terms.split_at(n / 2);
            pairwise_sum(l).add(&pairwise_sum(r)).expect("orbit values share a kind")
        }
    }
}

/// Riemann sum of `f` over the partition.
pub fn riemann_sum(f: &OrbitMap<'_>, partition: &PartitionSpec) -> Result<Element> {
    let cells = partition.cells();
    if cells == 0 {
        return Err(Error::InvalidSchedule("partition needs at least one cell".into()));
    }
    if partition.endpoint == 0.0 {
        return Ok(Element::zeros(f.kind));
    }
    let mesh = partition.mesh();
    let offset = match partition.tag_rule {
        TagRule::Left => 0.0,
        TagRule::Midpoint => 0.5,
    };
    let terms: Vec<Element> = (0..cells)
        .into_par_iter()
        .map(|i| f.eval(mesh * (i as f64 + offset)))
        .collect();
    for t in &terms {
        t.check_compatible(&Element::zeros(f.kind))?;
    }
    Ok(pairwise_sum(&terms).scale(mesh))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralOptions {
    pub tag_rule: TagRule,
    pub max_levels: u32,
}

impl Default for IntegralOptions {
    fn default() -> Self {
        IntegralOptions {
            tag_rule: TagRule::Midpoint,
            max_levels: 22,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementStep {
    pub level: u32,
    pub mesh: f64,
    pub residual_unit_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuIntegralResult {
    pub value: Element,
    pub mesh_used: f64,
    pub level: u32,
    pub refinement_residual: Element,
    pub regulator: Element,
    pub trace: Vec<RefinementStep>,
}

impl RuIntegralResult {
    /// Writes `level,mesh,residual_unit_norm` rows.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["level", "mesh", "residual_unit_norm"])?;
        for step in &self.trace {
            w.write_record([
                step.level.to_string(),
                step.mesh.to_string(),
                step.residual_unit_norm.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `∫₀ˢ f(t) dt` with the default options.
pub fn ru_integral(f: &OrbitMap<'_>, s: f64, tol: f64, regulator: &Element) -> Result<RuIntegralResult> {
    ru_integral_with(f, s, tol, regulator, &IntegralOptions::default())
}

pub fn ru_integral_with(
    f: &OrbitMap<'_>,
    s: f64,
    tol: f64,
    regulator: &Element,
    opts: &IntegralOptions,
) -> Result<RuIntegralResult> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidSchedule(format!("endpoint {s} must be finite and >= 0")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidSchedule(format!("tolerance {tol} must be positive")));
    }
    Element::zeros(f.kind).check_compatible(regulator)?;
    if let Some(index) = regulator.samples().iter().position(|&v| v < 0.0) {
        return Err(Error::NegativeRegulator {
            index,
            value: regulator.samples()[index],
        });
    }
    if s == 0.0 {
        let zero = Element::zeros(f.kind);
        return Ok(RuIntegralResult {
            value: zero.clone(),
            mesh_used: 0.0,
            level: 0,
            refinement_residual: zero,
            regulator: regulator.clone(),
            trace: Vec::new(),
        });
    }

    let bound = regulator.scale(tol);
    let partition = |levels| PartitionSpec {
        endpoint: s,
        mode: PartitionMode::Dyadic(levels),
        tag_rule: opts.tag_rule,
    };
    let mut prev = riemann_sum(f, &partition(0))?;
    let mut trace = Vec::new();
    for level in 1..=opts.max_levels {
        let cur = riemann_sum(f, &partition(level))?;
        let residual = cur.abs_diff(&prev)?;
        trace.push(RefinementStep {
            level,
            mesh: partition(level).mesh(),
            residual_unit_norm: residual.reference_norm(),
        });
        if crate::lattice::leq(&residual, &bound, 0.0)?.nonnegative {
            return Ok(RuIntegralResult {
                value: cur,
                mesh_used: partition(level).mesh(),
                level,
                refinement_residual: residual,
                regulator: regulator.clone(),
                trace,
            });
        }
        prev = cur;
    }
    Err(Error::NoConvergence {
        max_levels: opts.max_levels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeOptions {
    /// Strictly decreasing step sizes.
    pub h_schedule: Vec<f64>,
    /// Epsilons for the ru-Cauchy check on one-sided quotients.
    pub epsilons: Vec<f64>,
}

impl DerivativeOptions {
    /// Steps `2^-first ..= 2^-last`.
    pub fn dyadic(first: i32, last: i32, epsilons: Vec<f64>) -> Self {
        DerivativeOptions {
            h_schedule: (first..=last).map(|k| 2f64.powi(-k)).collect(),
            epsilons,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.h_schedule.len() < 2 {
            return Err(Error::InvalidSchedule("need at least two step sizes".into()));
        }
        if self.h_schedule.iter().any(|&h| !(h > 0.0)) || self.h_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidSchedule("step sizes must be positive and strictly decreasing".into()));
        }
        Ok(())
    }
}

impl Default for DerivativeOptions {
    fn default() -> Self {
        DerivativeOptions::dyadic(4, 16, vec![1.0, 0.1, 0.01])
    }
}

/// Richardson-extrapolated difference quotient, certified ru-Cauchy.
///
/// `right(h)` and `left(h)` are the one-sided quotients. When `left` is
/// `None` only forward quotients are used (the `t = 0` case). The
/// certificate covers the sequence of one-sided quotients ordered by
/// decreasing `h`, interleaving right and left, so a kink where the two
/// sides disagree is refuted.
pub(crate) fn certified_quotient<R, L>(
    right: R,
    left: Option<L>,
    opts: &DerivativeOptions,
    regulator: &Element,
) -> Result<(Element, RuCertificate)>
where
    R: Fn(f64) -> Result<Element> + Sync,
    L: Fn(f64) -> Result<Element> + Sync,
{
    opts.validate()?;
    let hs = &opts.h_schedule;
    let rights: Vec<Element> = hs.par_iter().map(|&h| right(h)).collect::<Result<_>>()?;
    let lefts: Option<Vec<Element>> = match &left {
        Some(l) => Some(hs.par_iter().map(|&h| l(h)).collect::<Result<_>>()?),
        None => None,
    };

    let seq: Vec<Element> = match &lefts {
        Some(ls) => rights.iter().zip(ls).flat_map(|(r, l)| [r.clone(), l.clone()]).collect(),
        None => rights.clone(),
    };
    for q in &seq {
        q.check_compatible(regulator)?;
    }
    let schedule = RuSchedule::new(opts.epsilons.clone(), seq.len() - 1)?;
    let cert = verify_ru_cauchy(|n| seq[n].clone(), regulator, &schedule)?;

    let n = hs.len();
    let (h1, h2) = (hs[n - 2], hs[n - 1]);
    let ratio = h1 / h2;
    let value = match &lefts {
        Some(ls) => {
            // Symmetric quotients: error expansion in h².
            let q1 = combine(0.5, &rights[n - 2], 0.5, &ls[n - 2])?;
            let q2 = combine(0.5, &rights[n - 1], 0.5, &ls[n - 1])?;
            let c = 1.0 / (ratio * ratio - 1.0);
            combine(1.0 + c, &q2, -c, &q1)?
        }
        None => {
            let c = 1.0 / (ratio - 1.0);
            combine(1.0 + c, &rights[n - 1], -c, &rights[n - 2])?
        }
    };
    Ok((value, cert))
}

/// ru-derivative of `f` at `t`: symmetric quotients for `t > 0`, forward
/// quotients at `t = 0`.
pub fn ru_derivative(
    f: &OrbitMap<'_>,
    t: f64,
    opts: &DerivativeOptions,
    regulator: &Element,
) -> Result<(Element, RuCertificate)> {
    if !(t >= 0.0) {
        return Err(Error::InvalidSchedule(format!("t = {t} must be >= 0")));
    }
    let ft = f.eval(t);
    let right = |h: f64| Ok(f.eval(t + h).sub(&ft)?.scale(1.0 / h));
    let two_sided = t > 0.0 && opts.h_schedule[0] <= t;
    let left = two_sided.then_some(|h: f64| Ok(ft.sub(&f.eval(t - h))?.scale(1.0 / h)));
    let (value, cert) = certified_quotient(right, left, opts, regulator)?;
    match cert.refuted_epsilon() {
        Some(epsilon) => Err(Error::NotDifferentiable { epsilon }),
        None => Ok((value, cert)),
    }
}

/// Checks `|f(t + h_n) - f(t)| <= ε u` along the step schedule, i.e. that
/// `f(t + h_n) -> f(t)` relatively uniformly.
pub fn ru_continuity(
    f: &OrbitMap<'_>,
    t: f64,
    h_schedule: &[f64],
    regulator: &Element,
    epsilons: &[f64],
) -> Result<RuCertificate> {
    if h_schedule.len() < 2 {
        return Err(Error::InvalidSchedule("need at least two step sizes".into()));
    }
    let schedule = RuSchedule::new(epsilons.to_vec(), h_schedule.len() - 1)?;
    let ft = f.eval(t);
    verify_ru_limit(|n| f.eval(t + h_schedule[n]), &ft, regulator, &schedule)
}

/// The four integral properties as residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralPropertyReport {
    /// `|∫(af + bg) - (a∫f + b∫g)|`.
    pub linearity: Residual,
    /// `|∫₀ˢ f(x+t) dt - (∫₀^{x+s} f - ∫₀ˣ f)|`.
    pub additivity: Residual,
    /// `(|∫₀ˢ f| - ∫₀ˢ g)⁺`; zero when the domination inequality holds.
    pub domination: Residual,
    /// `|T∫₀ˢ f - ∫₀ˢ Tf|`.
    pub operator_interchange: Residual,
}

impl IntegralPropertyReport {
    pub fn passed(&self) -> bool {
        self.linearity.passed()
            && self.additivity.passed()
            && self.domination.passed()
            && self.operator_interchange.passed()
    }

    pub fn residuals(&self) -> [&Residual; 4] {
        [&self.linearity, &self.additivity, &self.domination, &self.operator_interchange]
    }
}

/// Residuals of the linearity, shift, domination and operator-interchange
/// properties of the integral.
///
/// `op` must be a positive linear operator. The domination residual is
/// only meaningful when `|f| <= g` pointwise.
#[allow(clippy::too_many_arguments)]
pub fn check_integral_properties<T>(
    f: &OrbitMap<'_>,
    g: &OrbitMap<'_>,
    a: f64,
    b: f64,
    shift: f64,
    s: f64,
    op: T,
    tol: f64,
    regulator: &Element,
) -> Result<IntegralPropertyReport>
where
    T: Fn(&Element) -> Result<Element> + Send + Sync,
{
    let quad_tol = tol / 8.0;
    let int = |h: &OrbitMap<'_>, end: f64| ru_integral(h, end, quad_tol, regulator).map(|r| r.value);

    let kind = *f.kind();
    let int_f = int(f, s)?;
    let int_g = int(g, s)?;

    let combo = OrbitMap::new("a f + b g", kind, |t| {
        combine(a, &f.eval(t), b, &g.eval(t)).expect("f and g share a kind")
    });
    let linearity = int(&combo, s)?.abs_diff(&combine(a, &int_f, b, &int_g)?)?;

    let shifted = OrbitMap::new("f(shift + t)", kind, |t| f.eval(shift + t));
    let additivity = int(&shifted, s)?.abs_diff(&int(f, shift + s)?.sub(&int(f, shift)?)?)?;

    let domination = int_f.abs().sub(&int_g)?.positive_part();

    let mapped = OrbitMap::new("T f", kind, |t| op(&f.eval(t)).expect("operator preserves kind"));
    let operator_interchange = op(&int_f)?.abs_diff(&int(&mapped, s)?)?;

    Ok(IntegralPropertyReport {
        linearity: Residual::new(linearity, regulator.clone(), tol)?,
        additivity: Residual::new(additivity, regulator.clone(), tol)?,
        domination: Residual::new(domination, regulator.clone(), tol)?,
        operator_interchange: Residual::new(operator_interchange, regulator.clone(), tol)?,
    })
}

/// `|∫₀ˢ f'(t) dt - (f(s) - f(0))|`.
pub fn newton_leibniz_check(
    f: &OrbitMap<'_>,
    derivative: &OrbitMap<'_>,
    s: f64,
    tol: f64,
    regulator: &Element,
) -> Result<Residual> {
    let integral = ru_integral(derivative, s, tol / 4.0, regulator)?.value;
    let increment = f.eval(s).sub(&f.eval(0.0))?;
    Residual::new(integral.abs_diff(&increment)?, regulator.clone(), tol)
}

/// Derivative of `s ↦ ∫₀ˢ f` at `s`, compared with `f(s)`.
///
/// Increments of the integral are computed through the shift identity
/// `∫₀^{s+h} f - ∫₀ˢ f = ∫₀ʰ f(s+τ) dτ`, so each quotient is a short local
/// integral instead of a difference of two long ones.
pub fn ftc_check(
    f: &OrbitMap<'_>,
    s: f64,
    opts: &DerivativeOptions,
    tol: f64,
    regulator: &Element,
) -> Result<(Residual, RuCertificate)> {
    let kind = *f.kind();
    let local_mean = |start: f64, h: f64| -> Result<Element> {
        let piece = OrbitMap::new("f(start + τ)", kind, |tau| f.eval(start + tau));
        let reg = regulator.scale(h);
        Ok(ru_integral(&piece, h, tol / 16.0, &reg)?.value.scale(1.0 / h))
    };
    let right = |h: f64| local_mean(s, h);
    let two_sided = s > 0.0 && opts.h_schedule[0] <= s;
    let left = two_sided.then_some(|h: f64| local_mean(s - h, h));
    let (value, cert) = certified_quotient(right, left, opts, regulator)?;
    let residual = value.abs_diff(&f.eval(s))?;
    Ok((Residual::new(residual, regulator.clone(), tol)?, cert))
}
