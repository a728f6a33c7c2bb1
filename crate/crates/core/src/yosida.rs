//! Yosida approximants and the construction of a semigroup from its
//! generator.
//!
//! `A_n = n² R(n, A) - n I` is bounded, so `T_n(t) = exp(t A_n)` is computed
//! with the matrix exponential. `T(t)x` is the ru-limit of `T_n(t)x` along a
//! geometric schedule of `n`; since `T_n(t)x - T(t)x = O(1/n)`, the limit is
//! read off with one Richardson step on the last two iterates.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::calculus::{ru_integral, DerivativeOptions, OrbitMap};
use crate::error::{Error, Result};
use crate::expm::expm_apply;
use crate::generator::{
    closedness_probe, density_probe, eob_estimate, generator_at, generator_quotient, regulator_for,
    resolvent_direct, resolvent_laplace, resolvent_power_bound_check, ClosednessProbe, DensityProbe, EobCertificate,
    GeneratorSpec, PowerBoundReport, ResolventSource,
};
use crate::lattice::{leq, Element, LatticeKind, Residual};
use crate::ru::{synthesize_cauchy_regulator, verify_ru_cauchy, Budget, RuCertificate, RuSchedule};
use crate::semigroup::{check_semigroup_law, is_metzler, PositivityClaim, Semigroup};

fn matrix_of(gen: &GeneratorSpec) -> Result<&DMatrix<f64>> {
    gen.as_matrix()
        .ok_or_else(|| Error::Unsupported("Yosida approximants need a matrix generator".into()))
}

#[derive(Debug, Clone)]
pub struct YosidaApproximant {
    pub n: usize,
    pub a_n: DMatrix<f64>,
    pub source: GeneratorSpec,
}

/// Agreement required between `n² R(n,A) - nI` and `n A R(n,A)`.
const FORM_AGREEMENT: f64 = 1e-12;

/// `A_n = n² R(n,A) - nI`, cross-checked against `n A R(n,A)`.
pub fn yosida_generator(gen: &GeneratorSpec, n: usize) -> Result<YosidaApproximant> {
    let a = matrix_of(gen)?;
    let nf = n as f64;
    let r = resolvent_direct(a, nf)?;
    if !r.is_positive() {
        return Err(Error::NotPositiveResolvent { n: nf });
    }
    let dim = a.nrows();
    let first = &r.matrix * (nf * nf) - DMatrix::identity(dim, dim) * nf;
    let second = a * &r.matrix * nf;
    let gap = (&first - &second).abs().max();
    let scale = 1.0 + first.abs().max();
    if gap > FORM_AGREEMENT * scale {
        return Err(Error::RoundTripFailed {
            stage: "yosida forms".into(),
            detail: format!("n = {n}: forms differ by {gap:e}"),
        });
    }
    Ok(YosidaApproximant {
        n,
        a_n: first,
        source: gen.clone(),
    })
}

impl Semigroup for YosidaApproximant {
    fn kind(&self) -> LatticeKind {
        LatticeKind::Vector(self.a_n.nrows())
    }

    fn apply(&self, t: f64, x: &Element) -> Result<Element> {
        if !(t >= 0.0) {
            return Err(Error::InvalidSchedule(format!("t = {t} must be >= 0")));
        }
        x.check_compatible(&Element::zeros(self.kind()))?;
        Element::new(*x.kind(), expm_apply(&self.a_n, t, x.samples()))
    }

    fn positivity(&self) -> PositivityClaim {
        // n² R(n,A) >= 0 makes A_n Metzler.
        if is_metzler(&self.a_n) {
            PositivityClaim::Proven
        } else {
            PositivityClaim::Unchecked
        }
    }

    fn generator_matrix(&self) -> Option<DMatrix<f64>> {
        Some(self.a_n.clone())
    }
}

/// `2, 4, ..., n_max`.
pub fn geometric_schedule(n_max: usize) -> Vec<usize> {
    std::iter::successors(Some(2usize), |n| n.checked_mul(2))
        .take_while(|&n| n <= n_max)
        .collect()
}

pub const DEFAULT_N_MAX: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionTrace {
    pub t: f64,
    pub n_schedule: Vec<usize>,
    /// `T_n(t)x` for each `n` in the schedule.
    pub values: Vec<Element>,
    pub cauchy_certificate: RuCertificate,
    pub final_iterate: Element,
    /// `2 T_{n_max}(t)x - T_{n_max/2}(t)x`.
    pub limit: Element,
    /// Unit norms of consecutive differences `|T_{n_{i+1}}(t)x - T_{n_i}(t)x|`.
    pub residual_profile: Vec<f64>,
    /// Unit norm of the change in the extrapolated limit over the last step.
    pub limit_change: f64,
}

impl ConstructionTrace {
    /// Writes `n,t,value_0..,residual_unit_norm` rows; the first residual is 0.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.final_iterate.len();
        let mut header = vec!["n".to_string(), "t".to_string()];
        header.extend((0..dim).map(|i| format!("value_{i}")));
        header.push("residual_unit_norm".into());
        w.write_record(&header)?;
        for (i, (n, value)) in self.n_schedule.iter().zip(&self.values).enumerate() {
            let mut row = vec![n.to_string(), self.t.to_string()];
            row.extend(value.samples().iter().map(|v| v.to_string()));
            let residual = if i == 0 { 0.0 } else { self.residual_profile[i - 1] };
            row.push(residual.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn validate_schedule(n_schedule: &[usize]) -> Result<()> {
    if n_schedule.len() < 3 {
        return Err(Error::InvalidSchedule("construction needs at least three values of n".into()));
    }
    if n_schedule[0] == 0 || n_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSchedule("n schedule must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// `T(t)x` as the ru-limit of `T_n(t)x` along `n_schedule`.
///
/// Fails with [`Error::NotCauchyAtScale`] when the iterates are not
/// certified ru-Cauchy or the extrapolated limit still moves by more than
/// `tol` relative to `1 + |x|` over the last step.
pub fn construct_semigroup(
    gen: &GeneratorSpec,
    t: f64,
    x: &Element,
    n_schedule: &[usize],
    tol: f64,
) -> Result<ConstructionTrace> {
    validate_schedule(n_schedule)?;
    let approximants: Vec<YosidaApproximant> = n_schedule
        .iter()
        .map(|&n| yosida_generator(gen, n))
        .collect::<Result<_>>()?;
    let values: Vec<Element> = approximants
        .par_iter()
        .map(|ya| ya.apply(t, x))
        .collect::<Result<_>>()?;

    let residual_profile: Vec<f64> = values
        .windows(2)
        .map(|w| Ok(w[1].abs_diff(&w[0])?.reference_norm()))
        .collect::<Result<_>>()?;
    let not_cauchy = || Error::NotCauchyAtScale {
        n_max: *n_schedule.last().unwrap(),
        profile: residual_profile.clone(),
    };

    let max_index = values.len() - 1;
    let schedule = RuSchedule::dyadic(4, max_index)?;
    let budget = Budget::Fixed((0..4).map(|k| k.min(max_index / 2)).collect());
    let seq = |i: usize| values[i].clone();
    let u = synthesize_cauchy_regulator(seq, &schedule, &budget).map_err(|_| not_cauchy())?;
    let cauchy_certificate = verify_ru_cauchy(seq, &u, &schedule)?;
    if !cauchy_certificate.is_certified() {
        return Err(not_cauchy());
    }

    let extrapolate = |i: usize| values[i].scale(2.0).sub(&values[i - 1]);
    let limit = extrapolate(max_index)?;
    let previous = extrapolate(max_index - 1)?;
    let limit_change = leq_ratio(&limit.abs_diff(&previous)?, &regulator_for(x));
    if limit_change > tol {
        return Err(not_cauchy());
    }

    Ok(ConstructionTrace {
        t,
        n_schedule: n_schedule.to_vec(),
        final_iterate: values[max_index].clone(),
        values,
        cauchy_certificate,
        limit,
        residual_profile,
        limit_change,
    })
}

/// `max_i a_i / b_i` for positive `b`.
fn leq_ratio(a: &Element, b: &Element) -> f64 {
    a.samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| x / y)
        .fold(0.0, f64::max)
}

/// The semigroup built from a matrix generator by Yosida approximation,
/// optionally shifted: `T(t) = e^{shift·t} S(t)` where `S` is constructed
/// from `A - shift·I`.
#[derive(Debug, Clone)]
pub struct ConstructedSemigroup {
    generator: DMatrix<f64>,
    shifted: GeneratorSpec,
    shift: f64,
    n_schedule: Vec<usize>,
    tol: f64,
}

impl ConstructedSemigroup {
    pub fn new(a: &DMatrix<f64>, shift: f64, n_schedule: Vec<usize>, tol: f64) -> Result<Self> {
        validate_schedule(&n_schedule)?;
        let dim = a.nrows();
        Ok(ConstructedSemigroup {
            generator: a.clone(),
            shifted: GeneratorSpec::Matrix(a - DMatrix::identity(dim, dim) * shift),
            shift,
            n_schedule,
            tol,
        })
    }

    pub fn trace(&self, t: f64, x: &Element) -> Result<ConstructionTrace> {
        construct_semigroup(&self.shifted, t, x, &self.n_schedule, self.tol)
    }
}

impl Semigroup for ConstructedSemigroup {
    fn kind(&self) -> LatticeKind {
        LatticeKind::Vector(self.generator.nrows())
    }

    fn apply(&self, t: f64, x: &Element) -> Result<Element> {
        Ok(self.trace(t, x)?.limit.scale((self.shift * t).exp()))
    }

    fn generator_matrix(&self) -> Option<DMatrix<f64>> {
        Some(self.generator.clone())
    }
}

fn generator_of(h: &dyn Semigroup, x: &Element) -> Result<Element> {
    match h.generator_matrix() {
        Some(a) => GeneratorSpec::Matrix(a).apply(x),
        None => generator_at(h, x),
    }
}

/// Commutation is accepted below this multiple of `1 + |y|`.
const COMMUTATION_TOL: f64 = 1e-10;

/// `|(S(t)x - T(t)x) - ∫₀ᵗ T(t-τ) S(τ) (B - A) x dτ|` for commuting `T`
/// (generator `A`) and `S` (generator `B`).
pub fn product_rule_residual(
    t_semigroup: &dyn Semigroup,
    s_semigroup: &dyn Semigroup,
    x: &Element,
    t: f64,
    tol: f64,
) -> Result<Residual> {
    let ones = Element::ones(*x.kind());
    for y in [x, &ones] {
        for (a, b) in [(0.3 * t, 0.7 * t), (t, 0.5 * t), (t, t)] {
            let ts = t_semigroup.apply(a, &s_semigroup.apply(b, y)?)?;
            let st = s_semigroup.apply(b, &t_semigroup.apply(a, y)?)?;
            let residual = leq_ratio(&ts.abs_diff(&st)?, &regulator_for(y));
            if residual > COMMUTATION_TOL {
                return Err(Error::NonCommuting { residual });
            }
        }
    }

    let difference = generator_of(s_semigroup, x)?.sub(&generator_of(t_semigroup, x)?)?;
    let integrand = OrbitMap::new("T(t-τ)S(τ)(B-A)x", *x.kind(), |tau| {
        let inner = s_semigroup.apply(tau, &difference).expect("orbit evaluation");
        t_semigroup.apply((t - tau).max(0.0), &inner).expect("orbit evaluation")
    });
    let reg = regulator_for(x);
    let integral = ru_integral(&integrand, t, tol / 4.0, &reg)?.value;
    let lhs = s_semigroup.apply(t, x)?.sub(&t_semigroup.apply(t, x)?)?;
    Residual::new(lhs.abs_diff(&integral)?, reg, tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyForwardReport {
    pub eob: Vec<EobCertificate>,
    /// `|(λ - A) R(λ)x - x|` per probe, with `R(λ)x` from Laplace quadrature.
    pub resolvent_identity: Vec<Residual>,
    pub power_bounds: Vec<PowerBoundReport>,
    pub density: Vec<DensityProbe>,
    pub closedness: Vec<ClosednessProbe>,
}

impl HyForwardReport {
    pub fn passed(&self) -> bool {
        self.eob.iter().all(EobCertificate::is_certified)
            && self.resolvent_identity.iter().all(Residual::passed)
            && self.power_bounds.iter().all(|p| p.stable)
            && self.density.iter().all(|d| d.all_in_domain && d.convergence.is_certified())
            && self.closedness.iter().all(ClosednessProbe::passed)
    }

    pub fn max_residual_unit_norm(&self) -> f64 {
        self.resolvent_identity
            .iter()
            .map(Residual::unit_norm)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    pub horizon: f64,
    pub n_samples: usize,
    pub tol: f64,
    pub density_n_max: usize,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            horizon: 10.0,
            n_samples: 64,
            tol: 1e-6,
            density_n_max: 64,
        }
    }
}

/// Semigroup ⟹ resolvent conditions: order bounds, Laplace resolvents,
/// power bounds, and the density and closedness probes.
pub fn hy_forward_check(
    h: &dyn Semigroup,
    xs: &[Element],
    w: f64,
    lambdas: &[f64],
    k_max: usize,
    opts: &ForwardOptions,
) -> Result<HyForwardReport> {
    let lambda = *lambdas
        .first()
        .ok_or_else(|| Error::InvalidSchedule("need at least one lambda".into()))?;
    let mut report = HyForwardReport {
        eob: Vec::new(),
        resolvent_identity: Vec::new(),
        power_bounds: Vec::new(),
        density: Vec::new(),
        closedness: Vec::new(),
    };
    let matrix = h.generator_matrix();
    for x in xs {
        let eob = eob_estimate(h, x, w, opts.horizon, opts.n_samples)?;
        let r = resolvent_laplace(h, lambda, x, &eob, opts.tol / 10.0)?.value;
        let back = r.scale(lambda).sub(&generator_of(h, &r)?)?;
        report
            .resolvent_identity
            .push(Residual::new(back.abs_diff(x)?, regulator_for(x), opts.tol)?);
        report.eob.push(eob);

        let source = match &matrix {
            Some(a) => ResolventSource::Matrix(a),
            None => ResolventSource::Laplace {
                semigroup: h,
                tol: opts.tol / 10.0,
                horizon: opts.horizon,
                n_samples: opts.n_samples,
            },
        };
        report
            .power_bounds
            .push(resolvent_power_bound_check(source, x, w, lambdas, k_max)?);
        report
            .density
            .push(density_probe(h, x, opts.density_n_max, opts.tol / 100.0)?);
        if matrix.is_some() {
            report.closedness.push(closedness_probe(h, x, opts.tol)?);
        }
    }
    Ok(report)
}

/// Largest `a_ii + Σ_{j≠i} |a_ij|`; bounds the growth of `exp(tA)` in the
/// row-sum norm.
pub fn log_norm_inf(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| {
            let off: f64 = (0..a.ncols()).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
            a[(i, i)] + off
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundtripRow {
    pub t: f64,
    pub probe: usize,
    pub constructed: Element,
    /// Unit norm of the gap to `exp(tA)x` by scaling and squaring.
    pub oracle_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyRoundtripReport {
    /// Exponent removed before construction; zero when `A` is already
    /// dissipative in the row-sum norm.
    pub shift: f64,
    pub power_bounds: Vec<PowerBoundReport>,
    pub rows: Vec<RoundtripRow>,
    /// Unit norm of `|recovered Ax - Ax|` per probe.
    pub generator_gaps: Vec<f64>,
    pub law_residual: f64,
    pub positive: bool,
}

impl HyRoundtripReport {
    pub fn max_residual_unit_norm(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.oracle_gap)
            .chain(self.generator_gaps.iter().copied())
            .chain([self.law_residual])
            .fold(0.0, f64::max)
    }

    /// Writes `t,probe,value_0..,oracle_gap` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.rows.first().map_or(0, |r| r.constructed.len());
        let mut header = vec!["t".to_string(), "probe".to_string()];
        header.extend((0..dim).map(|i| format!("value_{i}")));
        header.push("oracle_gap".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![r.t.to_string(), r.probe.to_string()];
            row.extend(r.constructed.samples().iter().map(|v| v.to_string()));
            row.push(r.oracle_gap.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn stage_failure(stage: &str, detail: String) -> Error {
    Error::RoundTripFailed {
        stage: stage.into(),
        detail,
    }
}

pub const ROUNDTRIP_LAMBDAS: [f64; 3] = [1.0, 2.0, 10.0];
pub const ROUNDTRIP_K_MAX: usize = 20;

/// Resolvent conditions ⟹ semigroup: checks the power bound at `w = 0`,
/// constructs `T(t)x` by Yosida approximation, and recovers the generator
/// from the constructed orbits.
///
/// With no probes given the standard basis is used.
pub fn hy_roundtrip(a: &DMatrix<f64>, ts: &[f64], xs: &[Element], n_max: usize, tol: f64) -> Result<HyRoundtripReport> {
    if !is_metzler(a) {
        return Err(stage_failure("metzler", "generator has a negative off-diagonal entry".into()));
    }
    let dim = a.nrows();
    let kind = LatticeKind::Vector(dim);
    let probes: Vec<Element> = if xs.is_empty() {
        (0..dim).map(|i| Element::basis(dim, i)).collect()
    } else {
        xs.to_vec()
    };

    let shift = log_norm_inf(a).max(0.0);
    let shifted = a - DMatrix::identity(dim, dim) * shift;
    let mut power_bounds = Vec::with_capacity(probes.len());
    for x in &probes {
        let report = resolvent_power_bound_check(
            ResolventSource::Matrix(&shifted),
            x,
            0.0,
            &ROUNDTRIP_LAMBDAS,
            ROUNDTRIP_K_MAX,
        )?;
        if !report.stable {
            return Err(stage_failure("power bound", format!("resolvent powers grow for probe {x:?}")));
        }
        power_bounds.push(report);
    }

    let constructed = ConstructedSemigroup::new(a, shift, geometric_schedule(n_max), tol)?;
    let mut rows = Vec::new();
    let mut positive = true;
    for &t in ts {
        for (probe, x) in probes.iter().enumerate() {
            let trace = constructed.trace(t, x)?;
            let value = trace.limit.scale((shift * t).exp());
            let oracle = Element::new(kind, expm_apply(a, t, x.samples()))?;
            let oracle_gap = value.abs_diff(&oracle)?.reference_norm();
            if oracle_gap > tol {
                return Err(stage_failure("construction", format!("t = {t}, probe {probe}: gap {oracle_gap:e}")));
            }
            if x.is_positive() && !trace.final_iterate.is_positive() {
                positive = false;
            }
            rows.push(RoundtripRow {
                t,
                probe,
                constructed: value,
                oracle_gap,
            });
        }
    }
    if !positive {
        return Err(stage_failure("positivity", "a positive probe left the positive cone".into()));
    }

    let opts = DerivativeOptions::dyadic(4, 12, vec![1.0, 0.1, 0.01]);
    let gen = GeneratorSpec::Matrix(a.clone());
    let mut generator_gaps = Vec::with_capacity(probes.len());
    for (probe, x) in probes.iter().enumerate() {
        let (recovered, _) = generator_quotient(&constructed, x, &opts, &regulator_for(x))
            .map_err(|e| stage_failure("generator", format!("probe {probe}: {e}")))?;
        let gap = recovered.abs_diff(&gen.apply(x)?)?.reference_norm();
        if gap > tol {
            return Err(stage_failure("generator", format!("probe {probe}: gap {gap:e}")));
        }
        generator_gaps.push(gap);
    }

    let mut law_residual: f64 = 0.0;
    if let [t, s, ..] = ts {
        for x in &probes {
            let r = check_semigroup_law(&constructed, *t, *s, x, tol)?;
            if !r.passed() {
                return Err(stage_failure("semigroup law", format!("residual {:e}", r.unit_norm())));
            }
            law_residual = law_residual.max(r.unit_norm());
        }
    }

    Ok(HyRoundtripReport {
        shift,
        power_bounds,
        rows,
        generator_gaps,
        law_residual,
        positive,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    /// `(t, probe, unit norm of |h1 x - h2 x|)`.
    pub rows: Vec<(f64, usize, f64)>,
    pub max_norm: f64,
}

impl UniquenessReport {
    /// Writes `t,probe,norm` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "probe", "norm"])?;
        for (t, probe, norm) in &self.rows {
            w.write_record([t.to_string(), probe.to_string(), norm.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Two semigroups with the same generator agree on every probe.
///
/// The shared generator is checked first; a disagreement there is reported
/// as a mismatch at `t = 0`.
pub fn uniqueness_check(
    h1: &dyn Semigroup,
    h2: &dyn Semigroup,
    ts: &[f64],
    xs: &[Element],
    tol: f64,
) -> Result<UniquenessReport> {
    if h1.kind() != h2.kind() {
        return Err(Error::IncompatibleKinds {
            left: h1.kind(),
            right: h2.kind(),
        });
    }
    for (probe, x) in xs.iter().enumerate() {
        let gap = generator_of(h1, x)?.abs_diff(&generator_of(h2, x)?)?;
        let norm = leq_ratio(&gap, &regulator_for(x));
        if norm > tol.max(1e-9) {
            return Err(Error::Mismatch { t: 0.0, probe, norm });
        }
    }
    let mut rows = Vec::with_capacity(ts.len() * xs.len());
    for &t in ts {
        for (probe, x) in xs.iter().enumerate() {
            let norm = h1.apply(t, x)?.abs_diff(&h2.apply(t, x)?)?.reference_norm();
            if norm > tol {
                return Err(Error::Mismatch { t, probe, norm });
            }
            rows.push((t, probe, norm));
        }
    }
    let max_norm = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    Ok(UniquenessReport { rows, max_norm })
}

/// `|T_n(t)x| <= u` for every approximant in `ns` and every `t` in `ts`.
pub fn yosida_uniform_bound(gen: &GeneratorSpec, x: &Element, u: &Element, ns: &[usize], ts: &[f64]) -> Result<bool> {
    for &n in ns {
        let ya = yosida_generator(gen, n)?;
        for &t in ts {
            if !leq(&ya.apply(t, x)?.abs(), u, 1e-12 * (1.0 + u.sup_norm()))?.nonnegative {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ru::{synthesize_regulator, verify_ru_limit};
    use crate::semigroup::{make_semigroup, rescale, SemigroupSpec};

    fn v(xs: &[f64]) -> Element {
        Element::vector(xs)
    }

    fn gen(n: usize, entries: &[f64]) -> GeneratorSpec {
        GeneratorSpec::Matrix(DMatrix::from_row_slice(n, n, entries))
    }

    fn sym2() -> GeneratorSpec {
        gen(2, &[-2.0, 1.0, 1.0, -2.0])
    }

    #[test]
    fn approximant_examples() {
        let ya = yosida_generator(&gen(1, &[-1.0]), 10).unwrap();
        assert!((ya.a_n[(0, 0)] + 10.0 / 11.0).abs() < 1e-15);

        for n in [1, 7, 256] {
            assert_eq!(yosida_generator(&gen(1, &[0.0]), n).unwrap().a_n[(0, 0)], 0.0);
        }

        let ya = yosida_generator(&sym2(), 5).unwrap();
        let eig = ya.a_n.clone().symmetric_eigen();
        let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        assert!((values[0] + 1.875).abs() < 1e-12);
        assert!((values[1] + 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn approximant_rejects_non_positive_resolvent() {
        let rotation = gen(2, &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(yosida_generator(&rotation, 1).unwrap_err(), Error::NotPositiveResolvent { n: 1.0 });
        assert_eq!(yosida_generator(&gen(1, &[3.0]), 3).unwrap_err(), Error::Singular { lambda: 3.0 });
    }

    #[test]
    fn approximating_semigroup_examples() {
        let ya = yosida_generator(&gen(1, &[-1.0]), 10).unwrap();
        assert_eq!(ya.apply(0.0, &v(&[1.0])).unwrap(), v(&[1.0]));
        let y = ya.apply(1.0, &v(&[1.0])).unwrap();
        assert!((y.samples()[0] - (-10.0f64 / 11.0).exp()).abs() < 1e-14);
        assert!((y.samples()[0] - 0.402890).abs() < 1e-6);

        let ya = yosida_generator(&sym2(), 16).unwrap();
        assert_eq!(ya.positivity(), PositivityClaim::Proven);
        assert!(ya.apply(2.0, &v(&[1.0, 0.0])).unwrap().is_positive());
    }

    #[test]
    fn scalar_construction_rate() {
        let trace = construct_semigroup(&gen(1, &[-1.0]), 1.0, &v(&[1.0]), &geometric_schedule(256), 1e-3).unwrap();
        assert!(trace.cauchy_certificate.is_certified());
        let exact = (-1.0f64).exp();
        assert!((trace.limit.samples()[0] - exact).abs() < 1e-4);
        for (n, value) in trace.n_schedule.iter().zip(&trace.values) {
            let nf = *n as f64;
            assert!((value.samples()[0] - (-nf / (nf + 1.0)).exp()).abs() < 1e-14);
        }
        let err = |n: f64| (-n / (n + 1.0)).exp() - exact;
        assert!((err(10.0) - 0.035011).abs() < 1e-6);
        assert!((err(100.0) - 0.003661).abs() < 1e-6);
    }

    #[test]
    fn construction_of_zero_generator_is_identity() {
        let x = v(&[2.5]);
        let trace = construct_semigroup(&gen(1, &[0.0]), 3.0, &x, &geometric_schedule(256), 1e-9).unwrap();
        assert!(trace.values.iter().all(|y| *y == x));
        assert_eq!(trace.limit, x);
    }

    #[test]
    fn matrix_construction_matches_exponential() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
        let trace = construct_semigroup(&sym2(), 1.0, &v(&[1.0, 0.0]), &geometric_schedule(256), 1e-3).unwrap();
        let oracle = v(&expm_apply(&a, 1.0, &[1.0, 0.0]));
        assert!(trace.final_iterate.abs_diff(&oracle).unwrap().reference_norm() < 2e-3);
        assert!(trace.limit.abs_diff(&oracle).unwrap().reference_norm() < 1e-4);

        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("n,t,value_0,value_1,residual_unit_norm\n2,1,"));
        assert_eq!(text.lines().count(), 9);
    }

    #[test]
    fn construction_rejects_short_schedules() {
        assert!(construct_semigroup(&sym2(), 1.0, &v(&[1.0, 0.0]), &[2, 4], 1e-3).is_err());
        assert!(construct_semigroup(&sym2(), 1.0, &v(&[1.0, 0.0]), &[2, 8, 4], 1e-3).is_err());
    }

    #[test]
    fn construction_reports_profile_when_limit_is_loose() {
        let err = construct_semigroup(&gen(1, &[-1.0]), 1.0, &v(&[1.0]), &[2, 4, 8], 1e-9).unwrap_err();
        match err {
            Error::NotCauchyAtScale { n_max, profile } => {
                assert_eq!(n_max, 8);
                assert_eq!(profile.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn product_rule_scalar() {
        let t = make_semigroup(&SemigroupSpec::Matrix { generator: vec![vec![-1.0]] }).unwrap();
        let s = make_semigroup(&SemigroupSpec::Matrix { generator: vec![vec![-2.0]] }).unwrap();
        let r = product_rule_residual(&t, &s, &v(&[1.0]), 1.0, 1e-8).unwrap();
        assert!(r.passed(), "{r:?}");
        let lhs = (-2.0f64).exp() - (-1.0f64).exp();
        assert!((lhs + 0.232544).abs() < 1e-6);
        assert_eq!(product_rule_residual(&t, &t, &v(&[1.0]), 1.0, 1e-8).unwrap().unit_norm(), 0.0);
    }

    #[test]
    fn product_rule_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
        let b = &a + DMatrix::identity(2, 2) * 0.5;
        let t = make_semigroup(&SemigroupSpec::matrix(&a)).unwrap();
        let s = make_semigroup(&SemigroupSpec::matrix(&b)).unwrap();
        let r = product_rule_residual(&t, &s, &v(&[1.0, -0.5]), 0.5, 1e-6).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn product_rule_rejects_non_commuting_pair() {
        let t = make_semigroup(&SemigroupSpec::Matrix {
            generator: vec![vec![-1.0, 1.0], vec![0.0, 0.0]],
        })
        .unwrap();
        let s = make_semigroup(&SemigroupSpec::Matrix {
            generator: vec![vec![0.0, 0.0], vec![1.0, -1.0]],
        })
        .unwrap();
        assert!(matches!(
            product_rule_residual(&t, &s, &v(&[1.0, 0.0]), 1.0, 1e-6),
            Err(Error::NonCommuting { .. })
        ));
    }

    #[test]
    fn forward_direction_examples() {
        let opts = ForwardOptions::default();
        let h = make_semigroup(&SemigroupSpec::Matrix { generator: vec![vec![-1.0]] }).unwrap();
        let r = hy_forward_check(&h, &[v(&[1.0])], 0.0, &[1.0, 2.0], 10, &opts).unwrap();
        assert!(r.passed(), "{r:?}");

        let h = make_semigroup(&SemigroupSpec::Matrix {
            generator: vec![vec![-2.0, 1.0], vec![1.0, -2.0]],
        })
        .unwrap();
        let x = v(&[1.0, 1.0]);
        let r = hy_forward_check(&h, std::slice::from_ref(&x), -1.0, &[1.0, 2.0, 10.0], 20, &opts).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.power_bounds[0].u.abs_diff(&x).unwrap().reference_norm() < 1e-12);

        let identity = make_semigroup(&SemigroupSpec::Matrix {
            generator: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        })
        .unwrap();
        let x = v(&[1.0, -3.0]);
        let r = hy_forward_check(&identity, std::slice::from_ref(&x), 0.0, &[0.5, 4.0], 8, &opts).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.power_bounds[0].u, x.abs());
    }

    #[test]
    fn roundtrip_examples() {
        let ts = [0.1, 1.0];
        let zero = hy_roundtrip(&DMatrix::zeros(1, 1), &ts, &[], 256, 1e-3).unwrap();
        assert_eq!(zero.generator_gaps, vec![0.0]);

        let scalar = hy_roundtrip(&DMatrix::from_element(1, 1, -1.0), &ts, &[], 256, 1e-3).unwrap();
        assert!(scalar.max_residual_unit_norm() <= 1e-3, "{scalar:?}");

        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
        let r = hy_roundtrip(&a, &ts, &[], 256, 1e-3).unwrap();
        assert_eq!(r.shift, 0.0);
        assert_eq!(r.generator_gaps.len(), 2);
        assert!(r.max_residual_unit_norm() <= 1e-3, "{r:?}");
    }

    #[test]
    fn roundtrip_shifts_growing_generators() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.25, -0.5]);
        let r = hy_roundtrip(&a, &[0.1, 1.0], &[], 256, 1e-3).unwrap();
        assert!((r.shift - 1.5).abs() < 1e-15);
    }

    #[test]
    fn roundtrip_rejects_non_metzler() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(matches!(
            hy_roundtrip(&a, &[1.0], &[], 256, 1e-3),
            Err(Error::RoundTripFailed { stage, .. }) if stage == "metzler"
        ));
    }

    #[test]
    fn uniqueness_examples() {
        let h = make_semigroup(&SemigroupSpec::Matrix { generator: vec![vec![-1.0]] }).unwrap();
        let xs = [v(&[1.0]), v(&[-0.5])];
        assert_eq!(uniqueness_check(&h, &h, &[0.5, 1.0], &xs, 1e-12).unwrap().max_norm, 0.0);

        let constructed = ConstructedSemigroup::new(&DMatrix::from_element(1, 1, -1.0), 0.0, geometric_schedule(256), 1e-3).unwrap();
        let r = uniqueness_check(&h, &constructed, &[1.0], &xs, 1e-3).unwrap();
        assert!(r.max_norm <= 1e-3);

        let base = make_semigroup(&SemigroupSpec::Matrix {
            generator: vec![vec![-2.0, 1.0], vec![1.0, -2.0]],
        })
        .unwrap();
        let wrapped = rescale(&base, 2.0, 0.5).unwrap();
        let direct = make_semigroup(&SemigroupSpec::Matrix {
            generator: vec![vec![-3.5, 2.0], vec![2.0, -3.5]],
        })
        .unwrap();
        let xs = [v(&[1.0, 0.0]), v(&[0.3, -0.7])];
        let r = uniqueness_check(&wrapped, &direct, &[0.1, 0.5, 2.0], &xs, 1e-8).unwrap();
        assert!(r.max_norm <= 1e-8);

        let other = make_semigroup(&SemigroupSpec::Matrix { generator: vec![vec![-2.0]] }).unwrap();
        assert!(matches!(
            uniqueness_check(&h, &other, &[1.0], &[v(&[1.0])], 1e-6),
            Err(Error::Mismatch { t, probe: 0, .. }) if t == 0.0
        ));
    }

    #[test]
    fn scaled_resolvent_converges_to_identity() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let x = v(&[1.0]);
        let at = |lambda: f64| resolvent_direct(&a, lambda).unwrap().apply(&x).unwrap().scale(lambda);
        assert!((at(100.0).samples()[0] - 100.0 / 101.0).abs() < 1e-15);
        assert!((at(100.0).samples()[0] - 0.990099).abs() < 1e-6);

        let schedule = RuSchedule::with_max_index(30).unwrap();
        let seq = |m: usize| at(2f64.powi(m as i32));
        let u = synthesize_regulator(seq, &x, &schedule, &Budget::Log2).unwrap();
        let ax = GeneratorSpec::Matrix(a.clone()).apply(&x).unwrap().abs();
        assert!(leq(&u, &ax, 0.0).unwrap().nonnegative);
        assert!(verify_ru_limit(seq, &x, &ax, &schedule).unwrap().is_certified());
    }

    #[test]
    fn approximants_are_uniformly_bounded() {
        let g = sym2();
        let a = g.as_matrix().unwrap();
        let x = v(&[1.0, 0.25]);
        let ns = geometric_schedule(256);
        let lambdas: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let bound = resolvent_power_bound_check(ResolventSource::Matrix(a), &x, 0.0, &lambdas, 40).unwrap();
        let ts: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        // The k = 0 term of the exponential series is x itself.
        let u = bound.u.sup(&x.abs()).unwrap();
        assert!(yosida_uniform_bound(&g, &x, &u, &ns, &ts).unwrap());
    }

    #[test]
    fn approximant_quotients_converge_to_approximant_generator() {
        for g in [gen(1, &[-1.0]), sym2()] {
            let ya = yosida_generator(&g, 8).unwrap();
            let x = Element::ones(ya.kind());
            let target = GeneratorSpec::Matrix(ya.a_n.clone()).apply(&x).unwrap();
            let err = |h: f64| {
                let q = ya.apply(h, &x).unwrap().sub(&x).unwrap().scale(1.0 / h);
                q.abs_diff(&target).unwrap().reference_norm()
            };
            let (coarse, fine) = (err(1e-2), err(5e-3));
            assert!(fine < coarse);
            let order = (coarse / fine).log2();
            assert!((order - 1.0).abs() < 0.1, "order {order}");
        }
    }

    #[test]
    fn construction_does_not_depend_on_probe_sequence() {
        let x = v(&[1.0, 0.0]);
        let tol = 1e-3;
        let limit_along = |direction: Element| {
            let mut limit = None;
            for k in 10..=14 {
                let xk = x.add(&direction.scale(0.5f64.powi(k))).unwrap();
                limit = Some(construct_semigroup(&sym2(), 1.0, &xk, &geometric_schedule(256), tol).unwrap().limit);
            }
            limit.unwrap()
        };
        let first = limit_along(v(&[1.0, 1.0]));
        let second = limit_along(v(&[-1.0, 3.0]));
        assert!(first.abs_diff(&second).unwrap().reference_norm() <= tol);
    }

    #[test]
    fn approximants_commute() {
        let g = sym2();
        let x = v(&[0.3, -1.2]);
        for (n, m, t, s) in [(2, 8, 0.5, 1.0), (16, 256, 1.0, 0.1), (4, 4, 2.0, 3.0)] {
            let tn = yosida_generator(&g, n).unwrap();
            let sm = yosida_generator(&g, m).unwrap();
            let ab = tn.apply(t, &sm.apply(s, &x).unwrap()).unwrap();
            let ba = sm.apply(s, &tn.apply(t, &x).unwrap()).unwrap();
            assert!(ab.abs_diff(&ba).unwrap().reference_norm() <= 1e-10);
        }
    }
}
