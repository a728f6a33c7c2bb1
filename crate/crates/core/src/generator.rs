//! Generators, resolvents and exponential order bounds.
//!
//! The generator is computed as the ru-limit of forward difference quotients
//! of the orbit at zero. Resolvents come either from a direct solve of
//! `(λ - A) y = x` or from the Laplace transform of the orbit, truncated at
//! a horizon chosen from an exponential order bound.

use std::fmt;
use std::io;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::calculus::{certified_quotient, ru_integral, DerivativeOptions, OrbitMap};
use crate::error::{Error, Result};
use crate::lattice::{leq, Boundary, Element, LatticeKind, PositivityVerdict, Residual};
use crate::ru::{synthesize_regulator, verify_ru_limit, Budget, RuCertificate, RuSchedule};
use crate::semigroup::{average_orbit, orbit, Semigroup};

type ElementMap = Arc<dyn Fn(&Element) -> Result<Element> + Send + Sync>;
type DomainProbe = Arc<dyn Fn(&Element) -> bool + Send + Sync>;

#[derive(Clone)]
pub enum GeneratorSpec {
    Matrix(DMatrix<f64>),
    Analytic {
        label: String,
        apply: ElementMap,
        domain_probe: DomainProbe,
    },
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorSpec::Matrix(a) => f.debug_tuple("Matrix").field(a).finish(),
            GeneratorSpec::Analytic { label, .. } => f.debug_struct("Analytic").field("label", label).finish(),
        }
    }
}

impl GeneratorSpec {
    pub fn matrix_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Ok(GeneratorSpec::Matrix(crate::semigroup::matrix_from_rows(rows)?))
    }

    /// Forward-difference first derivative on a grid: the generator of the
    /// interpolated left translation for steps below one cell.
    pub fn grid_derivative(kind: LatticeKind) -> Result<Self> {
        let grid = *kind
            .as_grid()
            .ok_or_else(|| Error::SpecInvalid("grid derivative needs a grid kind".into()))?;
        Ok(GeneratorSpec::Analytic {
            label: "d/dx".into(),
            apply: Arc::new(move |x: &Element| {
                x.check_compatible(&Element::zeros(kind))?;
                let samples = (0..x.len() as i64)
                    .map(|i| (x.extended(i + 1) - x.extended(i)) / grid.step)
                    .collect();
                Element::new(kind, samples)
            }),
            domain_probe: Arc::new(move |x: &Element| x.kind() == &kind),
        })
    }

    pub fn apply(&self, x: &Element) -> Result<Element> {
        match self {
            GeneratorSpec::Matrix(a) => {
                x.check_compatible(&Element::zeros(LatticeKind::Vector(a.nrows())))?;
                let y = a * DVector::from_column_slice(x.samples());
                Element::new(*x.kind(), y.iter().copied().collect())
            }
            GeneratorSpec::Analytic { apply, .. } => apply(x),
        }
    }

    pub fn in_domain(&self, x: &Element) -> bool {
        match self {
            GeneratorSpec::Matrix(a) => x.kind() == &LatticeKind::Vector(a.nrows()),
            GeneratorSpec::Analytic { domain_probe, .. } => domain_probe(x),
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            GeneratorSpec::Matrix(a) => Some(a),
            GeneratorSpec::Analytic { .. } => None,
        }
    }
}

/// `1 + |x|`, the regulator used for quantities built from `x`.
pub(crate) fn regulator_for(x: &Element) -> Element {
    x.abs().add(&Element::ones(*x.kind())).expect("same kind")
}

/// `Ax` as the certified limit of `(T(h)x - x)/h` for `h ↘ 0`.
pub fn generator_quotient(
    h: &dyn Semigroup,
    x: &Element,
    opts: &DerivativeOptions,
    regulator: &Element,
) -> Result<(Element, RuCertificate)> {
    let right = |step: f64| Ok(h.apply(step, x)?.sub(x)?.scale(1.0 / step));
    let (value, cert) = certified_quotient(right, None::<fn(f64) -> Result<Element>>, opts, regulator)?;
    match cert.refuted_epsilon() {
        Some(epsilon) => Err(Error::NotInDomain { epsilon }),
        None => Ok((value, cert)),
    }
}

/// [`generator_quotient`] with default steps and regulator `1 + |x|`.
pub fn generator_at(h: &dyn Semigroup, x: &Element) -> Result<Element> {
    generator_quotient(h, x, &DerivativeOptions::default(), &regulator_for(x)).map(|(ax, _)| ax)
}

/// `|A T(s)x - T(s) Ax|`.
pub fn commutation_check(h: &dyn Semigroup, x: &Element, s: f64, tol: f64) -> Result<Residual> {
    let ax = generator_at(h, x)?;
    let a_after = generator_at(h, &h.apply(s, x)?)?;
    let after_a = h.apply(s, &ax)?;
    Residual::new(a_after.abs_diff(&after_a)?, regulator_for(&ax), tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtcIdentities {
    /// `|T(s)x - x - A ∫₀ˢ T(τ)x dτ|`.
    pub generator_of_integral: Residual,
    /// `|T(s)x - x - ∫₀ˢ T(τ)Ax dτ|`.
    pub integral_of_generator: Residual,
}

impl FtcIdentities {
    pub fn passed(&self) -> bool {
        self.generator_of_integral.passed() && self.integral_of_generator.passed()
    }
}

pub fn ftc_identities_check(h: &dyn Semigroup, x: &Element, s: f64, tol: f64) -> Result<FtcIdentities> {
    let reg = regulator_for(x);
    let increment = h.apply(s, x)?.sub(x)?;

    let integral = ru_integral(&orbit(h, x), s, tol / 10.0, &reg)?.value;
    let a_integral = generator_at(h, &integral)?;
    let first = increment.abs_diff(&a_integral)?;

    let ax = generator_at(h, x)?;
    let integral_ax = ru_integral(&orbit(h, &ax), s, tol / 10.0, &reg)?.value;
    let second = increment.abs_diff(&integral_ax)?;

    Ok(FtcIdentities {
        generator_of_integral: Residual::new(first, reg.clone(), tol)?,
        integral_of_generator: Residual::new(second, reg, tol)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EobVerdict {
    Certified,
    /// `|T(t)x| <= e^{wt} u` fails at `time` in `component`; the bound would
    /// need `u[component] >= required_value`.
    Violated {
        time: f64,
        component: usize,
        required_value: f64,
    },
    /// The synthesized `u` kept growing across doubling horizons.
    GrowthAtScale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EobCertificate {
    pub w: f64,
    /// Pointwise maximum of `e^{-wt}|T(t)x|` over the sampled times.
    pub u: Element,
    /// Multiplicative safety margin applied by [`EobCertificate::regulator`].
    pub margin: f64,
    pub horizon: f64,
    pub sample_times: Vec<f64>,
    pub verdict: EobVerdict,
    /// `(horizon, unit norm of u)` for the horizons `H/4, H/2, H`.
    pub growth_profile: Vec<(f64, f64)>,
}

impl EobCertificate {
    pub fn is_certified(&self) -> bool {
        self.verdict == EobVerdict::Certified
    }

    /// `u` widened by the safety margin, for use in downstream bounds.
    pub fn regulator(&self) -> Element {
        self.u.scale(self.margin)
    }

    /// Writes `horizon,u_unit_norm` rows.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["horizon", "u_unit_norm"])?;
        for (h, n) in &self.growth_profile {
            w.write_record([h.to_string(), n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const EOB_MARGIN: f64 = 1.1;

fn eob_times(horizon: f64, n_samples: usize) -> Vec<f64> {
    let n = n_samples.max(1);
    let mut times: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
    times.extend((1..=20).map(|k| horizon * 0.5f64.powi(k)));
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Synthesizes `u` with `|T(t)x| <= e^{wt} u` on sampled `t ∈ [0, horizon]`
/// and reports whether `u` stabilizes across the horizons `H/4, H/2, H`.
pub fn eob_estimate(h: &dyn Semigroup, x: &Element, w: f64, horizon: f64, n_samples: usize) -> Result<EobCertificate> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidSchedule(format!("horizon {horizon} must be positive")));
    }
    let times = eob_times(horizon, n_samples);
    let weighted: Vec<(f64, Element)> = times
        .iter()
        .map(|&t| Ok((t, h.apply(t, x)?.abs().scale((-w * t).exp()))))
        .collect::<Result<_>>()?;

    let envelope = |limit: f64| -> Element {
        weighted
            .iter()
            .filter(|(t, _)| *t <= limit)
            .fold(Element::zeros(*x.kind()), |acc, (_, e)| acc.sup(e).expect("same kind"))
    };
    let growth_profile: Vec<(f64, f64)> = [0.25, 0.5, 1.0]
        .iter()
        .map(|&f| (horizon * f, envelope(horizon * f).reference_norm()))
        .collect();
    let u = envelope(horizon);
    let (half, full) = (growth_profile[1].1, growth_profile[2].1);
    let verdict = if full <= half * (1.0 + 1e-9) + f64::MIN_POSITIVE {
        EobVerdict::Certified
    } else {
        EobVerdict::GrowthAtScale
    };
    Ok(EobCertificate {
        w,
        u,
        margin: EOB_MARGIN,
        horizon,
        sample_times: times,
        verdict,
        growth_profile,
    })
}

/// Checks a given `(w, u)` at the sample times and reports the first
/// violation.
pub fn eob_check(h: &dyn Semigroup, x: &Element, w: f64, u: &Element, times: &[f64]) -> Result<EobVerdict> {
    for &t in times {
        let lhs = h.apply(t, x)?.abs();
        let bound = u.scale((w * t).exp());
        let verdict = leq(&lhs, &bound, 0.0)?;
        if let Some(component) = verdict.first_violation_index {
            return Ok(EobVerdict::Violated {
                time: t,
                component,
                required_value: lhs.samples()[component] * (-w * t).exp(),
            });
        }
    }
    Ok(EobVerdict::Certified)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolventMethod {
    Laplace { t_max: f64, mesh: f64 },
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventReport {
    pub lambda: f64,
    pub value: Element,
    pub method: ResolventMethod,
    pub tail_bound_unit_norm: f64,
}

/// `R(λ)x = ∫₀^∞ e^{-λt} T(t)x dt`, truncated where the tail bound
/// `2 (λ-w)^{-1} e^{-(λ-w)T} ‖u‖` drops below `tol`.
pub fn resolvent_laplace(
    h: &dyn Semigroup,
    lambda: f64,
    x: &Element,
    eob: &EobCertificate,
    tol: f64,
) -> Result<ResolventReport> {
    let w = eob.w;
    if !(lambda > w) {
        return Err(Error::LambdaNotDominating { lambda, w });
    }
    let gap = lambda - w;
    let u_norm = eob.regulator().reference_norm();
    let t_max = if u_norm == 0.0 {
        0.0
    } else {
        ((2.0 * u_norm / (gap * tol)).ln() / gap).max(0.0)
    };
    let tail = 2.0 / gap * (-gap * t_max).exp() * u_norm;

    let integrand = OrbitMap::new("e^{-λt} T(t)x", *x.kind(), |t| {
        h.apply(t, x).expect("orbit evaluation").scale((-lambda * t).exp())
    });
    let result = ru_integral(&integrand, t_max, tol, &Element::ones(*x.kind()))?;
    Ok(ResolventReport {
        lambda,
        value: result.value,
        method: ResolventMethod::Laplace {
            t_max,
            mesh: result.mesh_used,
        },
        tail_bound_unit_norm: tail,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectResolvent {
    pub lambda: f64,
    pub matrix: DMatrix<f64>,
    /// Entrywise nonnegativity, indices in row-major order.
    pub positivity: PositivityVerdict,
}

impl DirectResolvent {
    pub fn is_positive(&self) -> bool {
        self.positivity.nonnegative
    }

    pub fn apply(&self, x: &Element) -> Result<Element> {
        x.check_compatible(&Element::zeros(LatticeKind::Vector(self.matrix.nrows())))?;
        let y = &self.matrix * DVector::from_column_slice(x.samples());
        Element::new(*x.kind(), y.iter().copied().collect())
    }
}

/// `(λ - A)^{-1}` with an entrywise positivity verdict.
pub fn resolvent_direct(a: &DMatrix<f64>, lambda: f64) -> Result<DirectResolvent> {
    let n = a.nrows();
    let shifted = DMatrix::identity(n, n) * lambda - a;
    let inverse = shifted.clone().lu().try_inverse().ok_or(Error::Singular { lambda })?;
    let check = (&shifted * &inverse - DMatrix::<f64>::identity(n, n)).abs().max();
    if !check.is_finite() || check > 1e-8 {
        return Err(Error::Singular { lambda });
    }
    let mut positivity = PositivityVerdict::holds();
    'rows: for i in 0..n {
        for j in 0..n {
            let v = inverse[(i, j)];
            if v < 0.0 {
                positivity = PositivityVerdict {
                    nonnegative: false,
                    first_violation_index: Some(i * n + j),
                    violation_magnitude: Some(-v),
                };
                break 'rows;
            }
        }
    }
    Ok(DirectResolvent {
        lambda,
        matrix: inverse,
        positivity,
    })
}

/// Where resolvent powers come from.
#[derive(Clone, Copy)]
pub enum ResolventSource<'a> {
    /// Repeated direct solves.
    Matrix(&'a DMatrix<f64>),
    /// Repeated Laplace quadrature, each step with a fresh order bound.
    Laplace {
        semigroup: &'a dyn Semigroup,
        tol: f64,
        horizon: f64,
        n_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerBoundRow {
    pub lambda: f64,
    pub k: usize,
    /// Unit norm of `(λ-w)^k |R(λ)^k x|`.
    pub bound_norm: f64,
    pub scaled: Element,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerBoundReport {
    pub w: f64,
    pub rows: Vec<PowerBoundRow>,
    /// Componentwise max of `(λ-w)^k |R(λ)^k x|`.
    pub u: Element,
    /// The running maximum is reached by `k_max / 2`.
    pub stable: bool,
}

impl PowerBoundReport {
    /// Writes `lambda,k,bound_norm,stable` rows.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "k", "bound_norm", "stable"])?;
        for row in &self.rows {
            w.write_record([
                row.lambda.to_string(),
                row.k.to_string(),
                row.bound_norm.to_string(),
                self.stable.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Computes `(λ-w)^k R(λ)^k x` for `k = 1..=k_max` and every `λ`,
/// synthesizes `u` as their componentwise maximum, and flags growth.
pub fn resolvent_power_bound_check(
    source: ResolventSource<'_>,
    x: &Element,
    w: f64,
    lambdas: &[f64],
    k_max: usize,
) -> Result<PowerBoundReport> {
    if k_max == 0 {
        return Err(Error::InvalidSchedule("k_max must be >= 1".into()));
    }
    if let Some(&lambda) = lambdas.iter().find(|&&l| !(l > w)) {
        return Err(Error::LambdaNotDominating { lambda, w });
    }
    let mut rows = Vec::with_capacity(lambdas.len() * k_max);
    for &lambda in lambdas {
        let mut y = x.clone();
        let direct = match source {
            ResolventSource::Matrix(a) => Some(resolvent_direct(a, lambda)?),
            ResolventSource::Laplace { .. } => None,
        };
        for k in 1..=k_max {
            y = match (&direct, source) {
                (Some(r), _) => r.apply(&y)?,
                (
                    None,
                    ResolventSource::Laplace {
                        semigroup,
                        tol,
                        horizon,
                        n_samples,
                    },
                ) => {
                    let eob = eob_estimate(semigroup, &y, w, horizon, n_samples)?;
                    resolvent_laplace(semigroup, lambda, &y, &eob, tol)?.value
                }
                (None, ResolventSource::Matrix(_)) => unreachable!(),
            };
            let scaled = y.abs().scale((lambda - w).powi(k as i32));
            rows.push(PowerBoundRow {
                lambda,
                k,
                bound_norm: scaled.reference_norm(),
                scaled,
            });
        }
    }
    let u = rows
        .iter()
        .fold(Element::zeros(*x.kind()), |acc, r| acc.sup(&r.scaled).expect("same kind"));
    let half = (k_max / 2).max(1);
    let max_all = rows.iter().map(|r| r.bound_norm).fold(0.0, f64::max);
    let max_half = rows
        .iter()
        .filter(|r| r.k <= half)
        .map(|r| r.bound_norm)
        .fold(0.0, f64::max);
    let stable = max_all <= max_half * (1.0 + 1e-9);
    Ok(PowerBoundReport { w, rows, u, stable })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcSample {
    pub t: f64,
    pub position: f64,
    /// Lower bound any admissible regulator must satisfy at `position`.
    pub required: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcVerdict {
    NoCompactlySupportedRegulator,
    NotExcluded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcDiagnostic {
    pub f_at_origin: f64,
    pub w: f64,
    pub horizon: f64,
    pub profile: Vec<CcSample>,
    /// Candidate support radii `R` for which a regulator supported in
    /// `[-R, R]` is ruled out.
    pub refuted_support_bounds: Vec<f64>,
    pub verdict: CcVerdict,
}

impl CcDiagnostic {
    /// Writes `t,position,required` rows.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "position", "required"])?;
        for s in &self.profile {
            w.write_record([s.t.to_string(), s.position.to_string(), s.required.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Lower-bound profile showing the left translation on zero-extended grid
/// functions admits no compactly supported order bound.
///
/// `(T(t)f)(-t) = f(0)` and `T(t)f <= e^{wt} u` force
/// `u(-t) >= e^{-wt} f(0) > 0` on all of `[-horizon, 0]`. A continuous `u`
/// supported in `[-R, R]` vanishes at `-R`, so every `R <= horizon` fails.
pub fn translation_cc_diagnostic(f: &Element, w: f64, horizon: f64, n_samples: usize) -> Result<CcDiagnostic> {
    let grid = f
        .kind()
        .as_grid()
        .ok_or_else(|| Error::SpecInvalid("diagnostic needs a grid element".into()))?;
    if grid.boundary != Boundary::Zero {
        return Err(Error::SpecInvalid("diagnostic needs a zero-extended grid".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidSchedule(format!("horizon {horizon} must be positive")));
    }
    let f0 = f.eval_at(0.0)?;
    if !(f0 > 0.0) {
        return Err(Error::ZeroAtOrigin { value: f0 });
    }
    let required_at = |t: f64| -> Result<f64> { Ok(f0 * (-w * t).exp()) };
    let n = n_samples.max(1);
    let profile = (0..=n)
        .map(|i| {
            let t = horizon * i as f64 / n as f64;
            Ok(CcSample {
                t,
                position: -t,
                required: required_at(t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let candidates: Vec<f64> = (0..=10).map(|k| horizon * 0.5f64.powi(k)).collect();
    let mut refuted = Vec::new();
    for &r in &candidates {
        if required_at(r)? > 0.0 {
            refuted.push(r);
        }
    }
    let verdict = if refuted.len() == candidates.len() && profile.iter().all(|s| s.required > 0.0) {
        CcVerdict::NoCompactlySupportedRegulator
    } else {
        CcVerdict::NotExcluded
    };
    Ok(CcDiagnostic {
        f_at_origin: f0,
        w,
        horizon,
        profile,
        refuted_support_bounds: refuted,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityProbe {
    /// Every average `y_n` passed the generator quotient check.
    pub all_in_domain: bool,
    pub convergence: RuCertificate,
}

/// `y_n = n ∫₀^{1/n} T(τ)x dτ` lies in the domain and `y_n → x`.
pub fn density_probe(h: &dyn Semigroup, x: &Element, n_max: usize, tol: f64) -> Result<DensityProbe> {
    if n_max < 2 {
        return Err(Error::InvalidSchedule("density probe needs n_max >= 2".into()));
    }
    let averages: Vec<Element> = (1..=n_max)
        .map(|n| average_orbit(h, x, 1.0 / n as f64, tol))
        .collect::<Result<_>>()?;
    let all_in_domain = averages.iter().all(|y| generator_at(h, y).is_ok());
    let levels = ((n_max - 1) as f64).log2().floor() as usize + 1;
    let schedule = RuSchedule::dyadic(levels, n_max - 1)?;
    let seq = |i: usize| averages[i].clone();
    let u = synthesize_regulator(seq, x, &schedule, &Budget::Reciprocal)?;
    let convergence = verify_ru_limit(seq, x, &u, &schedule)?;
    Ok(DensityProbe {
        all_in_domain,
        convergence,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosednessProbe {
    pub inputs: RuCertificate,
    pub images: RuCertificate,
    /// `|A x - lim A x_k|`.
    pub limit_residual: Residual,
}

impl ClosednessProbe {
    pub fn passed(&self) -> bool {
        self.inputs.is_certified() && self.images.is_certified() && self.limit_residual.passed()
    }
}

/// `x_k = x + 2^-k · 1 → x` and `A x_k → y`; checks that `x` is accepted
/// with `Ax = y`.
pub fn closedness_probe(h: &dyn Semigroup, x: &Element, tol: f64) -> Result<ClosednessProbe> {
    const K: usize = 20;
    let ones = Element::ones(*x.kind());
    let inputs: Vec<Element> = (0..=K)
        .map(|k| x.add(&ones.scale(0.5f64.powi(k as i32))))
        .collect::<Result<_>>()?;
    let images: Vec<Element> = inputs.iter().map(|xk| generator_at(h, xk)).collect::<Result<_>>()?;
    let y = images[K].clone();

    let schedule = RuSchedule::with_max_index(K)?;
    let seq_in = |k: usize| inputs[k].clone();
    let u_in = synthesize_regulator(seq_in, x, &schedule, &Budget::Log2)?;
    let inputs_cert = verify_ru_limit(seq_in, x, &u_in, &schedule)?;
    let seq_img = |k: usize| images[k].clone();
    let u_img = synthesize_regulator(seq_img, &y, &schedule, &Budget::Log2)?;
    let images_cert = verify_ru_limit(seq_img, &y, &u_img, &schedule)?;

    let ax = generator_at(h, x)?;
    Ok(ClosednessProbe {
        inputs: inputs_cert,
        images: images_cert,
        limit_residual: Residual::new(ax.abs_diff(&y)?, regulator_for(&y), tol)?,
    })
}
