use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use rulab_core::calculus::ru_integral;
use rulab_core::generator::{
    eob_estimate, generator_quotient, resolvent_direct, resolvent_laplace, resolvent_power_bound_check,
    translation_cc_diagnostic, CcVerdict, EobVerdict, ResolventSource,
};
use rulab_core::lattice::{abs, inf, leq, sup};
use rulab_core::ru::{
    synthesize_cauchy_regulator, synthesize_regulator, verify_ru_cauchy, verify_ru_limit, Budget, RuSchedule,
};
use rulab_core::semigroup::{check_semigroup_law, make_semigroup, orbit};
use rulab_core::yosida::{construct_semigroup, geometric_schedule, hy_roundtrip, uniqueness_check, ConstructedSemigroup};
use rulab_core::{
    Boundary, DerivativeOptions, Element, GeneratorSpec, LatticeKind, Semigroup, SemigroupHandle, SemigroupSpec,
};

use crate::args::{self, Method};

/// Result of one subcommand: verdict, worst residual and the CSV table.
pub struct Outcome {
    pub passed: bool,
    pub max_residual_unit_norm: f64,
    pub csv: Vec<u8>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))
}

fn load_handle(path: &Path) -> anyhow::Result<SemigroupHandle> {
    let spec: SemigroupSpec = read_json(path)?;
    make_semigroup(&spec).with_context(|| format!("invalid semigroup spec {}", path.display()))
}

fn load_probe(path: Option<&Path>, kind: LatticeKind) -> anyhow::Result<Element> {
    match path {
        None => Ok(Element::ones(kind)),
        Some(p) => {
            let x: Element = read_json(p)?;
            if x.kind() != &kind {
                bail!("probe {} has kind {:?}, semigroup acts on {:?}", p.display(), x.kind(), kind);
            }
            Ok(x)
        }
    }
}

fn matrix_generator(h: &SemigroupHandle, path: &Path) -> anyhow::Result<DMatrix<f64>> {
    match h.generator_matrix() {
        Some(a) => Ok(a),
        None => bail!("{} does not describe a matrix generator", path.display()),
    }
}

fn positive(name: &str, value: f64) -> anyhow::Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        bail!("--{name} must be positive, got {value}");
    }
    Ok(())
}

fn table<I, R>(header: &[&str], rows: I) -> anyhow::Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    Ok(w.into_inner()?)
}

fn csv_of(write: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> anyhow::Result<Vec<u8>> {
    let mut out = Vec::new();
    write(&mut out)?;
    Ok(out)
}

pub fn lattice_check(cmd: &args::LatticeCheck, seed: u64) -> anyhow::Result<Outcome> {
    let pairs: Vec<(String, Element, Element)> = match (&cmd.x, &cmd.y) {
        (Some(x), Some(y)) => vec![("given".into(), read_json(x)?, read_json(y)?)],
        _ => {
            if cmd.dim == 0 {
                bail!("--dim must be at least 1");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = LatticeKind::grid(-1.0, 1.0, 0.05, Boundary::Periodic)?;
            let mut out = Vec::with_capacity(2 * cmd.pairs);
            for kind in [LatticeKind::vector(cmd.dim), grid] {
                for i in 0..cmd.pairs {
                    let mut draw = || {
                        let samples = (0..kind.len()).map(|_| rng.gen_range(-10.0..10.0)).collect();
                        Element::new(kind, samples)
                    };
                    let (x, y) = (draw()?, draw()?);
                    let label = if matches!(kind, LatticeKind::Vector(_)) { "vector" } else { "grid" };
                    out.push((format!("{label}#{i}"), x, y));
                }
            }
            out
        }
    };

    let mut rows = Vec::new();
    let mut passed = true;
    let mut worst: f64 = 0.0;
    for (label, x, y) in &pairs {
        let lattice_sum = sup(x, y)?.add(&inf(x, y)?)?.abs_diff(&x.add(y)?)?.sup_norm();
        let modulus = abs(x).abs_diff(&x.positive_part().add(&x.negative_part())?)?.sup_norm();
        let split = x.abs_diff(&x.positive_part().sub(&x.negative_part())?)?.sup_norm();
        let triangle = leq(&abs(&x.add(y)?), &abs(x).add(&abs(y))?, 0.0)?;
        let triangle_gap = triangle.violation_magnitude.unwrap_or(0.0);
        for (identity, residual) in [
            ("sup_plus_inf", lattice_sum),
            ("abs_decomposition", modulus),
            ("positive_minus_negative", split),
            ("triangle", triangle_gap),
        ] {
            passed &= residual == 0.0;
            worst = worst.max(residual);
            rows.push(vec![label.clone(), identity.to_string(), residual.to_string()]);
        }
    }
    Ok(Outcome {
        passed,
        max_residual_unit_norm: worst,
        csv: table(&["pair", "identity", "residual"], rows)?,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceFile {
    terms: Vec<Element>,
    limit: Option<Element>,
    regulator: Option<Element>,
    epsilons: Option<Vec<f64>>,
}

pub fn ru_limit(cmd: &args::RuLimit) -> anyhow::Result<Outcome> {
    let file: SequenceFile = read_json(&cmd.sequence)?;
    if file.terms.len() < 2 {
        bail!("{}: need at least two terms", cmd.sequence.display());
    }
    let max_index = file.terms.len() - 1;
    let schedule = match file.epsilons {
        Some(eps) => RuSchedule::new(eps, max_index)?,
        None => RuSchedule::with_max_index(max_index)?,
    };
    let terms = &file.terms;
    let seq = |n: usize| terms[n].clone();
    let cert = match &file.limit {
        Some(limit) => {
            let u = match &file.regulator {
                Some(u) => u.clone(),
                None => synthesize_regulator(seq, limit, &schedule, &Budget::Reciprocal)?,
            };
            verify_ru_limit(seq, limit, &u, &schedule)?
        }
        None => {
            let u = match &file.regulator {
                Some(u) => u.clone(),
                None => synthesize_cauchy_regulator(seq, &schedule, &Budget::Reciprocal)?,
            };
            verify_ru_cauchy(seq, &u, &schedule)?
        }
    };
    Ok(Outcome {
        passed: cert.is_certified(),
        max_residual_unit_norm: cert.refuted_epsilon().unwrap_or(0.0),
        csv: csv_of(|out| cert.write_csv(out))?,
    })
}

pub fn integral_check(cmd: &args::IntegralCheck) -> anyhow::Result<Outcome> {
    positive("tol", cmd.tol)?;
    let h = load_handle(&cmd.spec)?;
    let x = load_probe(cmd.x.as_deref(), h.kind())?;
    let regulator = abs(&x).add(&Element::ones(h.kind()))?;
    let integral = ru_integral(&orbit(&h, &x), cmd.s, cmd.tol, &regulator)?;
    let identities = rulab_core::generator::ftc_identities_check(&h, &x, cmd.s, cmd.tol)?;
    let worst = identities
        .generator_of_integral
        .unit_norm()
        .max(identities.integral_of_generator.unit_norm());
    Ok(Outcome {
        passed: identities.passed(),
        max_residual_unit_norm: worst,
        csv: csv_of(|out| integral.write_csv(out))?,
    })
}

pub fn semigroup_law(cmd: &args::SemigroupLaw) -> anyhow::Result<Outcome> {
    positive("tol", cmd.tol)?;
    let h = load_handle(&cmd.spec)?;
    let x = load_probe(cmd.x.as_deref(), h.kind())?;
    let mut rows = Vec::new();
    let mut passed = true;
    let mut worst: f64 = 0.0;
    for &t in &cmd.t {
        for &s in &cmd.s {
            let r = check_semigroup_law(&h, t, s, &x, cmd.tol)?;
            passed &= r.passed();
            worst = worst.max(r.unit_norm());
            rows.push(vec![t.to_string(), s.to_string(), r.unit_norm().to_string()]);
        }
    }
    Ok(Outcome {
        passed,
        max_residual_unit_norm: worst,
        csv: table(&["t", "s", "residual_unit_norm"], rows)?,
    })
}

pub fn generator(cmd: &args::Generator) -> anyhow::Result<Outcome> {
    let h = load_handle(&cmd.spec)?;
    let x = load_probe(cmd.x.as_deref(), h.kind())?;
    let regulator = abs(&x).add(&Element::ones(h.kind()))?;
    let (ax, _) = generator_quotient(&h, &x, &DerivativeOptions::default(), &regulator)?;
    let gap = match h.generator_matrix() {
        Some(a) => GeneratorSpec::Matrix(a).apply(&x)?.abs_diff(&ax)?.sup_norm(),
        None => 0.0,
    };
    let rows = ax
        .samples()
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i.to_string(), v.to_string()]);
    Ok(Outcome {
        passed: true,
        max_residual_unit_norm: gap,
        csv: table(&["index", "value"], rows)?,
    })
}

pub fn resolvent(cmd: &args::Resolvent) -> anyhow::Result<Outcome> {
    positive("tol", cmd.tol)?;
    let h = load_handle(&cmd.spec)?;
    let x = load_probe(cmd.x.as_deref(), h.kind())?;
    let (value, power, positive_resolvent) = match cmd.method {
        Method::Direct => {
            let a = matrix_generator(&h, &cmd.spec)?;
            let r = resolvent_direct(&a, cmd.lambda)?;
            let power = resolvent_power_bound_check(ResolventSource::Matrix(&a), &x, cmd.w, &[cmd.lambda], cmd.k_max)?;
            (r.apply(&x)?, power, r.is_positive())
        }
        Method::Laplace => {
            let eob = eob_estimate(&h, &x, cmd.w, cmd.horizon, 64)?;
            let r = resolvent_laplace(&h, cmd.lambda, &x, &eob, cmd.tol)?;
            let source = ResolventSource::Laplace {
                semigroup: &h,
                tol: cmd.tol,
                horizon: cmd.horizon,
                n_samples: 64,
            };
            let power = resolvent_power_bound_check(source, &x, cmd.w, &[cmd.lambda], cmd.k_max)?;
            (r.value, power, true)
        }
    };
    let ax = match h.generator_matrix() {
        Some(a) => GeneratorSpec::Matrix(a).apply(&value)?,
        None => rulab_core::generator::generator_at(&h, &value)?,
    };
    let identity = value.scale(cmd.lambda).sub(&ax)?.abs_diff(&x)?.sup_norm();
    Ok(Outcome {
        passed: power.stable && positive_resolvent,
        max_residual_unit_norm: identity,
        csv: csv_of(|out| power.write_csv(out))?,
    })
}

pub fn eob(cmd: &args::Eob) -> anyhow::Result<Outcome> {
    positive("horizon", cmd.horizon)?;
    let h = load_handle(&cmd.spec)?;
    let x = load_probe(cmd.x.as_deref(), h.kind())?;
    let cert = eob_estimate(&h, &x, cmd.w, cmd.horizon, cmd.samples)?;
    Ok(Outcome {
        passed: cert.verdict == EobVerdict::Certified,
        max_residual_unit_norm: cert.u.sup_norm(),
        csv: csv_of(|out| cert.write_csv(out))?,
    })
}

fn hat() -> anyhow::Result<Element> {
    let kind = LatticeKind::grid(-1.0, 1.0, 0.01, Boundary::Zero)?;
    Ok(Element::from_fn(kind, |x| (1.0 - x.abs()).max(0.0))?)
}

pub fn cc_diagnostic(cmd: &args::CcDiagnostic) -> anyhow::Result<Outcome> {
    positive("horizon", cmd.horizon)?;
    let f = match &cmd.f {
        Some(p) => read_json(p)?,
        None => hat()?,
    };
    let d = translation_cc_diagnostic(&f, cmd.w, cmd.horizon, cmd.samples)?;
    eprintln!(
        "verdict: {:?} ({} candidate support bounds refuted)",
        d.verdict,
        d.refuted_support_bounds.len()
    );
    let lowest = d.profile.iter().map(|s| s.required).fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        passed: d.verdict != CcVerdict::NoCompactlySupportedRegulator,
        max_residual_unit_norm: lowest,
        csv: csv_of(|out| d.write_csv(out))?,
    })
}

pub fn yosida(cmd: &args::Yosida) -> anyhow::Result<Outcome> {
    positive("tol", cmd.tol)?;
    let h = load_handle(&cmd.spec)?;
    let a = matrix_generator(&h, &cmd.spec)?;
    let x = load_probe(cmd.x.as_deref(), h.kind())?;
    let trace = construct_semigroup(&GeneratorSpec::Matrix(a), cmd.t, &x, &geometric_schedule(cmd.n_max), cmd.tol)?;
    Ok(Outcome {
        passed: trace.cauchy_certificate.is_certified(),
        max_residual_unit_norm: trace.limit_change,
        csv: csv_of(|out| trace.write_csv(out))?,
    })
}

pub fn hy_roundtrip_cmd(cmd: &args::HyRoundtrip) -> anyhow::Result<Outcome> {
    positive("tol", cmd.tol)?;
    let h = load_handle(&cmd.spec)?;
    let a = matrix_generator(&h, &cmd.spec)?;
    let report = hy_roundtrip(&a, &cmd.t, &[], cmd.n_max, cmd.tol)?;
    Ok(Outcome {
        passed: true,
        max_residual_unit_norm: report.max_residual_unit_norm(),
        csv: csv_of(|out| report.write_csv(out))?,
    })
}

fn default_probes(kind: LatticeKind) -> Vec<Element> {
    match kind {
        LatticeKind::Vector(n) => (0..n).map(|i| Element::basis(n, i)).collect(),
        LatticeKind::Grid(_) => vec![Element::ones(kind)],
    }
}

pub fn uniqueness(cmd: &args::Uniqueness) -> anyhow::Result<Outcome> {
    positive("tol", cmd.tol)?;
    let h1 = load_handle(&cmd.spec)?;
    let h2: Box<dyn Semigroup> = match &cmd.other {
        Some(p) => Box::new(load_handle(p)?),
        None => {
            let a = matrix_generator(&h1, &cmd.spec)?;
            Box::new(ConstructedSemigroup::new(&a, 0.0, geometric_schedule(cmd.n_max), cmd.tol)?)
        }
    };
    let xs = if cmd.x.is_empty() {
        default_probes(h1.kind())
    } else {
        cmd.x
            .iter()
            .map(|p| load_probe(Some(p), h1.kind()))
            .collect::<anyhow::Result<_>>()?
    };
    let report = uniqueness_check(&h1, h2.as_ref(), &cmd.t, &xs, cmd.tol)?;
    Ok(Outcome {
        passed: true,
        max_residual_unit_norm: report.max_norm,
        csv: csv_of(|out| report.write_csv(out))?,
    })
}
