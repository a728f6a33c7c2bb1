//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the test
//! fails at the end if any criterion failed.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rulab_core::calculus::{ftc_check, newton_leibniz_check, ru_integral};
use rulab_core::generator::{
    generator_at, resolvent_direct, resolvent_laplace, resolvent_power_bound_check, translation_cc_diagnostic,
    eob_estimate, CcVerdict, ResolventSource,
};
use rulab_core::lattice::{abs, inf, leq, sup};
use rulab_core::ru::{synthesize_regulator, verify_ru_limit, Budget, RuSchedule};
use rulab_core::semigroup::{average_orbit, make_semigroup, rescale};
use rulab_core::yosida::{construct_semigroup, geometric_schedule, hy_roundtrip, product_rule_residual, uniqueness_check, yosida_generator};
use rulab_core::{Boundary, DerivativeOptions, Element, GeneratorSpec, LatticeKind, OrbitMap, Semigroup, SemigroupHandle, SemigroupSpec};

type Verdict = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Verdict);

fn v(xs: &[f64]) -> Element {
    Element::vector(xs)
}

fn matrix(rows: &[&[f64]]) -> SemigroupHandle {
    make_semigroup(&SemigroupSpec::Matrix {
        generator: rows.iter().map(|r| r.to_vec()).collect(),
    })
    .unwrap()
}

fn sym() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0])
}

/// `exp(tA)` for symmetric `A` through its eigendecomposition.
fn symmetric_exp(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (l * t).exp()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn e<T: std::fmt::Debug>(err: T) -> String {
    format!("{err:?}")
}

fn yosida_rate() -> Verdict {
    let start = Instant::now();
    let g = GeneratorSpec::Matrix(DMatrix::from_element(1, 1, -1.0));
    let x = v(&[1.0]);
    let exact = (-1.0f64).exp();
    let err_at = |n: usize| -> Result<f64, String> {
        let y = yosida_generator(&g, n).map_err(e)?.apply(1.0, &x).map_err(e)?;
        Ok(y.samples()[0] - exact)
    };
    let closed = |n: f64| (-n / (n + 1.0)).exp() - exact;
    let (e10, e100) = (err_at(10)?, err_at(100)?);
    let trace = construct_semigroup(&g, 1.0, &x, &geometric_schedule(256), 1e-3).map_err(e)?;
    let elapsed = start.elapsed();
    let ratio = e10 / e100;
    let ok = (e10 - 0.035011).abs() <= 1e-6
        && (e100 - 0.003661).abs() <= 1e-6
        && (e10 - closed(10.0)).abs() <= 1e-6
        && (e100 - closed(100.0)).abs() <= 1e-6
        && (8.0..=12.0).contains(&ratio)
        && trace.cauchy_certificate.is_certified()
        && elapsed < Duration::from_secs(1);
    Ok((ok, format!("err10={e10:.6} err100={e100:.6} ratio={ratio:.3} time={elapsed:?}")))
}

fn resolvent_agreement() -> Verdict {
    let start = Instant::now();
    let a = sym();
    let h = make_semigroup(&SemigroupSpec::matrix(&a)).map_err(e)?;
    let direct = resolvent_direct(&a, 1.0).map_err(e)?;
    let oracle = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 3.0]) / 8.0;
    let matrix_gap = (&direct.matrix - oracle).abs().max();
    let mut gap: f64 = 0.0;
    for i in 0..2 {
        let x = Element::basis(2, i);
        let eob = eob_estimate(&h, &x, 0.0, 20.0, 64).map_err(e)?;
        let laplace = resolvent_laplace(&h, 1.0, &x, &eob, 1e-7).map_err(e)?;
        let d = direct.apply(&x).map_err(e)?;
        gap = gap.max(laplace.value.abs_diff(&d).map_err(e)?.sup_norm());
    }
    let elapsed = start.elapsed();
    let ok = gap <= 1e-6 && matrix_gap <= 1e-12 && direct.is_positive() && elapsed < Duration::from_secs(5);
    Ok((ok, format!("laplace-direct={gap:.2e} direct-oracle={matrix_gap:.2e} time={elapsed:?}")))
}

fn power_bound_eigenvector() -> Verdict {
    let a = sym();
    let x = v(&[1.0, 1.0]);
    let report = resolvent_power_bound_check(ResolventSource::Matrix(&a), &x, -1.0, &[1.0, 2.0, 10.0], 20).map_err(e)?;
    let worst = report
        .rows
        .iter()
        .map(|r| r.scaled.abs_diff(&x).unwrap().sup_norm())
        .fold(0.0, f64::max);
    let ok = worst <= 1e-12 && report.rows.len() == 60 && report.stable;
    Ok((ok, format!("max |(λ+1)^k R^k x - x| = {worst:.2e} over {} rows", report.rows.len())))
}

fn roundtrip() -> Verdict {
    let start = Instant::now();
    let cases = [
        DMatrix::from_element(1, 1, 0.0),
        DMatrix::from_element(1, 1, -1.0),
        sym(),
    ];
    let mut worst_generator: f64 = 0.0;
    let mut worst_semigroup: f64 = 0.0;
    for a in &cases {
        let report = hy_roundtrip(a, &[0.1, 1.0], &[], 256, 1e-3).map_err(e)?;
        worst_generator = report.generator_gaps.iter().copied().fold(worst_generator, f64::max);
        for row in &report.rows {
            let x = Element::basis(a.nrows(), row.probe);
            let oracle = symmetric_exp(a, row.t) * nalgebra::DVector::from_column_slice(x.samples());
            let gap = row
                .constructed
                .samples()
                .iter()
                .zip(oracle.iter())
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            worst_semigroup = worst_semigroup.max(gap);
        }
    }
    let elapsed = start.elapsed();
    let ok = worst_generator <= 1e-3 && worst_semigroup <= 1e-3 && elapsed < Duration::from_secs(30);
    Ok((ok, format!("generator gap={worst_generator:.2e} semigroup gap={worst_semigroup:.2e} time={elapsed:?}")))
}

fn product_rule() -> Verdict {
    let t_h = matrix(&[&[-1.0]]);
    let s_h = matrix(&[&[-2.0]]);
    let x = v(&[1.0]);
    // (B - A)x = -x.
    let integrand = OrbitMap::new("T(1-τ)S(τ)(B-A)x", *x.kind(), |tau| {
        let inner = s_h.apply(tau, &x.scale(-1.0)).unwrap();
        t_h.apply(1.0 - tau, &inner).unwrap()
    });
    let integral = ru_integral(&integrand, 1.0, 1e-9, &v(&[1.0])).map_err(e)?.value.samples()[0];
    let closed = (-2.0f64).exp() - (-1.0f64).exp();
    let residual = product_rule_residual(&t_h, &s_h, &x, 1.0, 1e-8).map_err(e)?;
    let ok = (integral + 0.232544).abs() <= 1e-6 && (integral - closed).abs() <= 1e-6 && residual.passed();
    Ok((ok, format!("integral={integral:.7} S(1)-T(1)={closed:.7} residual={:.2e}", residual.unit_norm())))
}

fn newton_leibniz_ftc() -> Verdict {
    let one = v(&[1.0]);
    let mut worst: f64 = 0.0;
    let cases: [(OrbitMap, OrbitMap, f64); 3] = [
        (OrbitMap::constant(v(&[2.5])), OrbitMap::constant(v(&[0.0])), 1.0),
        (OrbitMap::scalar("e^-t", one.clone(), |t| (-t).exp()), OrbitMap::scalar("-e^-t", one.clone(), |t| -(-t).exp()), 1.0),
        (OrbitMap::scalar("t^2", one.clone(), |t| t * t), OrbitMap::scalar("2t", one.clone(), |t| 2.0 * t), 2.0),
    ];
    for (f, df, s) in &cases {
        let r = newton_leibniz_check(f, df, *s, 1e-8, &one).map_err(e)?;
        worst = worst.max(r.unit_norm());
    }
    let f = OrbitMap::scalar("e^-t", one.clone(), |t| (-t).exp());
    for s in [0.0, 0.1, 0.5, 1.0, 2.0] {
        let (r, cert) = ftc_check(&f, s, &DerivativeOptions::default(), 1e-8, &one).map_err(e)?;
        if !cert.is_certified() {
            return Ok((false, format!("FTC quotients not certified at s={s}")));
        }
        worst = worst.max(r.unit_norm());
    }
    Ok((worst <= 1e-8, format!("max residual={worst:.2e}")))
}

fn translation_generator() -> Verdict {
    let mut errors = Vec::new();
    for step in [0.02, 0.01, 0.005] {
        let kind = LatticeKind::grid(-1.0, 1.0, step, Boundary::Periodic).map_err(e)?;
        let h = make_semigroup(&SemigroupSpec::Translation { kind }).map_err(e)?;
        let x = Element::from_fn(kind, |s| (PI * s).sin()).map_err(e)?;
        let derivative = Element::from_fn(kind, |s| PI * (PI * s).cos()).map_err(e)?;
        let ax = generator_at(&h, &x).map_err(e)?;
        errors.push(ax.abs_diff(&derivative).map_err(e)?.sup_norm());
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let ok = orders.iter().all(|&p| p >= 0.9);
    Ok((ok, format!("errors={errors:?} orders={orders:.3?}")))
}

fn averaging() -> Verdict {
    let h = matrix(&[&[-1.0]]);
    let x = v(&[1.0]);
    let y = average_orbit(&h, &x, 0.01, 1e-10).map_err(e)?.samples()[0];
    let closed = (1.0 - (-0.01f64).exp()) / 0.01;
    let schedule = RuSchedule::with_max_index(30).map_err(e)?;
    let seq = |m: usize| average_orbit(&h, &x, 0.5f64.powi(m as i32), 1e-12).unwrap();
    let u = synthesize_regulator(seq, &x, &schedule, &Budget::Log2).map_err(e)?;
    let cert = verify_ru_limit(seq, &x, &u, &schedule).map_err(e)?;
    let ok = (y - 0.995017).abs() <= 1e-6 && (y - closed).abs() <= 1e-9 && cert.is_certified();
    Ok((ok, format!("y_0.01={y:.7} regulator={:?} certified={}", u.samples(), cert.is_certified())))
}

fn cc_diagnostic() -> Verdict {
    let kind = LatticeKind::grid(-1.0, 1.0, 0.01, Boundary::Zero).map_err(e)?;
    let hat = Element::from_fn(kind, |s| (1.0 - s.abs()).max(0.0)).map_err(e)?;
    let mut ok = true;
    for horizon in [1.0, 10.0, 100.0] {
        let d = translation_cc_diagnostic(&hat, 0.0, horizon, 200).map_err(e)?;
        let covers = d.profile.first().map(|s| s.position) == Some(-0.0)
            && d.profile.last().map(|s| s.position) == Some(-horizon);
        ok &= d.verdict == CcVerdict::NoCompactlySupportedRegulator
            && covers
            && d.profile.iter().all(|s| s.required >= 1.0);
    }
    let dir = tempfile::TempDir::new().map_err(e)?;
    let status = Command::new(env!("CARGO_BIN_EXE_rulab"))
        .current_dir(dir.path())
        .args(["cc-diagnostic", "--w", "0", "--horizon", "10"])
        .output()
        .map_err(e)?
        .status
        .code();
    ok &= status == Some(1) && Path::new(&dir.path().join("cc-diagnostic.csv")).exists();
    Ok((ok, format!("horizons 1,10,100; CLI exit code {status:?}")))
}

fn rescaling() -> Verdict {
    let a = DMatrix::from_element(1, 1, -1.0);
    let base = make_semigroup(&SemigroupSpec::matrix(&a)).map_err(e)?;
    let wrapped = rescale(&base, 2.0, 3.0).map_err(e)?;
    let b = wrapped.generator_matrix().ok_or("rescaled generator missing")?;
    let r5 = resolvent_direct(&b, 5.0).map_err(e)?.matrix[(0, 0)];
    let r1 = resolvent_direct(&a, 1.0).map_err(e)?.matrix[(0, 0)];

    let sym_base = make_semigroup(&SemigroupSpec::matrix(&sym())).map_err(e)?;
    let sym_wrapped = rescale(&sym_base, 2.0, 0.5).map_err(e)?;
    let direct = make_semigroup(&SemigroupSpec::matrix(&(sym() * 2.0 + DMatrix::identity(2, 2) * 0.5))).map_err(e)?;
    let xs = [v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[0.3, -0.7])];
    let report = uniqueness_check(&sym_wrapped, &direct, &[0.1, 0.5, 1.0, 2.0], &xs, 1e-8).map_err(e)?;
    let ok = (r5 - 0.25).abs() <= 1e-12 && (r5 - 0.5 * r1).abs() <= 1e-12 && report.max_norm <= 1e-8;
    Ok((ok, format!("R(5,B)={r5} R(1,A)/2={} uniqueness={:.2e}", 0.5 * r1, report.max_norm)))
}

fn lattice_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(20260101);
    let kinds = [
        LatticeKind::vector(16),
        LatticeKind::grid(-1.0, 1.0, 0.1, Boundary::Zero).map_err(e)?,
        LatticeKind::grid(0.0, 2.0, 0.25, Boundary::Periodic).map_err(e)?,
    ];
    let mut failures = 0usize;
    for kind in kinds {
        for _ in 0..1000 {
            let mut draw = || {
                let samples = (0..kind.len()).map(|_| rng.gen_range(-1e3..1e3)).collect();
                Element::new(kind, samples).unwrap()
            };
            let (x, y) = (draw(), draw());
            let lattice_sum = sup(&x, &y).unwrap().add(&inf(&x, &y).unwrap()).unwrap() == x.add(&y).unwrap();
            let modulus = abs(&x) == x.positive_part().add(&x.negative_part()).unwrap();
            let split = x == x.positive_part().sub(&x.negative_part()).unwrap();
            let triangle = leq(&abs(&x.add(&y).unwrap()), &abs(&x).add(&abs(&y)).unwrap(), 0.0)
                .unwrap()
                .nonnegative;
            if !(lattice_sum && modulus && split && triangle) {
                failures += 1;
            }
        }
    }
    Ok((failures == 0, format!("3000 pairs over 3 kinds, {failures} failures")))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 11] = [
        ("yosida convergence rate", yosida_rate),
        ("resolvent agreement", resolvent_agreement),
        ("power bound on eigenvector", power_bound_eigenvector),
        ("generator round trip", roundtrip),
        ("product rule", product_rule),
        ("newton-leibniz and ftc", newton_leibniz_ftc),
        ("translation generator order", translation_generator),
        ("averaging", averaging),
        ("compact support diagnostic", cc_diagnostic),
        ("rescaling", rescaling),
        ("lattice identities", lattice_identities),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (passed, detail) = match check() {
            Ok(v) => v,
            Err(msg) => (false, format!("error: {msg}")),
        };
        println!("criterion {:>2} {:<28} {} {detail}", i + 1, name, if passed { "PASS" } else { "FAIL" });
        if !passed {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
