mod args;
mod commands;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;

use args::{Cli, Command};
use commands::Outcome;
use rulab_core::Error;

const EXIT_PASS: u8 = 0;
const EXIT_VIOLATION: u8 = 1;
const EXIT_INPUT: u8 = 2;

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    passed: bool,
    max_residual_unit_norm: f64,
    wall_time_ms: u128,
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::LatticeCheck(_) => "lattice-check",
        Command::RuLimit(_) => "ru-limit",
        Command::IntegralCheck(_) => "integral-check",
        Command::SemigroupLaw(_) => "semigroup-law",
        Command::Generator(_) => "generator",
        Command::Resolvent(_) => "resolvent",
        Command::Eob(_) => "eob",
        Command::CcDiagnostic(_) => "cc-diagnostic",
        Command::Yosida(_) => "yosida",
        Command::HyRoundtrip(_) => "hy-roundtrip",
        Command::Uniqueness(_) => "uniqueness",
    }
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::LatticeCheck(c) => commands::lattice_check(c, cli.seed),
        Command::RuLimit(c) => commands::ru_limit(c),
        Command::IntegralCheck(c) => commands::integral_check(c),
        Command::SemigroupLaw(c) => commands::semigroup_law(c),
        Command::Generator(c) => commands::generator(c),
        Command::Resolvent(c) => commands::resolvent(c),
        Command::Eob(c) => commands::eob(c),
        Command::CcDiagnostic(c) => commands::cc_diagnostic(c),
        Command::Yosida(c) => commands::yosida(c),
        Command::HyRoundtrip(c) => commands::hy_roundtrip_cmd(c),
        Command::Uniqueness(c) => commands::uniqueness(c),
    }
}

/// Errors that report a refuted or violated property rather than bad input.
fn is_violation(err: &anyhow::Error) -> bool {
    matches!(
        err.downcast_ref::<Error>(),
        Some(
            Error::NotInDomain { .. }
                | Error::NotDifferentiable { .. }
                | Error::NoConvergence { .. }
                | Error::SynthesisFailed { .. }
                | Error::NotCauchyAtScale { .. }
                | Error::NonCommuting { .. }
                | Error::RoundTripFailed { .. }
                | Error::Mismatch { .. }
                | Error::NotPositiveResolvent { .. }
        )
    )
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(value) = std::env::var("RULAB_MAX_THREADS") {
        let threads: usize = value
            .parse()
            .map_err(|_| anyhow::anyhow!("RULAB_MAX_THREADS must be a positive integer, got {value:?}"))?;
        if threads == 0 {
            anyhow::bail!("RULAB_MAX_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn error_csv(err: &anyhow::Error) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let detail = format!("{err:#}");
    let written = w.write_record(["error"]).and_then(|_| w.write_record([detail.as_str()]));
    match (written, w.into_inner()) {
        (Ok(()), Ok(bytes)) => bytes,
        _ => b"error\n".to_vec(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let name = command_name(&cli.command);
    let out: PathBuf = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
    let start = Instant::now();

    let result = configure_threads().and_then(|()| run(&cli));
    let (code, passed, residual, csv) = match result {
        Ok(o) => (
            if o.passed { EXIT_PASS } else { EXIT_VIOLATION },
            o.passed,
            o.max_residual_unit_norm,
            o.csv,
        ),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = if is_violation(&e) { EXIT_VIOLATION } else { EXIT_INPUT };
            (code, false, f64::NAN, error_csv(&e))
        }
    };

    let mut code = code;
    if let Err(e) = fs::write(&out, csv) {
        eprintln!("error: cannot write {}: {e}", out.display());
        code = EXIT_INPUT;
    }
    let summary = Summary {
        command: name,
        passed: passed && code == EXIT_PASS,
        max_residual_unit_norm: residual,
        wall_time_ms: start.elapsed().as_millis(),
    };
    match serde_json::to_string(&summary) {
        Ok(line) => println!("{line}"),
        Err(e) => eprintln!("error: cannot encode summary: {e}"),
    }
    ExitCode::from(code)
}
