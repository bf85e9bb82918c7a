use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use perindex::arith::ArithError;
use perindex::certificate::{
    constants_document, forge_document, sha_document, to_json, verify_document, Document, VerifyError,
};
use perindex::config::Bounds;
use perindex::construct::ConstructError;
use perindex::curve::CurveError;
use perindex::fixture::{Fixture, FixtureCurve};
use perindex::localfield::{LocalError, Place};
use perindex::obstruction::ObstructionError;
use perindex::theta::{parse_gamma, verify_all};

const OK: u8 = 0;
const FAILED: u8 = 1;
const USAGE: u8 = 2;
const EXHAUSTED: u8 = 3;

#[derive(Parser)]
#[command(name = "perindex", version, about = "Index-4 Weil-Chatelet classes and Sha[2] growth over quadratic fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exhaustively check the theta-group coboundary formula.
    VerifyTheta {
        #[arg(long, value_parser = clap::value_parser!(u32).range(2..=3))]
        n: u32,
        /// Cyclic orders of the Galois group, e.g. `2` or `2x2`.
        #[arg(long)]
        gamma: String,
    },
    /// Fit the obstruction constants for a fixture curve.
    FitConstants {
        #[command(flatten)]
        run: RunArgs,
        /// Restrict the local probes, e.g. `2,inf`. Defaults to all bad places.
        #[arg(long, value_delimiter = ',')]
        probe: Vec<Place>,
    },
    /// Forge r independent classes whose nonzero combinations all have index 4.
    Forge {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        r: usize,
    },
    /// Find d with dim Sha(E/Q(sqrt d))[2] >= r and certify it.
    GrowSha {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=20))]
        r: u64,
        /// Also check a few places of good reduction.
        #[arg(long)]
        audit: bool,
    },
    /// Re-check a document against the fixture it names.
    VerifyCertificate {
        #[arg(long)]
        fixture: PathBuf,
        document: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    fixture: PathBuf,
    #[arg(long)]
    curve: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = Bounds::default().factor, value_parser = clap::value_parser!(u64).range(1..))]
    bound_factor: u64,
    #[arg(long, default_value_t = Bounds::default().prime_search, value_parser = clap::value_parser!(u64).range(1..))]
    bound_prime_search: u64,
    #[arg(long, default_value_t = Bounds::default().precision_bits, value_parser = clap::value_parser!(u32).range(8..=62))]
    bound_precision_bits: u32,
    #[arg(long, default_value_t = Bounds::default().candidates, value_parser = parse_positive)]
    bound_candidates: usize,
    #[arg(long, default_value_t = Bounds::default().pool)]
    bound_pool: usize,
    /// Write the JSON document here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be positive".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

impl RunArgs {
    fn bounds(&self) -> Bounds {
        Bounds {
            factor: self.bound_factor,
            prime_search: self.bound_prime_search,
            precision_bits: self.bound_precision_bits,
            candidates: self.bound_candidates,
            pool: self.bound_pool,
        }
    }
}

struct Failure {
    code: u8,
    msg: String,
}

fn fail(code: u8, msg: impl ToString) -> Failure {
    Failure { code, msg: msg.to_string() }
}

fn construct_code(e: &ConstructError) -> u8 {
    match e {
        ConstructError::SearchExhausted { .. }
        | ConstructError::PoolExhausted { .. }
        | ConstructError::NoCompatibleD { .. }
        | ConstructError::Oversized(_)
        | ConstructError::Local(LocalError::PrecisionExhausted { .. } | LocalError::UnsupportedPrime(_))
        | ConstructError::Curve(CurveError::Local(LocalError::PrecisionExhausted { .. } | LocalError::UnsupportedPrime(_)))
        | ConstructError::Curve(CurveError::SaturationFailure { .. })
        | ConstructError::Curve(CurveError::Arith(ArithError::FactorizationLimitExceeded { .. }))
        | ConstructError::Arith(ArithError::FactorizationLimitExceeded { .. }) => EXHAUSTED,
        ConstructError::Curve(_) | ConstructError::Obstruction(ObstructionError::Curve(_)) => USAGE,
        _ => FAILED,
    }
}

fn construct_failure(e: ConstructError) -> Failure {
    let code = construct_code(&e);
    let hint = if code == EXHAUSTED { " (raise the matching --bound-* flag)" } else { "" };
    fail(code, format!("{e}{hint}"))
}

fn load_curve(run: &RunArgs) -> Result<(Fixture, FixtureCurve), Failure> {
    let fx = Fixture::load(&run.fixture).map_err(|e| fail(USAGE, e))?;
    let fc = fx.get(&run.curve).map_err(|e| fail(USAGE, e))?.clone();
    Ok((fx, fc))
}

fn emit<T: Document>(doc: &T, out: Option<&Path>) -> Result<(), Failure> {
    let text = to_json(doc);
    match out {
        Some(p) => fs::write(p, text).map_err(|e| fail(USAGE, format!("writing {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::VerifyTheta { n, gamma } => {
            let g = parse_gamma(&gamma).map_err(|e| fail(USAGE, e))?;
            if g.iter().product::<u32>() > 9 {
                return Err(fail(USAGE, "Galois group order must be at most 9"));
            }
            let report = verify_all(n, &g).map_err(|e| fail(USAGE, e))?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            if report.mismatches > 0 {
                return Err(fail(FAILED, format!("{} of {} cases mismatch", report.mismatches, report.cases)));
            }
            eprintln!("all {} cases pass", report.cases);
        }
        Command::FitConstants { run, probe } => {
            let (_, fc) = load_curve(&run)?;
            let full = fc.curve.disc_support();
            if let Some(v) = probe.iter().find(|v| !full.contains(v)) {
                return Err(fail(USAGE, format!("probe {v} is not a bad place of {}", fc.id)));
            }
            let probes = if probe.is_empty() { None } else { Some(probe.as_slice()) };
            let doc = constants_document(&fc, &run.bounds(), run.seed, probes).map_err(construct_failure)?;
            let k = &doc.constants;
            if k.fitted_support.len() < full.len() {
                eprintln!(
                    "warning: probes {:?} omit bad places; {} candidates survive",
                    k.fitted_support.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                    k.surviving_candidates.len()
                );
            }
            let primary = k.primary();
            for s in &k.surviving_candidates {
                let rel = if doc.image.contains(&s.mul(&primary)) { "shift of C by the image" } else { "beyond shift" };
                eprintln!("survivor {s}: {rel}");
            }
            eprintln!("C = {primary}, Delta(e3-e1, e3-e2) = {}", doc.torsion_delta);
            emit(&doc, run.out.as_deref())?;
        }
        Command::Forge { run, r } => {
            let (_, fc) = load_curve(&run)?;
            let doc = forge_document(&fc, r, &run.bounds(), run.seed).map_err(construct_failure)?;
            for (g, c) in doc.generators.iter().zip(&doc.traces) {
                eprintln!("forged {g} (q = {}, places {:?})", c.q, c.places);
            }
            eprintln!("{} span certificates, all index-4", doc.certificates.len());
            emit(&doc, run.out.as_deref())?;
        }
        Command::GrowSha { run, r, audit } => {
            let (_, fc) = load_curve(&run)?;
            let doc = sha_document(&fc, r as usize, &run.bounds(), run.seed, audit).map_err(construct_failure)?;
            let cert = &doc.certificate;
            for c in &cert.classes {
                let sigma: Vec<String> = c.sigma.iter().map(|e| e.place.to_string()).collect();
                eprintln!("class {} obstructed at {{{}}}", c.class, sigma.join(", "));
            }
            eprintln!("d = {}", cert.d);
            emit(&doc, run.out.as_deref())?;
        }
        Command::VerifyCertificate { fixture, document } => {
            let fx = Fixture::load(&fixture).map_err(|e| fail(USAGE, e))?;
            let text = fs::read_to_string(&document).map_err(|e| fail(USAGE, format!("{}: {e}", document.display())))?;
            match verify_document(&text, &fx) {
                Ok(report) => println!("accept: {} document for {} ({} checks)", report.kind, report.curve, report.checks),
                Err(e) => {
                    let code = match &e {
                        e if e.is_usage() => USAGE,
                        VerifyError::Recompute(c) if construct_code(c) == EXHAUSTED => EXHAUSTED,
                        _ => FAILED,
                    };
                    println!("reject: {e}");
                    return Err(fail(code, e));
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(OK),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
