use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use asympt_core::scenario::{Overrides, Scenario, ScenarioKind};
use asympt_core::{Error, Exponent};
use clap::{Parser, Subcommand, ValueEnum};

mod commands;

/// Asymptotic solutions of Z' = rho (D + R) Z by repeated near-diagonalization.
#[derive(Parser, Debug)]
#[command(name = "asympt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    scenario: Option<PathBuf>,

    /// Accuracy target K as `p/q` or an integer.
    #[arg(long = "K", global = true, value_name = "p/q")]
    k: Option<Exponent>,

    /// Abscissa X where bounds and solutions are evaluated.
    #[arg(long = "X", global = true, value_name = "real")]
    x: Option<f64>,

    /// Working precision in significant decimal digits.
    #[arg(long, global = true, value_name = "int")]
    digits: Option<u32>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Write output here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Order lattice sigma_1 < ... < sigma_{L+1}.
    Lattice,
    /// Stage templates S[m+1], the V buckets and the final E template.
    Templates,
    /// Concrete stage matrices D, P, T, V, W.
    Stages,
    /// Certified bound for the final error matrix at X.
    Bound,
    /// Asymptotic solutions at X.
    Solve,
    /// Runs the invariant checks for one scenario.
    Verify,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
    Csv,
}

/// Failures of the front end, each mapped to an exit status.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Rigor(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Rigor(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::RigorFailure(_)
            | Error::IllConditioned { .. }
            | Error::GrowingTerm(_)
            | Error::Quadrature(_)
            | Error::StepUnderflow(_) => Failure::Rigor(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("ASYMPT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Input(format!("ASYMPT_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Input(format!("cannot configure thread pool: {e}")))
}

fn load(cli: &Cli) -> Result<Scenario, Failure> {
    let path = cli.scenario.as_ref().ok_or_else(|| Failure::Input("--scenario is required".into()))?;
    let ov = Overrides { k: cli.k, x: cli.x, digits: cli.digits };
    let s = Scenario::from_path_with(path, &ov)?;
    if s.kind == ScenarioKind::Symbolic && (cli.x.is_some() || cli.digits.is_some()) {
        return Err(Failure::Input("--X and --digits need a concrete scenario; this one is symbolic".into()));
    }
    Ok(s)
}

fn run(cli: &Cli) -> Result<(String, bool), Failure> {
    configure_threads()?;
    let s = load(cli)?;
    let f = cli.format;
    match cli.command {
        Command::Lattice => Ok((commands::lattice(&s, f), true)),
        Command::Templates => commands::templates(&s, f).map(|o| (o, true)),
        Command::Stages => commands::stages(&s, f).map(|o| (o, true)),
        Command::Bound => commands::bound(&s, f).map(|o| (o, true)),
        Command::Solve => commands::solve(&s, f),
        Command::Verify => commands::verify(&s, f),
    }
}

fn emit(cli: &Cli, text: &str) -> Result<(), Failure> {
    match &cli.out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| Failure::Input(e.to_string()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|(text, ok)| emit(&cli, &text).map(|_| ok));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("asympt: verification failed");
            ExitCode::from(3)
        }
        Err(f) => {
            let msg = match &f {
                Failure::Input(m) => format!("invalid input: {m}"),
                Failure::Rigor(m) => format!("rigor failure: {m}"),
            };
            eprintln!("asympt: {msg}");
            ExitCode::from(f.code())
        }
    }
}
