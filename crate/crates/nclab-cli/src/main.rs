//! Single-binary experiment runner: subcommand = experiment kind, flags
//! override config fields. Exit codes: 0 all checks pass, 1 check failure,
//! 2 schema violation or unusable input, 3 resource cap exceeded.

use clap::{Args, Parser, Subcommand};
use nclab_cli::config::{config_schema, ConfigFile, ExperimentConfig, ExperimentKind};
use nclab_cli::runners;
use nclab_cli::{CliError, ExitStatus};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "nclab",
    version,
    about = "Reproducible random-matrix and free-probability experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// JSON configuration file; omitted fields take documented defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the base seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Size of the worker thread pool (default: all cores).
    #[arg(long, value_name = "K")]
    threads: Option<usize>,
    /// Print one PASS/FAIL line per acceptance check to stdout.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Monte Carlo moments of a single sampled matrix against exact values.
    Moments(RunFlags),
    /// Exact equality of the first-order corrections from both oracles.
    Nu1Check(RunFlags),
    /// Operator-norm convergence for sums and tensor-leg sums.
    StrongConv(RunFlags),
    /// Finite-size transform against the series limit, with decay fit.
    Resolvent(RunFlags),
    /// Spectrum containment in the fattened limit support.
    Inclusion(RunFlags),
    /// Numeric identity suite at documented tolerances.
    Identities(RunFlags),
    /// Print the JSON schema of the configuration document.
    Schema,
}

fn dispatch(kind: ExperimentKind, flags: RunFlags) -> Result<bool, CliError> {
    if let Some(k) = flags.threads {
        if k == 0 {
            return Err(CliError::Schema("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Schema(format!("thread pool: {e}")))?;
    }
    let file = flags
        .config
        .as_deref()
        .map(ConfigFile::load)
        .transpose()?;
    let cfg = ExperimentConfig::resolve(kind, file, flags.seed, flags.out)?;
    let out = runners::run(&cfg)?;
    if flags.check {
        for c in &out.summary.checks {
            println!("{}", c.line());
        }
    }
    eprintln!(
        "{}: {} checks, {} -> {}",
        cfg.experiment.as_str(),
        out.summary.checks.len(),
        if out.summary.pass { "pass" } else { "FAIL" },
        out.out_dir.display()
    );
    Ok(out.summary.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, flags) = match cli.command {
        Command::Schema => {
            println!(
                "{}",
                serde_json::to_string_pretty(&config_schema()).expect("schema serializes")
            );
            return ExitCode::from(ExitStatus::AllChecksPass as u8);
        }
        Command::Moments(f) => (ExperimentKind::Moments, f),
        Command::Nu1Check(f) => (ExperimentKind::Nu1Check, f),
        Command::StrongConv(f) => (ExperimentKind::StrongConv, f),
        Command::Resolvent(f) => (ExperimentKind::Resolvent, f),
        Command::Inclusion(f) => (ExperimentKind::Inclusion, f),
        Command::Identities(f) => (ExperimentKind::Identities, f),
    };
    match dispatch(kind, flags) {
        Ok(true) => ExitCode::from(ExitStatus::AllChecksPass as u8),
        Ok(false) => ExitCode::from(ExitStatus::CheckFailure as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_status() as u8)
        }
    }
}
