use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use contact_hjb::cli::{self, diagnostic, Command};
use contact_hjb::config::RunConfig;
use serde_json::json;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Backward or forward evolution over `run.horizon`.
    Evolve,
    /// Long-time limit and lower half limit.
    Fixpoint,
    /// Conjugate pair, Aubry set and traced calibrated curve.
    Weakkam,
    /// Neighbourhood comparison of two backward solutions.
    Compare,
    /// Dump the discrete Legendre transform.
    Legendre,
    /// Brute-force and closed-form oracle checks.
    OracleCheck,
    /// Existence classification from constant initial data.
    ExistenceScan,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Evolve => Command::Evolve,
            Cmd::Fixpoint => Command::Fixpoint,
            Cmd::Weakkam => Command::Weakkam,
            Cmd::Compare => Command::Compare,
            Cmd::Legendre => Command::Legendre,
            Cmd::OracleCheck => Command::OracleCheck,
            Cmd::ExistenceScan => Command::ExistenceScan,
        }
    }
}

/// Weak KAM toolkit for contact Hamilton-Jacobi equations on periodic domains.
#[derive(Debug, Parser)]
#[command(name = "contact-hjb", version)]
struct Args {
    command: Cmd,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Ok(n) = std::env::var("CONTACT_HJB_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => diagnostic("ignored_env", json!({ "CONTACT_HJB_THREADS": n })),
        }
    }
    let cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            let e = cli::CliError::from(e);
            diagnostic("error", json!({ "kind": e.kind(), "message": e.to_string() }));
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match cli::run(args.command.into(), &cfg, args.out.as_deref()) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(e.exit_code() as u8),
    }
}
