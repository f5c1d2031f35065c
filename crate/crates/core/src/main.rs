use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use contract_forge::cli::{self, Exit, Report, SolveOptions};
use contract_forge::discrete::DEFAULT_BRUTE_FORCE_CAP;
use contract_forge::document::to_canonical_string;

const CAP_VAR: &str = "CONTRACT_FORGE_CAP";

/// Optimal contracts for agents with a private cost per unit of effort.
#[derive(Parser)]
#[command(name = "contract-forge", version)]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// Print the JSON result document instead of a summary.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance against the model's structural assumptions.
    Validate { instance: PathBuf },
    /// Decide implementability of an allocation, or re-verify a result document.
    Check {
        instance: PathBuf,
        /// Allocation (discrete types) or breakpoint rule (continuous types).
        #[arg(required_unless_present = "certificate")]
        allocation: Option<PathBuf>,
        /// Result document whose certificate or contract should be re-verified.
        #[arg(long, conflicts_with = "allocation")]
        certificate: Option<PathBuf>,
    },
    /// Compute an optimal contract.
    Solve {
        instance: PathBuf,
        /// Also search every allocation and compare.
        #[arg(long)]
        oracle: bool,
        /// Require uniform costs and return the virtual-welfare contract.
        #[arg(long)]
        uniform_virtual: bool,
        /// Largest number of allocations the exhaustive search may visit.
        #[arg(long)]
        cap: Option<u64>,
    },
    /// Check incentive compatibility and revenue of a randomised menu.
    VerifyMenu { instance: PathBuf, menu: PathBuf },
}

fn cap_from_env() -> Result<u64, String> {
    match std::env::var(CAP_VAR) {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| format!("{CAP_VAR} must be a nonnegative integer, got {text:?}")),
        Err(_) => Ok(DEFAULT_BRUTE_FORCE_CAP),
    }
}

fn run(command: Command) -> Result<Report, String> {
    Ok(match command {
        Command::Validate { instance } => cli::cmd_validate(&instance),
        Command::Check {
            instance,
            allocation,
            certificate,
        } => match (allocation, certificate) {
            (_, Some(result)) => cli::cmd_check_certificate(&instance, &result),
            (Some(allocation), None) => cli::cmd_check(&instance, &allocation),
            (None, None) => return Err("check needs an allocation or --certificate".into()),
        },
        Command::Solve {
            instance,
            oracle,
            uniform_virtual,
            cap,
        } => {
            let cap = match cap {
                Some(cap) => cap,
                None => cap_from_env()?,
            };
            cli::cmd_solve(
                &instance,
                SolveOptions {
                    oracle,
                    uniform_virtual,
                    cap,
                },
            )
        }
        Command::VerifyMenu { instance, menu } => cli::cmd_verify_menu(&instance, &menu),
    })
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let code = if e.use_stderr() {
                Exit::ParseError.code()
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let started = Instant::now();
    let report = match run(args.command) {
        Ok(report) => report,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(Exit::ParseError.code() as u8);
        }
    };
    if args.json {
        print!("{}", to_canonical_string(&report.document));
    } else {
        print!("{}", report.summary);
        let pivots = report.document["provenance"]["pivots"].as_u64();
        match pivots {
            Some(p) => eprintln!("{p} pivots in {:.1?}", started.elapsed()),
            None => eprintln!("finished in {:.1?}", started.elapsed()),
        }
    }
    ExitCode::from(report.exit.code() as u8)
}
