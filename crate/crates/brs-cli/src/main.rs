//! Command-line front end: `brs solve | validate | export`, each driven by a
//! single TOML run configuration. Exit codes partition outcomes:
//! 0 success, 1 configuration/user error, 2 solver non-optimal,
//! 3 validation failure.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use brs_core::config::load_config;
use brs_core::pipeline::{run_export, run_solve, run_validate};

/// Prints a status line, ignoring write failures (e.g. a closed pipe when
/// output is piped into `head`): reporting must never abort a finished run.
macro_rules! say {
    ($($arg:tt)*) => {
        let _ = writeln!(std::io::stdout(), $($arg)*);
    };
}

#[derive(Parser)]
#[command(
    name = "brs",
    about = "Confidence-set outer approximations of backwards reachable sets \
             for polynomial dynamics with distributed parameters",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the relaxation, solve it, and write certificate, confidence
    /// field, and alpha-set artifacts
    Solve(CommonArgs),
    /// Check solve artifacts against Monte Carlo ground truth
    Validate(CommonArgs),
    /// Write only the solver-exchange file (problem.dat-s), without solving
    Export(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the relaxation degree (positive even integer)
    #[arg(long)]
    degree: Option<u32>,
    /// Replace the configured alpha list with a single level in (0, 1]
    #[arg(long)]
    alpha: Option<f64>,
}

fn main() -> ExitCode {
    // Usage errors are user errors: report them on exit code 1 like any
    // other configuration problem (clap's default would be 2, which this
    // tool reserves for solver outcomes).
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Keep clap's rendered help/version on stdout with success code.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            let _ = write!(std::io::stdout(), "{e}");
            return ExitCode::SUCCESS;
        }
    };
    ExitCode::from(dispatch(cli.command) as u8)
}

fn dispatch(command: Command) -> i32 {
    let (args, verb): (&CommonArgs, &str) = match &command {
        Command::Solve(a) => (a, "solve"),
        Command::Validate(a) => (a, "validate"),
        Command::Export(a) => (a, "export"),
    };
    let mut plan = match load_config(&args.config) {
        Ok(plan) => plan,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Err(e) = plan.apply_overrides(args.degree, args.alpha, args.out.clone()) {
        eprintln!("error: {e}");
        return 1;
    }

    let outcome = match verb {
        "solve" => run_solve(&plan).map(|s| {
            say!("status: {}", s.status);
            say!("objective (scaled domain): {}", s.objective_scaled);
            say!("objective (original coordinates): {}", s.objective_original);
            say!("relative gap: {}", s.gap);
            say!("iterations: {}", s.iterations);
            for f in &s.files {
                say!("wrote {}", f.display());
            }
        }),
        "validate" => run_validate(&plan).map(|s| {
            for rep in &s.reports {
                say!(
                    "alpha {}: violations {}, estimated area {}, empirical area {}, excess {}",
                    rep.alpha,
                    rep.violations.len(),
                    rep.estimated_area,
                    rep.empirical_area,
                    rep.excess_area
                );
            }
            say!("liouville max residual: {}", s.max_liouville_residual);
            say!("exited-domain fraction max: {}", s.max_exited_fraction);
            for f in &s.files {
                say!("wrote {}", f.display());
            }
            say!("containment: PASS");
        }),
        _ => run_export(&plan).map(|path| {
            say!("wrote {}", path.display());
        }),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
