//! `bidflow` — contract-fulfillment bidding pipeline.
//!
//! Subcommands: `estimate` builds supply curves from auction logs, `plan`
//! solves the convex bid plan, `simulate` runs seeded sliding-window
//! campaigns under a receding-horizon controller, `compare` scores two
//! result directories.
//!
//! Exit codes: 0 success, 2 infeasible (strict), 3 input error, 4 solver
//! non-convergence.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bidflow_core::error::Error;

#[derive(Parser)]
#[command(name = "bidflow", version, about = "Supply-curve bid planning and auction simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-tag supply curves from an auction log CSV.
    Estimate {
        /// Log CSV with columns timestamp, user_tag, market_price.
        #[arg(long)]
        log: PathBuf,
        /// Output directory for curve JSON files.
        #[arg(long)]
        out: PathBuf,
        /// Bid randomization width applied to the planning curves.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// Solve the bid/allocation plan for a configured campaign.
    Plan {
        #[arg(long)]
        config: PathBuf,
        /// Use the whole-horizon averaged (static) baseline.
        #[arg(long, conflicts_with = "dynamic")]
        r#static: bool,
        /// Use the time-aware plan (default).
        #[arg(long)]
        dynamic: bool,
        /// Fail instead of falling back to best-effort on infeasibility.
        #[arg(long)]
        strict: bool,
        /// Output plan path (default: <out_dir>/plan.json).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the sliding-window simulation campaign.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "dynamic")]
        r#static: bool,
        #[arg(long)]
        dynamic: bool,
        /// Run both policies and write a comparison.
        #[arg(long)]
        both: bool,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replan_hours: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Output directory (default from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Simulate a fixed plan JSON open-loop instead of a policy.
        #[arg(long, conflicts_with_all = ["static", "both"])]
        plan: Option<PathBuf>,
    },
    /// Compare two result directories (dynamic vs static).
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Infeasible(_) => 2,
        Error::Solver(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate { log, out, sigma } => commands::estimate(&log, &out, sigma),
        Command::Plan { config, r#static, dynamic: _, strict, out, seed } => {
            commands::plan(&config, r#static, strict, out.as_deref(), seed)
        }
        Command::Simulate { config, r#static, dynamic: _, both, strict, seed, replan_hours, sigma, out, plan } => {
            commands::simulate(&config, commands::SimulateArgs {
                static_policy: r#static,
                both,
                strict,
                seed,
                replan_hours,
                sigma,
                out,
                plan,
            })
        }
        Command::Compare { dir_a, dir_b, out } => commands::compare(&dir_a, &dir_b, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
