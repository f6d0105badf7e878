//! `deepgp-lab`: experiment driver for deep GP priors and posteriors.
//!
//! Exit codes: 0 success, 1 validation error, 2 numeric or resource error.
//! Every error is reported as one JSON line on stderr.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::commands::Context;
use crate::error::{CliError, CliResult};

const THREADS_ENV: &str = "DEEPGP_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "deepgp-lab", version, about = "Deep GP prior and posterior experiments")]
struct Cli {
    /// JSON experiment config (schema_version 1).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; falls back to the config, then DEEPGP_LAB_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimax rate, prior rate and prior weight of one structure over n.
    Rates,
    /// Conditioned single-layer GP draws.
    Sample,
    /// Structure prior weight table and DGP prior draws.
    Prior,
    /// Posterior sampling on CSV or synthetic data.
    Fit,
    /// Model mass, structure mass and contraction tables from fit outputs.
    Diagnose,
    /// Run the numerical verification suite.
    Verify {
        /// rates, funcspace, gp, inference or all.
        #[arg(long)]
        suite: Option<String>,
    },
}

fn threads(flag: Option<usize>, config: Option<usize>) -> CliResult<usize> {
    let env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| CliError::invalid(format!("{THREADS_ENV}={v:?} is not a thread count"), None))?),
        Err(_) => None,
    };
    let t = flag.or(config).or(env).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if t == 0 {
        return Err(CliError::invalid("threads must be >= 1", None));
    }
    Ok(t)
}

fn run(cli: Cli) -> CliResult<()> {
    let started = output::now_unix();
    let loaded = cli.config.as_deref().map(config::load).transpose()?;
    let cfg = loaded.as_ref().map(|l| &l.config);
    let threads = threads(cli.threads, cfg.and_then(|c| c.threads))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::invalid(format!("thread pool: {e}"), None))?;
    let ctx = Context {
        command: match cli.command {
            Command::Rates => "rates",
            Command::Sample => "sample",
            Command::Prior => "prior",
            Command::Fit => "fit",
            Command::Diagnose => "diagnose",
            Command::Verify { .. } => "verify",
        },
        seed: cli.seed.or(cfg.and_then(|c| c.seed)),
        threads,
        out: cli.out.or(cfg.and_then(|c| c.out.clone())).unwrap_or_else(|| PathBuf::from("out")),
        config: loaded,
        started,
    };
    match &cli.command {
        Command::Rates => commands::rates(&ctx),
        Command::Sample => commands::sample(&ctx),
        Command::Prior => commands::prior(&ctx),
        Command::Fit => commands::fit(&ctx),
        Command::Diagnose => commands::diagnose(&ctx),
        Command::Verify { suite } => commands::verify(&ctx, suite.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", json!({"error": "usage", "message": first, "exit_code": 1}));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
