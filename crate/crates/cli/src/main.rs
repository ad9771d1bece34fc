// SPDX-License-Identifier: Apache-2.0

//! `cgolab`: seeded experiment driver.
//!
//! Exit status: 0 ok, 1 i/o or internal, 2 config, 3 infeasible geometry,
//! 4 divergence, 5 singular mode.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use commands::Subcommand;
use config::{ExperimentConfig, Format, OUT_ENV};
use error::{exit, CliError};

#[derive(Debug, Parser)]
#[command(name = "cgolab", version, about = "Spectral CGO laboratory experiments")]
struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    command: Subcommand,

    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,

    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory; beats both the config file and $CGOLAB_OUT.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,

    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn execute(args: &Args) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    let env_out = std::env::var_os(OUT_ENV).map(PathBuf::from);
    cfg.apply_overrides(args.seed, args.out.clone(), args.threads, args.format, env_out);
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    let prep = commands::prepare(args.command, &cfg)?;

    let start = Instant::now();
    let (table, diagnostics) = commands::run(args.command, &cfg, &prep)?;
    let wall = start.elapsed().as_secs_f64();
    let artifacts = output::render(&cfg, args.command.name(), &table, &diagnostics, wall);
    Ok(artifacts.write(&cfg.output.dir)?)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::from(exit::OK as u8)
        }
        Err(e) => {
            eprintln!("cgolab {}: {} [{}]", args.command.name(), e, e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
