//! Library side of the `toboggan` command: configuration, the command
//! pipeline and report rendering. `main.rs` only parses flags.

// `!(x > 0.0)` is used on purpose throughout: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod run;

use std::path::PathBuf;

use clap::Parser;

pub use config::{Command, RunConfig};
pub use report::report_render;
pub use run::RunError;

#[derive(Debug, Parser)]
#[command(name = "toboggan", version, about = "Spectra and metric operators of rectified quantum toboggans")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Command to run; overrides `command` in the config.
    #[arg(long, value_enum)]
    pub command: Option<Command>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted KEY=VALUE override, e.g. `grid.n=800` (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "TOBOGGAN_THREADS";

/// Runs the CLI and returns the process exit code.
pub fn main_with(cli: &Cli) -> i32 {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => {
                toboggan_core::par::init_threads(t);
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return 4;
            }
        }
    }
    let result = config::load(&cli.config, &cli.overrides)
        .and_then(|c| c.resolve(cli.command, cli.out.as_deref()))
        .map_err(RunError::from)
        .and_then(|resolved| run::run(&resolved));
    match result {
        Ok(files) => {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
