//! `patchtooth`: batch driver for patch-scheme experiments.
//!
//! ```text
//! patchtooth --config run.json [--out DIR] [--task eigen|simulate|homogenize|sweep|check]
//! ```
//!
//! Exit status 0 on success, 1 when the configuration is invalid (every
//! problem is listed on stderr with its field), 2 when a numerical
//! precondition fails at run time.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::config::{RunConfig, Task};

#[derive(Parser, Debug)]
#[command(
    name = "patchtooth",
    version,
    about = "Self-adjoint gap-tooth patch scheme experiments"
)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Task to run; overrides `task`.
    #[arg(long, value_enum)]
    task: Option<Task>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: config: cannot read {}: {e}", args.config.display());
            return ExitCode::from(1);
        }
    };
    let prepared = match RunConfig::parse(&text, args.task) {
        Ok(p) => p,
        Err(diagnostics) => {
            for d in &diagnostics {
                eprintln!("{d}");
            }
            return ExitCode::from(1);
        }
    };
    for w in &prepared.warnings {
        eprintln!("{w}");
    }
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(&prepared.config.output.dir));
    match run::run(&prepared, &out) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(run::exit_code(&e))
        }
    }
}
