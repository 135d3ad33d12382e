//! Command-line front end for the `sparseprop` training engine.
//!
//! ```text
//! sparseprop [--out-dir DIR] [--quiet] [--seed-override N] [--check] train   <config.toml>
//! sparseprop ...                                                     compare <config.toml>
//! sparseprop ...                                                     sweep   <config.toml>
//! ```
//!
//! Exit codes: 0 ok, 1 internal failure, 2 config error, 3 IO or data error,
//! 4 `--check` threshold failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::Options;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "sparseprop",
    version,
    about = "Train and compare sparse-backprop MLPs"
)]
pub struct Cli {
    /// Directory for result files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Suppress progress and tables on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Replace every run's training seed.
    #[arg(long, global = true)]
    pub seed_override: Option<u64>,
    /// Enforce the config's `[check]` thresholds; exit 4 on failure.
    #[arg(long, global = true)]
    pub check: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one run.
    Train { config: PathBuf },
    /// Train several runs and report effort against a full baseline.
    Compare { config: PathBuf },
    /// Cross sparsity values and seeds.
    Sweep { config: PathBuf },
}

impl Cli {
    pub fn options(&self) -> Options {
        Options {
            out_dir: self.out_dir.clone(),
            quiet: self.quiet,
            seed_override: self.seed_override,
            check: self.check,
        }
    }

    pub fn run(&self) -> CliResult<()> {
        let opts = self.options();
        match &self.command {
            Command::Train { config } => commands::cmd_train(config, &opts),
            Command::Compare { config } => commands::cmd_compare(config, &opts).map(drop),
            Command::Sweep { config } => commands::cmd_sweep(config, &opts).map(drop),
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match cli.run() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
