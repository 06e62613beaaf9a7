//! Command-line harness for the lattice Yang–Mills replacement toolkit.
//!
//! Every subcommand reads one TOML experiment file, writes its artifacts to
//! the output directory and reports failures as JSON with a typed exit code
//! (see [`error::exit`]).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod seed;
pub mod verify;

use commands::{Command, Context};
use config::ExperimentConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ymr", version, about = "Lattice Yang-Mills Dirichlet solves and ball replacement")]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `generator.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Sub {
    /// Write the configured input field.
    Generate,
    /// Coulomb-fix the input field.
    Gaugefix,
    /// Solve the Dirichlet problem on the region.
    SolveDirichlet,
    /// One replacement step on the region.
    Replace,
    /// Replacement sweep over the ball schedule.
    Sweep,
    /// Replace every member of a family on the same region.
    FamilySweep,
    /// Run the invariant checks.
    Verify,
    /// Linear abelian Dirichlet solve (u1 only).
    Oracle,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Generate => Command::Generate,
            Sub::Gaugefix => Command::Gaugefix,
            Sub::SolveDirichlet => Command::SolveDirichlet,
            Sub::Replace => Command::Replace,
            Sub::Sweep => Command::Sweep,
            Sub::FamilySweep => Command::FamilySweep,
            Sub::Verify => Command::Verify,
            Sub::Oracle => Command::Oracle,
        }
    }
}

/// Runs the command; on error also returns the directory for `error.json`.
fn execute(cli: &Cli) -> Result<i32, (CliError, Option<PathBuf>)> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| (CliError::Config("--config is required".into()), cli.out.clone()))?;
    let cfg = ExperimentConfig::load(path).map_err(|e| (e, cli.out.clone()))?;
    let ctx = Context::new(cfg, cli.seed, cli.out.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| (CliError::Config(format!("--jobs: {e}")), Some(ctx.out.clone())))?;
    pool.install(|| commands::run(cli.command.into(), &ctx)).map_err(|e| (e, Some(ctx.out.clone())))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { error::exit::CONFIG } else { error::exit::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err((e, dir)) => {
            let record = e.record();
            eprintln!("{record}");
            if let Some(dir) = &dir {
                if std::fs::create_dir_all(dir).is_ok() {
                    let _ = report::write_json(&dir.join("error.json"), &record);
                }
            }
            record.exit_code
        }
    }
}
