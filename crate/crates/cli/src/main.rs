use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod bgp;
mod detect;
mod error;
mod output;
mod pathsim;

pub use error::CliError;

/// Experiment runner for the edge availability device and the hijack
/// simulator. All outputs are CSV files.
#[derive(Debug, Parser)]
#[command(name = "dena", version)]
pub struct RunConfig {
    /// RNG seed; required when the CI environment variable is set.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, env = "DENA_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// False-negative and false-positive rates of peer discovery.
    Detect(detect::DetectArgs),
    /// Two-site path-switching simulation.
    Pathsim(pathsim::PathsimArgs),
    /// Hijack and reach experiments on an AS graph.
    Bgp(BgpArgs),
}

#[derive(Debug, Args)]
pub struct BgpArgs {
    #[command(subcommand)]
    pub cmd: bgp::BgpCommand,
}

const DEFAULT_SEED: u64 = 1;

fn in_ci() -> bool {
    std::env::var("CI").is_ok_and(|v| !v.is_empty() && v != "0" && v != "false")
}

impl RunConfig {
    fn resolve_seed(&self) -> Result<u64, CliError> {
        match self.seed {
            Some(s) => Ok(s),
            None if in_ci() => Err(CliError::Usage("--seed is required when CI is set".into())),
            None => Ok(DEFAULT_SEED),
        }
    }
}

fn run(cfg: RunConfig) -> Result<(), CliError> {
    let seed = cfg.resolve_seed()?;
    let out = output::OutDir::create(&cfg.out_dir)?;
    match cfg.cmd {
        Command::Detect(a) => detect::run(&a, seed, &out),
        Command::Pathsim(a) => pathsim::run(&a, seed, &out),
        Command::Bgp(a) => bgp::run(&a.cmd, seed, &out),
    }
}

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    match run(cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
