//! `bilateral`: batch pricing, property checks, convergence studies and range-violation search.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Format, ScenarioConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    /// Validation failures of the library, reported as config errors.
    pub fn config(e: bilateral::Error) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn core(e: bilateral::Error) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Output(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "bilateral", version, about = "Bilateral prices and fair-price ranges under asymmetric funding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price both parties; writes price_report.json and price_surface.csv.
    Price(Common),
    /// Evaluate the configured properties; writes verdicts.json.
    Properties(Common),
    /// Time-0 prices over a list of step counts; writes convergence.csv.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Step counts, e.g. `--n 250,500,1000`.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
    },
    /// Search two-flow contracts for an empty fair range; writes violation.json.
    Search(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output.dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `solver.n_steps`.
    #[arg(long)]
    steps: Option<usize>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

pub struct Run {
    pub config: ScenarioConfig,
    pub hash: String,
    pub out: PathBuf,
    pub format: Format,
}

impl Common {
    fn load(&self) -> Result<Run, CliError> {
        let mut config = ScenarioConfig::load(&self.config)?;
        if let Some(n) = self.steps {
            config.solver.n_steps = n;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        let out = self
            .out
            .clone()
            .or_else(|| config.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let format = self.format.unwrap_or(config.output.formats);
        Ok(Run {
            hash: config.hash(),
            config,
            out,
            format,
        })
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Price(c) => commands::price(&c.load()?),
        Command::Properties(c) => commands::properties(&c.load()?),
        Command::Convergence { common, n } => commands::convergence(&common.load()?, &n),
        Command::Search(c) => commands::search(&c.load()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("bilateral: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
