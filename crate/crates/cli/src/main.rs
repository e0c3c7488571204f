mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use multispeed_core::Error;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(e) => match e {
                Error::InvalidGrid(_) | Error::GridMismatch | Error::BoxTooSmall(_) | Error::InvalidParams(_) => 1,
                Error::BlowUp { .. } => 3,
                Error::Io(_) | Error::Format(_) | Error::Json(_) => 4,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "multispeed", version, about = "Multi-speed solitary waves of coupled cubic NLS systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's output.directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread cap
    #[arg(long)]
    jobs: Option<usize>,
    /// Validate the config and print derived quantities only
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Ground-state profile (closed form in 1D, Petviashvili otherwise)
    GroundState(Common),
    /// Sample a pair of boosted solitary waves
    Soliton(Common),
    /// Integrate the coupled system and track its invariants
    Evolve(Common),
    /// Backward construction from two-soliton final data
    Construct(Common),
    /// Lowest eigenpairs of the linearized operators
    Spectrum(Common),
    /// Construction verdicts over a list of relative speeds
    Scan(Common),
}

fn load<T: serde::de::DeserializeOwned + config::Versioned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    config::parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::GroundState(c) => commands::ground_state(&load(&c.config)?, c.out.as_deref(), c.dry_run),
        Command::Soliton(c) => commands::soliton(&load(&c.config)?, c.out.as_deref(), c.dry_run),
        Command::Evolve(c) => commands::evolve_cmd(&load(&c.config)?, c.out.as_deref(), c.dry_run),
        Command::Construct(c) => commands::construct(&load(&c.config)?, c.out.as_deref(), c.dry_run),
        Command::Spectrum(c) => commands::spectrum(&load(&c.config)?, c.out.as_deref(), c.dry_run),
        Command::Scan(c) => commands::scan(&load(&c.config)?, c.out.as_deref(), c.dry_run),
    }
}

fn common(command: &Command) -> &Common {
    match command {
        Command::GroundState(c)
        | Command::Soliton(c)
        | Command::Evolve(c)
        | Command::Construct(c)
        | Command::Spectrum(c)
        | Command::Scan(c) => c,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match common(&cli.command).jobs {
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(CliError::Config(format!("cannot start {n} workers: {e}"))),
        },
        None => dispatch(&cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("multispeed: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
