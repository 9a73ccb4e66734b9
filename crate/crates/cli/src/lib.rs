//! The `fsi` driver. One subcommand per workflow; every run reads a
//! configuration, echoes the effective configuration next to its
//! outputs and writes each file once, atomically.
//!
//! Exit codes: 0 success, 1 output could not be written, 2 invalid
//! input or configuration, 3 solver failure, 64 unknown subcommand.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable naming the output directory.
pub const OUTPUT_ENV: &str = "FSI_OUTPUT_DIR";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(fsi_core::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<fsi_core::Error> for CliError {
    fn from(e: fsi_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use fsi_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_INVALID,
            CliError::Core(E::Validation(_) | E::Format(_)) => EXIT_INVALID,
            CliError::Core(E::Solver { .. }) => EXIT_SOLVER,
            CliError::Core(E::Io(_)) | CliError::Io(_) => EXIT_IO,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fsi", version, about = "Spring-mounted body in a viscous stream")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Configuration file (`[section]` headers, `key = value` lines).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set params.lambda=20`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory (default: $FSI_OUTPUT_DIR, then ./fsi-out).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Steady state, its snapshot and a summary.
    Steady(Common),
    /// Energy thresholds lambda1 and lambda2 of the steady state.
    Thresholds(Common),
    /// Time integration of a seeded perturbation; energy log as CSV.
    Evolve(Common),
    /// Eigenvalues of the linearisation near the imaginary axis.
    Spectrum(Common),
    /// Smallest singular value of the body resonance matrix over k and varpi.
    Resonance(Common),
    /// Linear time-periodic response to a forced set of modes.
    Periodic(Common),
    /// Oscillatory crossing and the branch of periodic solutions.
    Branch(Common),
    /// steady, thresholds, crossing and branch in one report.
    Pipeline(Common),
}

/// Parses `args` (program name first), runs the subcommand and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                ErrorKind::InvalidSubcommand
                | ErrorKind::MissingSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_INVALID,
            };
            let _ = e.print();
            return code;
        }
    };
    let (name, common) = match &cli.cmd {
        Command::Steady(c) => ("steady", c),
        Command::Thresholds(c) => ("thresholds", c),
        Command::Evolve(c) => ("evolve", c),
        Command::Spectrum(c) => ("spectrum", c),
        Command::Resonance(c) => ("resonance", c),
        Command::Periodic(c) => ("periodic", c),
        Command::Branch(c) => ("branch", c),
        Command::Pipeline(c) => ("pipeline", c),
    };
    match execute(name, common) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("fsi {name}: {e}");
            e.exit_code()
        }
    }
}

fn execute(name: &'static str, common: &Common) -> Result<String, CliError> {
    let cfg = RunConfig::load(common.config.as_deref(), &common.set)?;
    let dir = common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fsi-out"));
    let out = output::Output::new(dir, &cfg, name)?;
    match name {
        "steady" => commands::steady(&cfg, &out),
        "thresholds" => commands::thresholds(&cfg, &out),
        "evolve" => commands::evolve(&cfg, &out),
        "spectrum" => commands::spectrum(&cfg, &out),
        "resonance" => commands::resonance(&cfg, &out),
        "periodic" => commands::periodic(&cfg, &out),
        "branch" => commands::branch(&cfg, &out),
        "pipeline" => commands::pipeline(&cfg, &out),
        _ => unreachable!("subcommands are fixed by the parser"),
    }
}
