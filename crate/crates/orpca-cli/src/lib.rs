//! Command-line front end: synthetic experiments, decomposition of matrix
//! files, background subtraction on PGM frame sequences and format
//! conversion.
//!
//! Exit codes: 0 on success, 2 for configuration or input-format errors,
//! 3 for I/O failures, 4 when a run diverged fatally.

// Comparisons like `!(x > 0.0)` are written that way on purpose: they also
// reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod convert;
mod frames;
mod manifest;
mod run;
mod simulate;

use std::ffi::OsString;
use std::path::Path;

use clap::{Parser, Subcommand};

pub use args::{HyperArgs, LambdaPreset};
pub use manifest::RunManifest;

/// Failure classes, each mapped to one exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid flags, parameters or input contents.
    Config(String),
    /// Reading or writing a file failed.
    Io(String),
    /// A decomposition produced unusable output.
    Diverged(String),
}

impl CliError {
    /// Process exit code of this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Diverged(m) => write!(f, "diverged: {m}"),
        }
    }
}

impl From<orpca::Error> for CliError {
    fn from(e: orpca::Error) -> Self {
        match e {
            orpca::Error::Io(io) => CliError::Io(io.to_string()),
            orpca::Error::Divergence { .. } => CliError::Diverged(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub(crate) type CliResult<T> = Result<T, CliError>;

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes through a temporary sibling and renames, so a reader never sees a
/// partially written file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub(crate) fn ensure_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

#[derive(Parser, Debug)]
#[command(name = "orpca", version, about = "Tuning-free online robust PCA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate seeded synthetic streams and record explained-variance curves.
    Simulate(simulate::SimulateArgs),
    /// Decompose a matrix whose columns are samples.
    Run(run::RunArgs),
    /// Split a PGM frame sequence into background and foreground images.
    Frames(frames::FramesArgs),
    /// Convert a matrix between ORPM and CSV.
    Convert(convert::ConvertArgs),
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code; diagnostics go to stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate::execute(&a),
        Command::Run(a) => run::execute(&a),
        Command::Frames(a) => frames::execute(&a),
        Command::Convert(a) => convert::execute(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("orpca: {e}");
            e.exit_code()
        }
    }
}
