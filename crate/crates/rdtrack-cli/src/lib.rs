//! Command-line front end for `rdtrack`: problem loading, tracking,
//! Blahut–Arimoto baselines, error comparison and Jacobian spectra, with
//! CSV and JSON outputs that embed a run manifest.

pub mod ba;
pub mod compare;
pub mod output;
pub mod problems;
pub mod spectra;
pub mod track;

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rdtrack::ba_core::BaError;
use rdtrack::problem::ProblemError;
use rdtrack::tracker::{TrackConfig, TrackError};

pub use ba::BaArgs;
pub use compare::CompareArgs;
pub use spectra::SpectraArgs;
pub use track::TrackArgs;

/// Exit code for numerical failures.
pub const EXIT_NUMERICAL: i32 = 1;
/// Exit code for usage and I/O errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Format { path: path.into(), message: message.to_string() }
    }
}

impl From<TrackError> for CliError {
    fn from(e: TrackError) -> Self {
        match e {
            TrackError::NonNegativeStep(_)
            | TrackError::ZeroOrder
            | TrackError::BadDelta(_)
            | TrackError::BadBetaRange { .. }
            | TrackError::BadGrid => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<BaError> for CliError {
    fn from(e: BaError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Everything needed to reproduce an output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Problem file path or built-in name.
    pub problem: String,
    pub config: Option<TrackConfig>,
    /// Command parameters not covered by `config`.
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<String>,
    /// Seed of randomized inputs, when any.
    pub seed: Option<u64>,
    pub library_version: String,
}

impl RunManifest {
    pub fn new(command: &str, problem: &str) -> Self {
        Self {
            command: command.to_string(),
            problem: problem.to_string(),
            config: None,
            parameters: BTreeMap::new(),
            outputs: Vec::new(),
            seed: None,
            library_version: rdtrack::VERSION.to_string(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.parameters.insert(key.to_string(), serde_json::to_value(value).expect("serializable parameter"));
        self
    }
}

/// Human-readable lines printed after a command; wall times live here only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub lines: Vec<String>,
}

impl Summary {
    pub fn push(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }
}

#[derive(Debug, Parser)]
#[command(name = "rdtrack", version, about = "Rate-distortion root tracking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track the optimal marginal with the Taylor method and bifurcation handling.
    Track(TrackArgs),
    /// Blahut–Arimoto on a β grid, by reverse annealing or independently per point.
    Ba(BaArgs),
    /// Errors of traces against an oracle or a BA baseline, and order sweeps.
    Compare(CompareArgs),
    /// Eigenvalues of the marginal and encoder Jacobians with classification.
    Spectra(SpectraArgs),
}

/// Runs one parsed command.
pub fn run(cli: &Cli) -> Result<Summary, CliError> {
    match &cli.command {
        Command::Track(args) => track::cmd_track(args),
        Command::Ba(args) => ba::cmd_ba(args),
        Command::Compare(args) => compare::cmd_compare(args),
        Command::Spectra(args) => spectra::cmd_spectra(args),
    }
}
