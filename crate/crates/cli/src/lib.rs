//! Command-line front end. Every command is a thin adapter: parse
//! arguments, lock and load the workspace, call into `tessera_core`, save.
//!
//! [`run_command`] is the whole program minus process plumbing, so tests
//! drive it in-process and compare against direct library calls.

mod args;
mod commands;
mod render;
pub mod workspace;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use tessera_core::bundle::BundleError;
use tessera_core::ids::{InvalidUnitId, MachineId};
use tessera_core::{CharmError, EngineError, FederationError, PlanError, ProviderError, QuotaError};

pub use args::{Cli, Command, StatusFormat, DEFAULT_SEED, DEFAULT_WORKSPACE};

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("workspace {0} is locked by another command (remove .lock if it is stale)")]
    Locked(PathBuf),
    #[error("no workspace at {0}; run `tessera init` first")]
    NoWorkspace(PathBuf),
    #[error("workspace file {path} is corrupt: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("machine {0} is in use by the model")]
    MachineInUse(MachineId),
    #[error("engine: event budget exhausted after {0} events; run converge again or raise --budget")]
    BudgetExhausted(u64),
    #[error("federation: region {0:?} failed validation")]
    ValidationFailed(String),
    #[error("bundle: {0}")]
    Bundle(#[from] BundleError),
    #[error("charm: {0}")]
    Charm(#[from] CharmError),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error("plan: {0}")]
    Plan(#[from] PlanError),
    #[error("provider: {0}")]
    Provider(#[from] ProviderError),
    #[error("federation: {0}")]
    Federation(#[from] FederationError),
    #[error("quota: {0}")]
    Quota(#[from] QuotaError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DOMAIN,
        }
    }
}

impl From<InvalidUnitId> for CliError {
    fn from(e: InvalidUnitId) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// What a command produced: exit code and the text for each stream.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Parse `argv` (including the program name) and run the command.
pub fn run_command<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome {
                    code: EXIT_USAGE,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                Outcome {
                    code: EXIT_OK,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    let mut out = commands::Output::default();
    match commands::run(&cli, &mut out) {
        Ok(()) => Outcome {
            code: EXIT_OK,
            stdout: out.stdout,
            stderr: out.stderr,
        },
        Err(e) => Outcome {
            code: e.exit_code(),
            stdout: out.stdout,
            stderr: format!("{}error: {e}\n", out.stderr),
        },
    }
}
