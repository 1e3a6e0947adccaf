//! Command-line front end: CSV ingestion, command dispatch, table cache
//! management and structured reporting.
//!
//! Every command writes a deterministic key-value report to stdout; repeated
//! runs with the same input, flags and seed produce byte-identical reports
//! (and byte-identical table files). Wall-clock timings go to stderr so they
//! cannot perturb the report. Exit codes distinguish the failure classes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0    | success |
//! | 2    | usage error (unknown flag or subcommand) |
//! | 3    | ingestion error (unreadable, ragged or non-numeric input) |
//! | 4    | configuration error (bad parameters, missing or mismatched table) |
//! | 5    | numerical error (singular normalizer, undefined estimator, failed identity, unstable bootstrap) |

pub mod args;
pub mod commands;
pub mod ingest;
pub mod report;

use snstat::SnError;

/// Failure classes carried to the process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Ingest(String),
    Config(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Ingest(_) => 3,
            CliError::Config(_) => 4,
            CliError::Numeric(_) => 5,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Ingest(m)
            | CliError::Config(m)
            | CliError::Numeric(m) => m,
        }
    }
}

impl From<SnError> for CliError {
    fn from(e: SnError) -> Self {
        match &e {
            SnError::InvalidInput(_) | SnError::InvalidConfig(_) | SnError::Table(_) => {
                CliError::Config(e.to_string())
            }
            SnError::Io(_) => CliError::Config(e.to_string()),
            SnError::EstimatorUndefined(_)
            | SnError::Singular { .. }
            | SnError::BootstrapUnstable { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

/// Parse and run an argument vector; returns the report text on success.
/// The binary prints the report to stdout and maps errors to exit codes.
pub fn run_command<I, T>(argv: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = args::Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    commands::dispatch(cli.command)
}
