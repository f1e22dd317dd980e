//! Experiment runner over the nclab library: configuration loading with
//! materialized defaults, seeded execution, and artifact emission (CSV plot
//! data plus a machine-readable PASS/FAIL summary).

pub mod cache;
pub mod config;
pub mod report;
pub mod runners;

/// Exit status contract of the binary.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ExitStatus {
    AllChecksPass = 0,
    CheckFailure = 1,
    SchemaViolation = 2,
    ResourceCap = 3,
}

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or schema-invalid configuration, bad flags, or I/O trouble.
    Schema(String),
    /// A library resource guard tripped (term, degree, or dense-size cap).
    ResourceCap(String),
    /// The experiment ran but could not produce a verdict.
    Run(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "configuration error: {m}"),
            CliError::ResourceCap(m) => write!(f, "resource cap exceeded: {m}"),
            CliError::Run(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_status(&self) -> ExitStatus {
        match self {
            CliError::Schema(_) => ExitStatus::SchemaViolation,
            CliError::ResourceCap(_) => ExitStatus::ResourceCap,
            CliError::Run(_) => ExitStatus::CheckFailure,
        }
    }
}

impl From<nclab::Error> for CliError {
    fn from(e: nclab::Error) -> Self {
        match e {
            nclab::Error::MemoryCap { .. }
            | nclab::Error::TermCap { .. }
            | nclab::Error::DegreeCap { .. } => CliError::ResourceCap(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Schema(format!("i/o: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Version banner embedded in every artifact.
pub fn version_string() -> String {
    format!(
        "nclab {} / nclab-cli {}",
        nclab::VERSION,
        env!("CARGO_PKG_VERSION")
    )
}
