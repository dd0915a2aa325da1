use std::fmt;

/// Exit code for invalid input, missing files and shape violations.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for a solver abort.
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Solver { stage: String, message: String },
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Solver { .. } => EXIT_SOLVER,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Solver { stage, message } => write!(f, "solver failed in {stage} stage: {message}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<gtf_hsr::Error> for CliError {
    fn from(e: gtf_hsr::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(format!("json: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(format!("csv: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
