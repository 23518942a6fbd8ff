//! Library surface of the experiment harness; the `boggn` binary is a thin
//! wrapper so integration tests can drive every command in-process.

pub mod commands;
pub mod config;
pub mod output;

/// Errors split by exit code: configuration problems exit 1, runtime
/// failures exit 2.
#[derive(Debug)]
pub enum CliError {
    Config {
        line: Option<usize>,
        message: String,
    },
    Runtime(String),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config {
            line: None,
            message: message.into(),
        }
    }

    pub(crate) fn runtime_io(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }

    /// Process exit code mandated for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config {
                line: Some(line),
                message,
            } => write!(f, "config error (line {line}): {message}"),
            CliError::Config {
                line: None,
                message,
            } => write!(f, "config error: {message}"),
            CliError::Runtime(message) => write!(f, "runtime error: {message}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Environment variable overriding `[run] output_dir`.
pub const OUTPUT_DIR_ENV: &str = "BOGGN_OUTPUT_DIR";
