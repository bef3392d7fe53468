use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] itsmlab::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(itsmlab::Error::InvalidConfig(_)) => EXIT_USAGE,
            CliError::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            _ => EXIT_DATA,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Core(e) => e.kind(),
            CliError::Csv(_) => "Csv",
        }
    }

    /// `error kind=<Kind> code=<exit> msg="<escaped message>"` on one line.
    pub fn line(&self) -> String {
        format!(
            "error kind={} code={} msg={:?}",
            self.kind(),
            self.exit_code(),
            self.to_string()
        )
    }
}

pub type CliResult<T> = Result<T, CliError>;
