use cass_core::CassError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] CassError),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    /// 2 for bad invocations or configs, 3 for missing or malformed data,
    /// 4 when training or scoring produced non-finite or undefined numbers.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Core(e) => match e {
                CassError::InvalidArgument(_) | CassError::Config(_) => EXIT_USAGE,
                CassError::NonFinite { .. } | CassError::Domain(_) => EXIT_NUMERIC,
                CassError::Shape { .. }
                | CassError::Unreadable { .. }
                | CassError::RateMismatch { .. }
                | CassError::NoUsableSegments(_)
                | CassError::Format { .. }
                | CassError::Plot(_)
                | CassError::Io { .. } => EXIT_DATA,
            },
        }
    }
}
