use nirvana::Error;

pub const USAGE: u8 = 2;
pub const IO: u8 = 3;
pub const NUMERIC: u8 = 4;
pub const FORMAT: u8 = 5;

/// A single-line diagnostic and the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: IO,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::FileSizeMismatch { .. } => IO,
            Error::NonDivisibleResolution { .. }
            | Error::InvalidConfig(_)
            | Error::ShapeMismatch(_)
            | Error::TooFewFrames(_) => USAGE,
            Error::NonFiniteLoss { .. } | Error::EmptyTensor | Error::SymbolOutOfRange { .. } => {
                NUMERIC
            }
            Error::CorruptStream(_) | Error::BadMagic | Error::UnsupportedVersion(_) => FORMAT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;
