use std::fmt;
use std::process::ExitCode;

use vesselseg_core::Error;

/// Failure classes, each with its own process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Config = 2,
    Input = 3,
    Geometry = 4,
    Output = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind as u8)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Classifies a core error raised while reading or validating inputs.
pub fn input(context: impl fmt::Display) -> impl FnOnce(Error) -> CliError {
    move |e| {
        let kind = match e {
            Error::GeometryMismatch(_) => Kind::Geometry,
            Error::Parse(_) | Error::InvalidConfig(_) => Kind::Config,
            _ => Kind::Input,
        };
        CliError::new(kind, format!("{context}: {e}"))
    }
}

pub fn output(context: impl fmt::Display) -> impl FnOnce(Error) -> CliError {
    move |e| CliError::new(Kind::Output, format!("{context}: {e}"))
}

pub fn output_io(context: impl fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::new(Kind::Output, format!("{context}: {e}"))
}
