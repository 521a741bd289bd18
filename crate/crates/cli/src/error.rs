//! Exit-code classification.

use std::fmt;

/// Process exit status for a failed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    /// Numerical or pipeline failure on valid input.
    Computation = 1,
    /// Missing files, malformed CSV, bad configuration.
    Input = 2,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub source: anyhow::Error,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn input(e: impl Into<anyhow::Error>) -> Self {
        CliError { kind: ExitKind::Input, source: e.into() }
    }

    pub fn computation(e: impl Into<anyhow::Error>) -> Self {
        CliError { kind: ExitKind::Computation, source: e.into() }
    }

    pub fn context(self, msg: impl fmt::Display) -> Self {
        let source = self.source.context(msg.to_string());
        CliError { kind: self.kind, source }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl From<holdflow::Error> for CliError {
    fn from(e: holdflow::Error) -> Self {
        use holdflow::Error::*;
        let kind = match &e {
            CusipLength(_) | CusipCharacter(_) | CusipCheckDigit { .. } | Row { .. } | Header { .. }
            | Csv(_) | Io(_) | MixedPeriods { .. } | NonConsecutive { .. } | NotInCalendar(_)
            | Calendar(_) | DuplicateReturn { .. } | MissingBenchmark(_) | Config(_)
            | ConflictingSector { .. } => ExitKind::Input,
            _ => ExitKind::Computation,
        };
        CliError { kind, source: e.into() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input(e)
    }
}

pub trait Context<T> {
    fn at(self, msg: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for std::result::Result<T, E> {
    fn at(self, msg: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| e.into().context(msg))
    }
}
