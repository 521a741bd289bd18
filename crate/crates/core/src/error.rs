use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("CUSIP must be exactly 9 characters, got {0}")]
    CusipLength(usize),
    #[error("CUSIP must be alphanumeric: {0:?}")]
    CusipCharacter(String),
    #[error("CUSIP check digit mismatch for {cusip}: expected {expected}, got {actual}")]
    CusipCheckDigit {
        cusip: String,
        expected: char,
        actual: char,
    },

    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("unexpected CSV header {found:?}, expected {expected:?}")]
    Header { found: String, expected: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("records span several quarters ({first} and {other})")]
    MixedPeriods { first: NaiveDate, other: NaiveDate },
    #[error("{prev} -> {curr} are not consecutive quarters of the calendar")]
    NonConsecutive { prev: NaiveDate, curr: NaiveDate },
    #[error("{0} is not a quarter end of the configured calendar")]
    NotInCalendar(NaiveDate),
    #[error("invalid calendar: {0}")]
    Calendar(String),

    #[error("duplicate return for asset {asset} on {date}")]
    DuplicateReturn { asset: String, date: NaiveDate },
    #[error("benchmark series {0:?} missing from returns input")]
    MissingBenchmark(String),
    #[error("unknown asset {0:?}")]
    UnknownAsset(String),
    #[error("asset {asset}: need {needed} trading days after {from}, only {available} available")]
    InsufficientHistory {
        asset: String,
        from: NaiveDate,
        needed: usize,
        available: usize,
    },
    #[error("asset {asset}: missing return on {date} inside the requested window")]
    Gap { asset: String, date: NaiveDate },
    #[error("empty return window for {asset} ending {end}")]
    EmptyWindow { asset: String, end: NaiveDate },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("signal set is already demeaned")]
    AlreadyDemeaned,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid strategy config: {0}")]
    Config(String),

    #[error("degenerate series: {0}")]
    Degenerate(&'static str),
    #[error("deflation undefined for this skew/kurtosis (variance term {0})")]
    DeflationUndefined(f64),

    #[error("sector {cusip6}: conflicting labels {first} and {second}")]
    ConflictingSector {
        cusip6: String,
        first: String,
        second: String,
    },
}
