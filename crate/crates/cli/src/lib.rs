//! Command-line pipeline around the `holdflow` core: ingest, imbalance,
//! backtest, impact and sector stages, plus a synthetic fixture generator.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod synth;

pub use config::{RunConfig, CONFIG_ENV};
pub use error::{CliError, CliResult, ExitKind};
