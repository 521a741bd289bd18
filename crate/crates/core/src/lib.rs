//! Quarterly institutional holdings turned into buy/sell imbalance signals,
//! contrarian backtests over future markouts, deflated Sharpe significance
//! and price-impact regressions.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! and `*F32` aliases below fix the precision.

pub mod calendar;
pub mod cusip;
pub mod error;
pub mod fmt;
pub mod holdings;
pub mod imbalance;
pub mod market;
pub mod scalar;
pub mod sector;
pub mod stats;
pub mod strategy;

pub use calendar::QuarterCalendar;
pub use cusip::{Cusip6, Cusip9};
pub use error::{Error, Result};
pub use holdings::{Cik, DiffMatrix, HoldingRecord, HoldingsMatrix};
pub use imbalance::{ImbalanceRecord, SignalSet, Source};
pub use market::{Markout, QuantileMethod, ReturnsPanel, WindowReturn};
pub use scalar::Scalar;
pub use sector::{PopularityPoint, Sector, SectorMap};
pub use stats::{DeflationContext, ImpactTable, SharpeResult};
pub use strategy::{BacktestReport, Conditioning, Direction, GridSpec, PositionSet, StrategyConfig};

pub type ReturnsPanelF64 = ReturnsPanel<f64>;
pub type ReturnsPanelF32 = ReturnsPanel<f32>;
pub type SignalSetF64 = SignalSet<f64>;
pub type SignalSetF32 = SignalSet<f32>;
pub type ImbalanceRecordF64 = ImbalanceRecord<f64>;
pub type ImbalanceRecordF32 = ImbalanceRecord<f32>;
pub type MarkoutF64 = Markout<f64>;
pub type MarkoutF32 = Markout<f32>;
pub type BacktestReportF64 = BacktestReport<f64>;
pub type BacktestReportF32 = BacktestReport<f32>;
pub type SharpeResultF64 = SharpeResult<f64>;
pub type SharpeResultF32 = SharpeResult<f32>;
pub type DeflationContextF64 = DeflationContext<f64>;
pub type DeflationContextF32 = DeflationContext<f32>;
pub type ImpactTableF64 = ImpactTable<f64>;
pub type ImpactTableF32 = ImpactTable<f32>;
pub type PopularityPointF64 = PopularityPoint<f64>;
pub type PopularityPointF32 = PopularityPoint<f32>;
