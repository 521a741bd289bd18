//! Position generation, per-period PnL and grid backtests.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cusip::Cusip6;
use crate::error::{Error, Result};
use crate::imbalance::{demean_cross_section, quantile_rank_filter, SignalSet, Source};
use crate::market::ReturnsPanel;
use crate::scalar::{mean, Scalar};
use crate::sector::{sector_filter, Sector, SectorMap};
use crate::stats::{sharpe, SharpeResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Follow,
    Contrarian,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Follow, Direction::Contrarian];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Follow => "follow",
            Direction::Contrarian => "contrarian",
        }
    }

    fn factor(self) -> i8 {
        match self {
            Direction::Follow => 1,
            Direction::Contrarian => -1,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "follow" => Ok(Direction::Follow),
            "contrarian" => Ok(Direction::Contrarian),
            _ => Err(Error::InvalidArgument(format!("unknown direction {s:?}"))),
        }
    }
}

/// Past-performance filter applied on top of the imbalance sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Conditioning {
    #[serde(rename = "none")]
    None,
    /// Keep assets whose past MER has the same sign as the imbalance.
    #[serde(rename = "CMM")]
    Cmm,
    /// Keep assets whose past MER has the opposite sign.
    #[serde(rename = "CMR")]
    Cmr,
}

impl Conditioning {
    pub const ALL: [Conditioning; 3] = [Conditioning::None, Conditioning::Cmm, Conditioning::Cmr];

    pub fn as_str(self) -> &'static str {
        match self {
            Conditioning::None => "none",
            Conditioning::Cmm => "CMM",
            Conditioning::Cmr => "CMR",
        }
    }
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Conditioning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Conditioning::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown conditioning {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub source: Source,
    pub n_threshold: u32,
    pub quantile_i: u32,
    pub horizon_m: usize,
    pub direction: Direction,
    pub conditioning: Conditioning,
    pub lookback: Option<usize>,
    pub sector: Option<Sector>,
    pub demean: bool,
}

impl StrategyConfig {
    /// Vanilla configuration: no conditioning, no sector, raw imbalances.
    pub fn vanilla(source: Source, n_threshold: u32, quantile_i: u32, horizon_m: usize, direction: Direction) -> Self {
        StrategyConfig {
            source,
            n_threshold,
            quantile_i,
            horizon_m,
            direction,
            conditioning: Conditioning::None,
            lookback: None,
            sector: None,
            demean: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.conditioning, self.lookback) {
            (Conditioning::None, Some(_)) => {
                return Err(Error::Config("lookback given without conditioning".into()))
            }
            (Conditioning::Cmm | Conditioning::Cmr, None) => {
                return Err(Error::Config(format!("{} conditioning requires a lookback", self.conditioning)))
            }
            (_, Some(0)) => return Err(Error::Config("lookback must be at least one day".into())),
            _ => {}
        }
        if self.quantile_i == 0 {
            return Err(Error::Config("quantile rank must be at least 1".into()));
        }
        if self.horizon_m == 0 {
            return Err(Error::Config("horizon must be at least one day".into()));
        }
        Ok(())
    }

    /// Stable identifier, also used as a file stem.
    pub fn id(&self) -> String {
        let mut id = format!(
            "{}_N{}_q{}_m{}_{}",
            self.source, self.n_threshold, self.quantile_i, self.horizon_m, self.direction
        );
        if let Some(lb) = self.lookback {
            id.push_str(&format!("_{}{}", self.conditioning, lb));
        }
        if let Some(s) = self.sector {
            id.push('_');
            id.push_str(s.label());
        }
        if self.demean {
            id.push_str("_dm");
        }
        id
    }
}

/// Assets traded at one quarter end with direction `+1` (long) or `-1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PositionSet {
    pub period_end: NaiveDate,
    /// Sorted by asset.
    pub entries: Vec<(Cusip6, i8)>,
}

impl PositionSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn sign<T: Scalar>(x: T) -> i8 {
    if x > T::zero() {
        1
    } else if x < T::zero() {
        -1
    } else {
        0
    }
}

fn check_signals<T: Scalar>(signals: &SignalSet<T>, config: &StrategyConfig) -> Result<()> {
    if signals.n_threshold != config.n_threshold || signals.demeaned != config.demean {
        return Err(Error::Config(format!(
            "signals (N={}, demeaned={}) do not match config {}",
            signals.n_threshold,
            signals.demeaned,
            config.id()
        )));
    }
    Ok(())
}

fn positions_with<T: Scalar>(
    signals: &SignalSet<T>,
    config: &StrategyConfig,
    sectors: Option<&SectorMap>,
    past_mer: impl Fn(Cusip6, usize) -> Option<T>,
) -> Result<PositionSet> {
    config.validate()?;
    check_signals(signals, config)?;
    let filtered;
    let signals = match config.sector {
        Some(sector) => {
            let map = sectors.ok_or_else(|| Error::Config(format!("{} needs a sector map", config.id())))?;
            filtered = sector_filter(signals, map, sector);
            &filtered
        }
        None => signals,
    };
    let mut entries = Vec::new();
    for r in quantile_rank_filter(signals, config.source, config.quantile_i)? {
        let base = sign(r.imbalance(config.source));
        if let Some(lookback) = config.lookback {
            let past = match past_mer(r.asset, lookback) {
                Some(p) => sign(p),
                None => continue,
            };
            let keep = match config.conditioning {
                Conditioning::Cmm => past == base,
                Conditioning::Cmr => past == -base,
                Conditioning::None => true,
            };
            if past == 0 || !keep {
                continue;
            }
        }
        entries.push((r.asset, base * config.direction.factor()));
    }
    entries.sort_unstable();
    Ok(PositionSet {
        period_end: signals.period_end,
        entries,
    })
}

/// Positions for one quarter: quantile-ranked records, optional sector
/// restriction and past-MER conditioning, then the direction flip.
///
/// Under conditioning, assets without a complete lookback window or with a
/// past MER of exactly zero are left out.
pub fn generate_positions<T: Scalar>(
    signals: &SignalSet<T>,
    config: &StrategyConfig,
    panel: &ReturnsPanel<T>,
    sectors: Option<&SectorMap>,
) -> Result<PositionSet> {
    positions_with(signals, config, sectors, |asset, lookback| {
        panel
            .past_return(asset.as_str(), signals.period_end, lookback)
            .ok()
            .map(|w| w.mer)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodPnl<T: Scalar = f64> {
    pub period_end: NaiveDate,
    pub pnl: T,
    /// Assets actually traded.
    pub n_assets: usize,
    pub per_asset: Vec<(Cusip6, T)>,
    /// Positioned assets without a usable markout.
    pub dropped: usize,
}

fn pnl_with<T: Scalar>(positions: &PositionSet, markout_mer: impl Fn(Cusip6) -> Option<T>) -> PeriodPnl<T> {
    let mut per_asset = Vec::with_capacity(positions.len());
    let mut dropped = 0;
    for &(asset, dir) in &positions.entries {
        match markout_mer(asset) {
            Some(mer) => per_asset.push((asset, if dir > 0 { mer } else { -mer })),
            None => dropped += 1,
        }
    }
    PeriodPnl {
        period_end: positions.period_end,
        pnl: per_asset.iter().map(|&(_, p)| p).sum(),
        n_assets: per_asset.len(),
        per_asset,
        dropped,
    }
}

/// Sum over assets of the `m`-day MER markout times the direction.
///
/// Assets with a gap or no returns are dropped and counted. Errors only when
/// the horizon runs past the end of the calendar.
pub fn period_pnl<T: Scalar>(positions: &PositionSet, panel: &ReturnsPanel<T>, m: usize) -> Result<PeriodPnl<T>> {
    if m == 0 {
        return Err(Error::InvalidArgument("horizon must be at least one day".into()));
    }
    if !positions.is_empty() && panel.window_after(positions.period_end, m).is_none() {
        return Err(Error::InsufficientHistory {
            asset: panel.benchmark_id().to_string(),
            from: positions.period_end,
            needed: m,
            available: panel.calendar().len() - panel.calendar().partition_point(|d| *d <= positions.period_end),
        });
    }
    Ok(pnl_with(positions, |asset| {
        panel
            .future_return(asset.as_str(), positions.period_end, m)
            .ok()
            .map(|w| w.mer)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodResult<T: Scalar = f64> {
    pub period_end: NaiveDate,
    pub pnl: T,
    pub n_assets: usize,
    /// Running sum of `pnl` up to and including this period.
    pub cumulative: T,
}

/// Outcome of one configuration over all quarters.
///
/// `pnl_total` is the plain sum of per-period PnLs; capital normalization
/// only enters through `ppt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport<T: Scalar = f64> {
    pub config: StrategyConfig,
    pub config_id: String,
    pub pnl_by_period: Vec<PeriodResult<T>>,
    /// Quarters whose horizon runs past the returns calendar.
    pub omitted_periods: usize,
    /// Consecutive included quarters whose markout windows overlap.
    pub overlapping_periods: usize,
    /// Positioned assets dropped for missing markouts, summed over quarters.
    pub dropped_assets: usize,
    pub pnl_total: T,
    /// Mean of `pnl / n_assets` over quarters that traded.
    pub ppt: Option<T>,
    pub sharpe: Option<SharpeResult<T>>,
    pub deflated_confidence: Option<T>,
    pub significant: Option<bool>,
    /// Annualized Sharpe when significant, zero otherwise.
    pub sharpe_display: Option<T>,
    /// No quarter could be evaluated.
    pub empty: bool,
}

impl<T: Scalar> BacktestReport<T> {
    /// Assembles totals, PPT and Sharpe from per-quarter outcomes in any order.
    pub fn from_periods(config: StrategyConfig, mut periods: Vec<(NaiveDate, T, usize)>, omitted: usize) -> Self {
        periods.sort_by_key(|p| p.0);
        let mut cumulative = T::zero();
        let pnl_by_period: Vec<PeriodResult<T>> = periods
            .iter()
            .map(|&(period_end, pnl, n_assets)| {
                cumulative = cumulative + pnl;
                PeriodResult {
                    period_end,
                    pnl,
                    n_assets,
                    cumulative,
                }
            })
            .collect();
        let pnls: Vec<T> = pnl_by_period.iter().map(|p| p.pnl).collect();
        let per_trade: Vec<T> = pnl_by_period
            .iter()
            .filter(|p| p.n_assets > 0)
            .map(|p| p.pnl / T::of_count(p.n_assets))
            .collect();
        BacktestReport {
            config,
            config_id: config.id(),
            empty: pnl_by_period.is_empty(),
            pnl_total: cumulative,
            ppt: mean(&per_trade),
            sharpe: sharpe(&pnls).ok(),
            pnl_by_period,
            omitted_periods: omitted,
            overlapping_periods: 0,
            dropped_assets: 0,
            deflated_confidence: None,
            significant: None,
            sharpe_display: None,
        }
    }
}

/// Default search grid. Conditioned strategies use their own horizons and
/// lookbacks; sector strategies are contrarian and vanilla.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub sources: Vec<Source>,
    pub thresholds: Vec<u32>,
    pub quantiles: Vec<u32>,
    pub horizons: Vec<usize>,
    pub directions: Vec<Direction>,
    pub demean: Vec<bool>,
    pub conditioned_horizons: Vec<usize>,
    pub lookbacks: Vec<usize>,
    pub sector_thresholds: Vec<u32>,
    pub sector_horizons: Vec<usize>,
    pub sectors: Vec<Sector>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            sources: Source::ALL.to_vec(),
            thresholds: vec![50, 150, 500],
            quantiles: (1..=5).collect(),
            horizons: vec![5, 10, 21, 42, 63],
            directions: Direction::ALL.to_vec(),
            demean: vec![false, true],
            conditioned_horizons: vec![10, 21, 42],
            lookbacks: vec![10, 21, 42],
            sector_thresholds: vec![50],
            sector_horizons: vec![21, 42, 63],
            sectors: Vec::new(),
        }
    }
}

impl GridSpec {
    pub fn expand(&self) -> Vec<StrategyConfig> {
        let mut out = Vec::new();
        for &source in &self.sources {
            for &n in &self.thresholds {
                for &q in &self.quantiles {
                    for &direction in &self.directions {
                        for &demean in &self.demean {
                            let base = StrategyConfig {
                                demean,
                                ..StrategyConfig::vanilla(source, n, q, 0, direction)
                            };
                            for &m in &self.horizons {
                                out.push(StrategyConfig { horizon_m: m, ..base });
                            }
                            for conditioning in [Conditioning::Cmm, Conditioning::Cmr] {
                                for &m in &self.conditioned_horizons {
                                    for &lb in &self.lookbacks {
                                        out.push(StrategyConfig {
                                            horizon_m: m,
                                            conditioning,
                                            lookback: Some(lb),
                                            ..base
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        for &sector in &self.sectors {
            for &source in &self.sources {
                for &n in &self.sector_thresholds {
                    for &q in &self.quantiles {
                        for &m in &self.sector_horizons {
                            out.push(StrategyConfig {
                                sector: Some(sector),
                                ..StrategyConfig::vanilla(source, n, q, m, Direction::Contrarian)
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Per-quarter lookups shared by every configuration.
struct PeriodCache<T: Scalar> {
    period_end: NaiveDate,
    /// Start index of the markout window on the calendar.
    start: usize,
    markouts: HashMap<usize, Option<HashMap<Cusip6, Option<T>>>>,
    past: HashMap<usize, HashMap<Cusip6, Option<T>>>,
}

/// Runs every configuration over all quarters.
///
/// `base` holds one signal set per quarter, computed with a threshold no
/// larger than any configured N and not demeaned; each config's view is
/// obtained by thresholding and then, if asked, demeaning.
pub fn run_backtest<T: Scalar>(
    base: &[SignalSet<T>],
    configs: &[StrategyConfig],
    panel: &ReturnsPanel<T>,
    sectors: Option<&SectorMap>,
) -> Result<Vec<BacktestReport<T>>> {
    let mut base: Vec<&SignalSet<T>> = base.iter().collect();
    base.sort_by_key(|s| s.period_end);
    if base.len() < 2 {
        return Err(Error::Empty("need signal sets for at least two periods"));
    }
    if let Some(w) = base.windows(2).find(|w| w[0].period_end == w[1].period_end) {
        return Err(Error::InvalidArgument(format!("duplicate signal period {}", w[0].period_end)));
    }
    for s in &base {
        if s.demeaned {
            return Err(Error::AlreadyDemeaned);
        }
    }
    for c in configs {
        c.validate()?;
        if c.sector.is_some() && sectors.is_none() {
            return Err(Error::Config(format!("{} needs a sector map", c.id())));
        }
    }

    let views: BTreeSet<(u32, bool)> = configs.iter().map(|c| (c.n_threshold, c.demean)).collect();
    let prepared: BTreeMap<(u32, bool), Vec<SignalSet<T>>> = views
        .into_par_iter()
        .map(|(n, dm)| {
            let sets = base
                .iter()
                .map(|s| {
                    let t = s.with_threshold(n)?;
                    if dm {
                        demean_cross_section(&t)
                    } else {
                        Ok(t)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(((n, dm), sets))
        })
        .collect::<Result<_>>()?;

    let horizons: BTreeSet<usize> = configs.iter().map(|c| c.horizon_m).collect();
    let lookbacks: BTreeSet<usize> = configs.iter().filter_map(|c| c.lookback).collect();
    let caches: Vec<PeriodCache<T>> = base
        .par_iter()
        .map(|s| {
            let markouts = horizons
                .iter()
                .map(|&m| {
                    let table = panel.window_after(s.period_end, m).map(|_| {
                        s.records
                            .iter()
                            .map(|r| {
                                let mer = panel.future_return(r.asset.as_str(), s.period_end, m).ok();
                                (r.asset, mer.map(|w| w.mer))
                            })
                            .collect()
                    });
                    (m, table)
                })
                .collect();
            let past = lookbacks
                .iter()
                .map(|&lb| {
                    let table = s
                        .records
                        .iter()
                        .map(|r| {
                            let w = panel.past_return(r.asset.as_str(), s.period_end, lb).ok();
                            (r.asset, w.map(|w| w.mer))
                        })
                        .collect();
                    (lb, table)
                })
                .collect();
            PeriodCache {
                period_end: s.period_end,
                start: panel.calendar().partition_point(|d| *d <= s.period_end),
                markouts,
                past,
            }
        })
        .collect();

    configs
        .par_iter()
        .map(|config| {
            let sets = &prepared[&(config.n_threshold, config.demean)];
            let mut periods = Vec::with_capacity(sets.len());
            let mut omitted = 0;
            let mut dropped = 0;
            let mut starts = Vec::with_capacity(sets.len());
            for (set, cache) in sets.iter().zip(&caches) {
                let Some(markouts) = &cache.markouts[&config.horizon_m] else {
                    omitted += 1;
                    continue;
                };
                let past = config.lookback.map(|lb| &cache.past[&lb]);
                let positions = positions_with(set, config, sectors, |asset, _| {
                    past.and_then(|p| p.get(&asset).copied().flatten())
                })?;
                let pnl = pnl_with(&positions, |asset| markouts.get(&asset).copied().flatten());
                dropped += pnl.dropped;
                starts.push(cache.start);
                periods.push((cache.period_end, pnl.pnl, pnl.n_assets));
            }
            let mut report = BacktestReport::from_periods(*config, periods, omitted);
            report.dropped_assets = dropped;
            report.overlapping_periods = starts
                .windows(2)
                .filter(|w| w[0] + config.horizon_m > w[1])
                .count();
            Ok(report)
        })
        .collect()
}
