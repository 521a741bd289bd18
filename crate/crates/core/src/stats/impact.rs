//! Contemporaneous price impact: per-quarter regressions of quarterly returns
//! on imbalances, averaged overall and by calendar quarter.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::quarter_of_year;
use crate::error::Result;
use crate::fmt::{float, percent2, write_schema_line};
use crate::imbalance::{SignalSet, Source};
use crate::market::{winsor_bounds, QuantileMethod, ReturnsPanel};
use crate::scalar::{mean, Scalar};
use crate::stats::ols_r2;

pub const IMPACT_TABLE_HEADER: &str = "returns,N,source,r2_all,r2_q1,r2_q2,r2_q3,r2_q4";
pub const IMPACT_BY_PERIOD_HEADER: &str = "period_end,returns,N,source,r2,n_obs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnKind {
    Raw,
    Mer,
}

impl ReturnKind {
    pub const ALL: [ReturnKind; 2] = [ReturnKind::Raw, ReturnKind::Mer];

    /// Row label of the impact table.
    pub fn label(self) -> &'static str {
        match self {
            ReturnKind::Raw => "Raw rets",
            ReturnKind::Mer => "MERs",
        }
    }
}

impl fmt::Display for ReturnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReturnKind::Raw => "raw",
            ReturnKind::Mer => "mer",
        })
    }
}

/// Sample over which winsorization bounds are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WinsorScope {
    /// Bounds per quarter, from that quarter's cross-section.
    #[default]
    CrossSection,
    /// Bounds from all quarters pooled.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpactOptions {
    pub winsor_fraction: f64,
    pub quantile_method: QuantileMethod,
    pub scope: WinsorScope,
}

impl Default for ImpactOptions {
    fn default() -> Self {
        Self {
            winsor_fraction: 0.10,
            quantile_method: QuantileMethod::default(),
            scope: WinsorScope::default(),
        }
    }
}

/// R² of one quarter's regression; `None` when the regression is undefined
/// (fewer than three observations or constant imbalances).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactCell<T: Scalar = f64> {
    pub period_end: NaiveDate,
    pub source: Source,
    pub n_threshold: u32,
    pub return_kind: ReturnKind,
    pub r_squared: Option<T>,
    pub n_obs: usize,
}

/// Average R² over all quarters and per calendar quarter Q1..Q4.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactRow<T: Scalar = f64> {
    pub return_kind: ReturnKind,
    pub n_threshold: u32,
    pub source: Source,
    pub all: Option<T>,
    pub by_quarter: [Option<T>; 4],
    pub n_periods: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactTable<T: Scalar = f64> {
    pub rows: Vec<ImpactRow<T>>,
    pub cells: Vec<ImpactCell<T>>,
}

struct Sample<T: Scalar> {
    period_end: NaiveDate,
    x_vol: Vec<T>,
    x_tr: Vec<T>,
    y: Vec<T>,
}

fn collect_sample<T: Scalar>(
    set: &SignalSet<T>,
    panel: &ReturnsPanel<T>,
    n: u32,
    kind: ReturnKind,
) -> Sample<T> {
    let mut s = Sample {
        period_end: set.period_end,
        x_vol: Vec::new(),
        x_tr: Vec::new(),
        y: Vec::new(),
    };
    for r in set.records.iter().filter(|r| r.n_active >= n) {
        let Ok(w) = panel.quarterly_return(r.asset.as_str(), set.prev_period_end, set.period_end) else {
            continue;
        };
        s.x_vol.push(r.i_vol);
        s.x_tr.push(r.i_tr);
        s.y.push(match kind {
            ReturnKind::Raw => w.raw,
            ReturnKind::Mer => w.mer,
        });
    }
    s
}

fn clip<T: Scalar>(ys: &mut [T], bounds: (T, T)) {
    for y in ys {
        *y = y.max(bounds.0).min(bounds.1);
    }
}

/// Regresses winsorized quarterly returns on imbalances for every
/// `(return kind, threshold, source, quarter)` and aggregates the R².
///
/// Rows come out grouped by return kind (input order), then threshold in
/// decreasing order, then volume before trade-count imbalances.
pub fn impact_table<T: Scalar>(
    signals: &[SignalSet<T>],
    panel: &ReturnsPanel<T>,
    thresholds: &[u32],
    kinds: &[ReturnKind],
    opts: ImpactOptions,
) -> Result<ImpactTable<T>> {
    let mut ns = thresholds.to_vec();
    ns.sort_unstable_by(|a, b| b.cmp(a));
    ns.dedup();

    let groups: Vec<(ReturnKind, u32)> = kinds
        .iter()
        .flat_map(|&k| ns.iter().map(move |&n| (k, n)))
        .collect();

    let per_group: Vec<Vec<ImpactCell<T>>> = groups
        .par_iter()
        .map(|&(kind, n)| -> Result<Vec<ImpactCell<T>>> {
            let mut samples: Vec<Sample<T>> = signals
                .iter()
                .map(|s| collect_sample(s, panel, n, kind))
                .collect();
            match opts.scope {
                WinsorScope::CrossSection => {
                    for s in samples.iter_mut().filter(|s| !s.y.is_empty()) {
                        let b = winsor_bounds(&s.y, opts.winsor_fraction, opts.quantile_method)?;
                        clip(&mut s.y, b);
                    }
                }
                WinsorScope::Pooled => {
                    let pooled: Vec<T> = samples.iter().flat_map(|s| s.y.iter().copied()).collect();
                    if !pooled.is_empty() {
                        let b = winsor_bounds(&pooled, opts.winsor_fraction, opts.quantile_method)?;
                        samples.iter_mut().for_each(|s| clip(&mut s.y, b));
                    }
                }
            }
            let mut cells = Vec::with_capacity(samples.len() * 2);
            for s in &samples {
                for source in Source::ALL {
                    let x = match source {
                        Source::Vol => &s.x_vol,
                        Source::Tr => &s.x_tr,
                    };
                    cells.push(ImpactCell {
                        period_end: s.period_end,
                        source,
                        n_threshold: n,
                        return_kind: kind,
                        r_squared: ols_r2(&s.y, x).ok(),
                        n_obs: s.y.len(),
                    });
                }
            }
            Ok(cells)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (&(kind, n), cells) in groups.iter().zip(&per_group) {
        for source in Source::ALL {
            let mut all = Vec::new();
            let mut by_q: BTreeMap<u8, Vec<T>> = BTreeMap::new();
            for c in cells.iter().filter(|c| c.source == source) {
                if let Some(r2) = c.r_squared {
                    all.push(r2);
                    by_q.entry(quarter_of_year(c.period_end)).or_default().push(r2);
                }
            }
            let q = |i: u8| by_q.get(&i).and_then(|v| mean(v));
            rows.push(ImpactRow {
                return_kind: kind,
                n_threshold: n,
                source,
                all: mean(&all),
                by_quarter: [q(1), q(2), q(3), q(4)],
                n_periods: all.len(),
            });
        }
    }

    let mut cells: Vec<ImpactCell<T>> = per_group.into_iter().flatten().collect();
    cells.sort_by(|a, b| {
        (a.period_end, a.return_kind, std::cmp::Reverse(a.n_threshold), a.source).cmp(&(
            b.period_end,
            b.return_kind,
            std::cmp::Reverse(b.n_threshold),
            b.source,
        ))
    });
    Ok(ImpactTable { rows, cells })
}

fn source_label(source: Source) -> &'static str {
    match source {
        Source::Vol => "I^vol",
        Source::Tr => "I^tr",
    }
}

/// Table layout: one row per (returns, N, source), R² in percent with two
/// decimals, blank where no quarter contributed.
pub fn write_impact_table<T: Scalar, W: Write>(out: W, table: &ImpactTable<T>) -> Result<()> {
    let mut out = out;
    write_schema_line(&mut out, "impact-table", 1)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(IMPACT_TABLE_HEADER.split(','))?;
    for r in &table.rows {
        let pct = |v: Option<T>| v.map(percent2).unwrap_or_default();
        let mut rec = vec![
            r.return_kind.label().to_string(),
            r.n_threshold.to_string(),
            source_label(r.source).to_string(),
            pct(r.all),
        ];
        rec.extend(r.by_quarter.iter().map(|&q| pct(q)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-quarter R² series, fractions with ten significant digits.
pub fn write_impact_by_period<T: Scalar, W: Write>(out: W, table: &ImpactTable<T>) -> Result<()> {
    let mut out = out;
    write_schema_line(&mut out, "impact-by-period", 1)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(IMPACT_BY_PERIOD_HEADER.split(','))?;
    for c in &table.cells {
        w.write_record([
            c.period_end.to_string(),
            c.return_kind.label().to_string(),
            c.n_threshold.to_string(),
            source_label(c.source).to_string(),
            c.r_squared.map(float).unwrap_or_default(),
            c.n_obs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
