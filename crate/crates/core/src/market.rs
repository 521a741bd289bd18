//! Daily returns panel, trading-day windows and markout returns.
//!
//! Returns are summed over windows, never compounded. A window that touches a
//! missing daily return is an error for that asset; callers exclude the asset
//! from the affected computation instead of imputing.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holdings::check_header;
use crate::scalar::Scalar;

pub const RETURNS_HEADER: &str = "date,asset,ret";
pub const DEFAULT_BENCHMARK: &str = "SPY";

/// Daily close-to-close returns aligned on the benchmark's trading calendar.
#[derive(Debug, Clone)]
pub struct ReturnsPanel<T: Scalar = f64> {
    calendar: Vec<NaiveDate>,
    benchmark_id: String,
    benchmark: Vec<T>,
    index: HashMap<String, usize>,
    assets: Vec<String>,
    series: Vec<Vec<Option<T>>>,
    load_stats: LoadStats,
}

/// Rows and assets discarded while aligning input to the benchmark calendar.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub rows_off_calendar: usize,
    pub assets_dropped: usize,
}

/// Raw and market-excess sums over one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowReturn<T: Scalar = f64> {
    pub raw: T,
    pub mer: T,
}

/// Forward return over `horizon_m` trading days after a quarter end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Markout<T: Scalar = f64> {
    pub quarter_end: NaiveDate,
    pub horizon_m: usize,
    pub raw: T,
    pub mer: T,
}

impl<T: Scalar> ReturnsPanel<T> {
    /// Builds a panel from aligned series. Every series must match the
    /// calendar length; non-finite values are stored as gaps.
    pub fn new(
        calendar: Vec<NaiveDate>,
        benchmark_id: impl Into<String>,
        benchmark: Vec<T>,
        series: BTreeMap<String, Vec<Option<T>>>,
    ) -> Result<Self> {
        let benchmark_id = benchmark_id.into();
        if !calendar.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("calendar must be strictly increasing".into()));
        }
        if benchmark.len() != calendar.len() {
            return Err(Error::InvalidArgument(format!(
                "benchmark has {} values for {} dates",
                benchmark.len(),
                calendar.len()
            )));
        }
        if let Some(i) = benchmark.iter().position(|x| !x.is_finite()) {
            return Err(Error::Gap {
                asset: benchmark_id,
                date: calendar[i],
            });
        }
        let mut index = HashMap::with_capacity(series.len());
        let mut assets = Vec::with_capacity(series.len());
        let mut values = Vec::with_capacity(series.len());
        for (asset, s) in series {
            if asset == benchmark_id {
                continue;
            }
            if s.len() != calendar.len() {
                return Err(Error::InvalidArgument(format!(
                    "series {asset} has {} values for {} dates",
                    s.len(),
                    calendar.len()
                )));
            }
            index.insert(asset.clone(), assets.len());
            assets.push(asset);
            values.push(s.into_iter().map(|x| x.filter(|v| v.is_finite())).collect());
        }
        Ok(Self {
            calendar,
            benchmark_id,
            benchmark,
            index,
            assets,
            series: values,
            load_stats: LoadStats::default(),
        })
    }

    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn benchmark_id(&self) -> &str {
        &self.benchmark_id
    }

    pub fn benchmark(&self) -> &[T] {
        &self.benchmark
    }

    /// Non-benchmark assets in ascending id order.
    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn load_stats(&self) -> LoadStats {
        self.load_stats
    }

    pub fn contains(&self, asset: &str) -> bool {
        asset == self.benchmark_id || self.index.contains_key(asset)
    }

    /// Daily value for `asset` at calendar position `i`; `None` is a gap.
    pub fn value(&self, asset: &str, i: usize) -> Result<Option<T>> {
        if asset == self.benchmark_id {
            return Ok(self.benchmark.get(i).copied());
        }
        let idx = *self
            .index
            .get(asset)
            .ok_or_else(|| Error::UnknownAsset(asset.to_string()))?;
        Ok(self.series[idx].get(i).copied().flatten())
    }

    /// Positions of the `m` trading days strictly after `date`.
    pub fn window_after(&self, date: NaiveDate, m: usize) -> Option<Range<usize>> {
        let start = self.calendar.partition_point(|d| *d <= date);
        (start + m <= self.calendar.len()).then_some(start..start + m)
    }

    /// Positions of trading days in `(prev_end, end]`.
    pub fn window_between(&self, prev_end: NaiveDate, end: NaiveDate) -> Range<usize> {
        let lo = self.calendar.partition_point(|d| *d <= prev_end);
        let hi = self.calendar.partition_point(|d| *d <= end);
        lo..hi.max(lo)
    }

    /// Positions of the last `len` trading days on or before `end`.
    pub fn window_ending(&self, end: NaiveDate, len: usize) -> Option<Range<usize>> {
        let hi = self.calendar.partition_point(|d| *d <= end);
        hi.checked_sub(len).map(|lo| lo..hi)
    }

    /// Raw and market-excess sums of `asset` over a calendar range.
    pub fn window_return(&self, asset: &str, range: Range<usize>) -> Result<WindowReturn<T>> {
        if range.end > self.calendar.len() {
            return Err(Error::InvalidArgument("window exceeds calendar".into()));
        }
        let bench: T = self.benchmark[range.clone()].iter().copied().sum();
        if asset == self.benchmark_id {
            return Ok(WindowReturn {
                raw: bench,
                mer: T::zero(),
            });
        }
        let idx = *self
            .index
            .get(asset)
            .ok_or_else(|| Error::UnknownAsset(asset.to_string()))?;
        let series = &self.series[idx];
        let mut raw = T::zero();
        for i in range {
            match series[i] {
                Some(v) => raw = raw + v,
                None => {
                    return Err(Error::Gap {
                        asset: asset.to_string(),
                        date: self.calendar[i],
                    })
                }
            }
        }
        Ok(WindowReturn {
            raw,
            mer: raw - bench,
        })
    }

    /// Sum of the `m` daily returns starting the first trading day after
    /// `quarter_end`, with the benchmark-relative excess.
    pub fn future_return(&self, asset: &str, quarter_end: NaiveDate, m: usize) -> Result<Markout<T>> {
        if m == 0 {
            return Err(Error::InvalidArgument("horizon must be at least one day".into()));
        }
        if !self.contains(asset) {
            return Err(Error::UnknownAsset(asset.to_string()));
        }
        let range = self.window_after(quarter_end, m).ok_or_else(|| {
            let start = self.calendar.partition_point(|d| *d <= quarter_end);
            Error::InsufficientHistory {
                asset: asset.to_string(),
                from: quarter_end,
                needed: m,
                available: self.calendar.len() - start,
            }
        })?;
        let w = self.window_return(asset, range)?;
        Ok(Markout {
            quarter_end,
            horizon_m: m,
            raw: w.raw,
            mer: w.mer,
        })
    }

    /// Sums over the quarter's own trading days, `prev_end < date <= end`.
    pub fn quarterly_return(&self, asset: &str, prev_end: NaiveDate, end: NaiveDate) -> Result<WindowReturn<T>> {
        if !self.contains(asset) {
            return Err(Error::UnknownAsset(asset.to_string()));
        }
        let range = self.window_between(prev_end, end);
        if range.is_empty() {
            return Err(Error::EmptyWindow {
                asset: asset.to_string(),
                end,
            });
        }
        self.window_return(asset, range)
    }

    /// Sums over the `lookback` trading days ending on or before `end`.
    pub fn past_return(&self, asset: &str, end: NaiveDate, lookback: usize) -> Result<WindowReturn<T>> {
        if !self.contains(asset) {
            return Err(Error::UnknownAsset(asset.to_string()));
        }
        let range = self.window_ending(end, lookback).ok_or_else(|| Error::InsufficientHistory {
            asset: asset.to_string(),
            from: end,
            needed: lookback,
            available: self.calendar.partition_point(|d| *d <= end),
        })?;
        self.window_return(asset, range)
    }
}

/// Loads the `date,asset,ret` CSV.
///
/// The trading calendar is the set of dates on which the benchmark reports.
/// Asset rows on other dates are discarded and counted, as are assets left
/// without any calendar date; missing asset days inside the calendar become
/// gaps.
pub fn load_returns<T: Scalar, R: Read>(input: R, benchmark_id: &str) -> Result<ReturnsPanel<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    check_header(rdr.headers()?, RETURNS_HEADER)?;

    let mut raw: BTreeMap<String, BTreeMap<NaiveDate, T>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| Error::Row { line, reason };
        if row.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", row.len())));
        }
        let date = NaiveDate::parse_from_str(row[0].trim(), "%Y-%m-%d")
            .map_err(|e| bad(format!("bad date {:?}: {e}", &row[0])))?;
        let asset = row[1].trim().to_string();
        if asset.is_empty() {
            return Err(bad("empty asset id".into()));
        }
        let value: f64 = row[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad return {:?}", &row[2])))?;
        let value = T::from_f64(value).ok_or_else(|| bad("return not representable".into()))?;
        if raw.entry(asset.clone()).or_default().insert(date, value).is_some() {
            return Err(Error::DuplicateReturn { asset, date });
        }
    }

    let bench = raw
        .remove(benchmark_id)
        .ok_or_else(|| Error::MissingBenchmark(benchmark_id.to_string()))?;
    let calendar: Vec<NaiveDate> = bench.keys().copied().collect();
    let benchmark: Vec<T> = bench.values().copied().collect();
    let position: HashMap<NaiveDate, usize> =
        calendar.iter().enumerate().map(|(i, d)| (*d, i)).collect();

    let mut stats = LoadStats::default();
    let mut series = BTreeMap::new();
    for (asset, rows) in raw {
        let mut s = vec![None; calendar.len()];
        let mut any = false;
        for (date, v) in rows {
            match position.get(&date) {
                Some(&i) => {
                    s[i] = Some(v);
                    any = true;
                }
                None => stats.rows_off_calendar += 1,
            }
        }
        if any {
            series.insert(asset, s);
        } else {
            stats.assets_dropped += 1;
        }
    }
    let mut panel = ReturnsPanel::new(calendar, benchmark_id, benchmark, series)?;
    panel.load_stats = stats;
    Ok(panel)
}

/// Quantile convention used to place the clipping bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileMethod {
    /// Bounds are order statistics: the `floor(n · fraction)` smallest values
    /// are raised to the next one, likewise at the top. Idempotent.
    #[default]
    OrderStatistic,
    /// Bounds are quantiles interpolated linearly between order statistics,
    /// position `(n − 1) · p` on the sorted sample. Not idempotent.
    Linear,
}

/// Clips the lowest and highest `fraction` of `values`; output order follows
/// input order.
pub fn winsorize<T: Scalar>(values: &[T], fraction: f64) -> Result<Vec<T>> {
    winsorize_with(values, fraction, QuantileMethod::OrderStatistic)
}

pub fn winsorize_with<T: Scalar>(values: &[T], fraction: f64, method: QuantileMethod) -> Result<Vec<T>> {
    let (lo, hi) = winsor_bounds(values, fraction, method)?;
    Ok(values.iter().map(|&v| v.max(lo).min(hi)).collect())
}

/// Lower and upper clipping bounds for `values`.
pub fn winsor_bounds<T: Scalar>(values: &[T], fraction: f64, method: QuantileMethod) -> Result<(T, T)> {
    if values.is_empty() {
        return Err(Error::Empty("winsorize input"));
    }
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "winsorize fraction must lie in [0, 0.5), got {fraction}"
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("winsorize input contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = sorted.len();
    Ok(match method {
        QuantileMethod::OrderStatistic => {
            let k = ((n as f64) * fraction + 1e-9).floor() as usize;
            (sorted[k], sorted[n - 1 - k])
        }
        QuantileMethod::Linear => (
            linear_quantile(&sorted, fraction),
            linear_quantile(&sorted, 1.0 - fraction),
        ),
    })
}

fn linear_quantile<T: Scalar>(sorted: &[T], p: f64) -> T {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let w = T::of(h - lo as f64);
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn panel(asset: Vec<Option<f64>>, bench: Vec<f64>) -> ReturnsPanel {
        let calendar: Vec<_> = (0..bench.len() as u32).map(|i| d(2021, 10, 1 + i)).collect();
        let mut series = BTreeMap::new();
        series.insert("AAAAAA".to_string(), asset);
        ReturnsPanel::new(calendar, "SPY", bench, series).unwrap()
    }

    #[test]
    fn loads_full_panel() {
        let csv = "date,asset,ret\n\
                   2021-10-01,SPY,0.001\n2021-10-04,SPY,0.002\n2021-10-05,SPY,0.003\n\
                   2021-10-01,AAA,0.01\n2021-10-04,AAA,0.02\n2021-10-05,AAA,0.03\n\
                   2021-10-01,BBB,-0.01\n2021-10-04,BBB,-0.02\n2021-10-05,BBB,-0.03\n";
        let p: ReturnsPanel = load_returns(csv.as_bytes(), "SPY").unwrap();
        assert_eq!(p.calendar().len(), 3);
        assert_eq!(p.assets(), &["AAA".to_string(), "BBB".to_string()]);
        assert_eq!(p.value("BBB", 2).unwrap(), Some(-0.03));
    }

    #[test]
    fn duplicate_row_names_asset_and_date() {
        let csv = "date,asset,ret\n2021-10-01,SPY,0.001\n2021-10-01,AAA,0.01\n2021-10-01,AAA,0.02\n";
        let err = load_returns::<f64, _>(csv.as_bytes(), "SPY").unwrap_err();
        assert!(matches!(err, Error::DuplicateReturn { ref asset, date } if asset == "AAA" && date == d(2021, 10, 1)));
        assert!(err.to_string().contains("AAA") && err.to_string().contains("2021-10-01"));
    }

    #[test]
    fn gap_is_stored_and_asset_retained() {
        let csv = "date,asset,ret\n\
                   2021-10-01,SPY,0.001\n2021-10-04,SPY,0.002\n2021-10-05,SPY,0.003\n\
                   2021-10-01,AAA,0.01\n2021-10-05,AAA,0.03\n2021-10-02,AAA,0.5\n\
                   2021-10-02,ZZZ,0.5\n";
        let p: ReturnsPanel = load_returns(csv.as_bytes(), "SPY").unwrap();
        assert!(p.contains("AAA"));
        assert_eq!(p.value("AAA", 1).unwrap(), None);
        assert!(!p.contains("ZZZ"));
        assert_eq!(
            p.load_stats(),
            LoadStats {
                rows_off_calendar: 2,
                assets_dropped: 1
            }
        );
    }

    #[test]
    fn missing_benchmark_is_an_error() {
        let csv = "date,asset,ret\n2021-10-01,AAA,0.01\n";
        assert!(matches!(
            load_returns::<f64, _>(csv.as_bytes(), "SPY"),
            Err(Error::MissingBenchmark(_))
        ));
    }

    #[test]
    fn two_day_markout() {
        let p = panel(vec![Some(0.0), Some(0.01), Some(0.02)], vec![0.0, 0.005, 0.005]);
        let m = p.future_return("AAAAAA", d(2021, 10, 1), 2).unwrap();
        assert!((m.raw - 0.03).abs() < 1e-15);
        assert!((m.mer - 0.02).abs() < 1e-15);
        assert_eq!(m.horizon_m, 2);
    }

    #[test]
    fn markout_errors() {
        let p = panel(vec![Some(0.0), None, Some(0.02)], vec![0.0, 0.005, 0.005]);
        assert!(matches!(
            p.future_return("AAAAAA", d(2021, 10, 1), 3),
            Err(Error::InsufficientHistory { needed: 3, available: 2, .. })
        ));
        assert!(matches!(
            p.future_return("AAAAAA", d(2021, 10, 1), 2),
            Err(Error::Gap { .. })
        ));
        assert!(matches!(
            p.future_return("QQQQQQ", d(2021, 10, 1), 1),
            Err(Error::UnknownAsset(_))
        ));
    }

    #[test]
    fn five_day_markout_matches_hand_sum() {
        let asset = [0.011, -0.004, 0.007, 0.002, -0.013, 0.009, 0.001];
        let bench = [0.003, 0.001, -0.002, 0.004, -0.006, 0.002, 0.0];
        let p = panel(asset.iter().map(|&x| Some(x)).collect(), bench.to_vec());
        // window starts the day after 2021-10-01, i.e. positions 1..6
        let raw = -0.004 + 0.007 + 0.002 + -0.013 + 0.009;
        let spy = 0.001 + -0.002 + 0.004 + -0.006 + 0.002;
        let m = p.future_return("AAAAAA", d(2021, 10, 1), 5).unwrap();
        assert!((m.raw - raw).abs() < 1e-12);
        assert!((m.mer - (raw - spy)).abs() < 1e-12);
    }

    #[test]
    fn asset_equal_to_benchmark_has_zero_excess() {
        let bench = vec![0.01, -0.02, 0.013, 0.004, -0.007];
        let p = panel(bench.iter().map(|&x| Some(x)).collect(), bench.clone());
        for m in 1..=4 {
            assert_eq!(p.future_return("AAAAAA", d(2021, 10, 1), m).unwrap().mer, 0.0);
            assert_eq!(p.future_return("SPY", d(2021, 10, 1), m).unwrap().mer, 0.0);
        }
    }

    #[test]
    fn quarterly_window_uses_quarter_days() {
        let calendar: Vec<_> = (0..63)
            .map(|i| d(2021, 7, 1) + chrono::Days::new(i))
            .chain([d(2021, 10, 1)])
            .collect();
        let n = calendar.len();
        let mut series = BTreeMap::new();
        series.insert("AAAAAA".to_string(), vec![Some(0.001); n]);
        series.insert("BBBBBB".to_string(), vec![Some(0.002); n]);
        let p = ReturnsPanel::<f64>::new(calendar, "SPY", vec![0.002; n], series).unwrap();
        let w = p.quarterly_return("AAAAAA", d(2021, 6, 30), d(2021, 9, 30)).unwrap();
        assert!((w.raw - 0.063).abs() < 1e-12);
        let b = p.quarterly_return("BBBBBB", d(2021, 6, 30), d(2021, 9, 30)).unwrap();
        assert_eq!(b.mer, 0.0);
        assert!(matches!(
            p.quarterly_return("AAAAAA", d(2021, 3, 31), d(2021, 6, 30)),
            Err(Error::EmptyWindow { .. })
        ));
    }

    #[test]
    fn past_return_window() {
        let p = panel(vec![Some(0.01), Some(0.02), Some(0.04)], vec![0.0, 0.01, 0.0]);
        let w = p.past_return("AAAAAA", d(2021, 10, 2), 2).unwrap();
        assert!((w.raw - 0.03).abs() < 1e-15);
        assert!((w.mer - 0.02).abs() < 1e-15);
        assert!(p.past_return("AAAAAA", d(2021, 10, 1), 2).is_err());
    }

    #[test]
    fn winsorize_linear_matches_sorted_interpolation() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        // (n-1)p = 0.9 -> 1 + 0.9 * (2 - 1); (n-1)(1-p) = 8.1 -> 9 + 0.1 * (10 - 9)
        let (lo, hi) = winsor_bounds(&xs, 0.10, QuantileMethod::Linear).unwrap();
        assert!((lo - 1.9).abs() < 1e-12 && (hi - 9.1).abs() < 1e-12);
        let w = winsorize_with(&xs, 0.10, QuantileMethod::Linear).unwrap();
        assert!((w[0] - 1.9).abs() < 1e-12);
        assert!((w[9] - 9.1).abs() < 1e-12);
        assert_eq!(&w[1..9], &xs[1..9]);
    }

    #[test]
    fn winsorize_order_statistic_default() {
        let xs: Vec<f64> = vec![5.0, 1.0, 9.0, 2.0, 10.0, 3.0, 4.0, 6.0, 7.0, 8.0];
        let w = winsorize(&xs, 0.10).unwrap();
        assert_eq!(w, vec![5.0, 2.0, 9.0, 2.0, 9.0, 3.0, 4.0, 6.0, 7.0, 8.0]);
        assert_eq!(winsorize(&[3.0, 3.0, 3.0], 0.2).unwrap(), vec![3.0; 3]);
        assert_eq!(winsorize(&xs, 0.0).unwrap(), xs);
        assert_eq!(winsorize_with(&xs, 0.0, QuantileMethod::Linear).unwrap(), xs);
        assert!(matches!(winsorize::<f64>(&[], 0.1), Err(Error::Empty(_))));
        assert!(winsorize(&xs, 0.5).is_err());
    }

    #[test]
    fn linear_winsorization_is_not_idempotent() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let once = winsorize_with(&xs, 0.10, QuantileMethod::Linear).unwrap();
        let twice = winsorize_with(&once, 0.10, QuantileMethod::Linear).unwrap();
        assert_ne!(once, twice);
    }

    #[test]
    fn works_in_single_precision() {
        let xs: Vec<f32> = (1..=10).map(|i| i as f32).collect();
        assert_eq!(winsorize(&xs, 0.1).unwrap()[0], 2.0f32);
    }

    proptest! {
        #[test]
        fn winsorize_idempotent_and_monotone(
            xs in proptest::collection::vec(-1.0e3f64..1.0e3, 1..60),
            fraction in 0.0f64..0.49,
        ) {
            let once = winsorize(&xs, fraction).unwrap();
            prop_assert_eq!(winsorize(&once, fraction).unwrap(), once.clone());
            for i in 0..xs.len() {
                for j in 0..xs.len() {
                    if xs[i] <= xs[j] {
                        prop_assert!(once[i] <= once[j]);
                    }
                }
            }
        }

        #[test]
        fn markout_additivity(
            days in proptest::collection::vec(-0.05f64..0.05, 12),
            a in 1usize..6,
            b in 1usize..6,
        ) {
            let bench: Vec<f64> = days.iter().map(|x| x * 0.5).collect();
            let p = panel(days.iter().map(|&x| Some(x)).collect(), bench);
            let start = d(2021, 10, 1);
            let whole = p.future_return("AAAAAA", start, a + b).unwrap();
            let first = p.future_return("AAAAAA", start, a).unwrap();
            let second = p.window_return("AAAAAA", 1 + a..1 + a + b).unwrap();
            prop_assert!((whole.raw - (first.raw + second.raw)).abs() < 1e-12);
            prop_assert!((whole.mer - (first.mer + second.mer)).abs() < 1e-12);
        }
    }
}
