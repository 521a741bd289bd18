//! Buy/sell imbalances per issuer, activity thresholds, quantile ranks and
//! the cross-sectional diagnostics used to pick a threshold.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cusip::Cusip6;
use crate::error::{Error, Result};
use crate::fmt::{float, write_schema_line};
use crate::holdings::{check_header, DiffMatrix};
use crate::scalar::{mean, Scalar};

pub const SIGNALS_HEADER: &str = "period_end,asset,n_active,b_vol,s_vol,b_tr,s_tr,i_vol,i_tr";

/// Which aggregate an imbalance is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Share volume.
    Vol,
    /// Trade counts.
    Tr,
}

impl Source {
    pub const ALL: [Source; 2] = [Source::Vol, Source::Tr];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Vol => "vol",
            Source::Tr => "tr",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vol" => Ok(Source::Vol),
            "tr" => Ok(Source::Tr),
            other => Err(Error::InvalidArgument(format!("unknown source {other:?}"))),
        }
    }
}

/// Column aggregates of a difference matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BuySell {
    pub b_vol: u64,
    pub s_vol: u64,
    pub b_tr: u32,
    pub s_tr: u32,
}

impl BuySell {
    pub fn n_active(&self) -> u32 {
        self.b_tr + self.s_tr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImbalanceRecord<T: Scalar = f64> {
    pub period_end: NaiveDate,
    pub asset: Cusip6,
    pub n_active: u32,
    pub b_vol: u64,
    pub s_vol: u64,
    pub b_tr: u32,
    pub s_tr: u32,
    pub i_vol: T,
    pub i_tr: T,
}

impl<T: Scalar> ImbalanceRecord<T> {
    /// Record with both ratios computed from the aggregates. `None` when the
    /// column is empty.
    pub fn from_aggregates(period_end: NaiveDate, asset: Cusip6, agg: BuySell) -> Option<Self> {
        if agg.n_active() == 0 {
            return None;
        }
        Some(Self {
            period_end,
            asset,
            n_active: agg.n_active(),
            b_vol: agg.b_vol,
            s_vol: agg.s_vol,
            b_tr: agg.b_tr,
            s_tr: agg.s_tr,
            i_vol: ratio(agg.b_vol as u128, agg.s_vol as u128),
            i_tr: ratio(agg.b_tr as u128, agg.s_tr as u128),
        })
    }

    pub fn imbalance(&self, source: Source) -> T {
        match source {
            Source::Vol => self.i_vol,
            Source::Tr => self.i_tr,
        }
    }
}

/// `(b − s) / (b + s)`. Exact integer difference and sum, then one division.
fn ratio<T: Scalar>(b: u128, s: u128) -> T {
    let total = b + s;
    let diff = b as i128 - s as i128;
    T::from_i128(diff).expect("finite") / T::from_u128(total).expect("finite")
}

/// Imbalance records of one quarter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalSet<T: Scalar = f64> {
    pub period_end: NaiveDate,
    /// Start of the quarter the changes happened in.
    pub prev_period_end: NaiveDate,
    pub records: Vec<ImbalanceRecord<T>>,
    pub n_threshold: u32,
    pub demeaned: bool,
    /// `(mean i_vol, mean i_tr)` subtracted when demeaned.
    pub demean_offsets: Option<(T, T)>,
}

impl<T: Scalar> SignalSet<T> {
    /// Keeps records with at least `n` active funds.
    pub fn with_threshold(&self, n: u32) -> Result<SignalSet<T>> {
        if n < self.n_threshold {
            return Err(Error::InvalidArgument(format!(
                "cannot lower threshold from {} to {n}",
                self.n_threshold
            )));
        }
        if self.demeaned && n != self.n_threshold {
            return Err(Error::InvalidArgument(
                "thresholding a demeaned set would break its zero mean".into(),
            ));
        }
        Ok(SignalSet {
            records: self
                .records
                .iter()
                .filter(|r| r.n_active >= n)
                .cloned()
                .collect(),
            n_threshold: n,
            ..self.clone()
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Buy/sell volumes and trade counts of one issuer column.
pub fn aggregate_buys_sells(d: &DiffMatrix, asset: Cusip6) -> Result<BuySell> {
    if !d.assets().contains(&asset) {
        return Err(Error::UnknownAsset(asset.to_string()));
    }
    Ok(aggregate_column(d.column(asset).unwrap_or(&[])))
}

fn aggregate_column(column: &[(crate::holdings::Cik, i64)]) -> BuySell {
    let mut agg = BuySell::default();
    for &(_, v) in column {
        if v > 0 {
            agg.b_vol += v as u64;
            agg.b_tr += 1;
        } else if v < 0 {
            agg.s_vol += v.unsigned_abs();
            agg.s_tr += 1;
        }
    }
    agg
}

/// One record per issuer with at least `n_threshold` active funds.
pub fn compute_imbalances<T: Scalar>(d: &DiffMatrix, n_threshold: u32) -> SignalSet<T> {
    let records = d
        .columns()
        .filter_map(|(asset, col)| {
            let agg = aggregate_column(col);
            (agg.n_active() >= n_threshold)
                .then(|| ImbalanceRecord::from_aggregates(d.period_end(), asset, agg))
                .flatten()
        })
        .collect();
    SignalSet {
        period_end: d.period_end(),
        prev_period_end: d.prev_period_end(),
        records,
        n_threshold,
        demeaned: false,
        demean_offsets: None,
    }
}

/// Top `ceil(count / i)` records by absolute imbalance, zeros excluded.
///
/// Ties at the cutoff go to the lower issuer id. Output is ordered by
/// decreasing magnitude.
pub fn quantile_rank_filter<T: Scalar>(
    s: &SignalSet<T>,
    source: Source,
    i: u32,
) -> Result<Vec<&ImbalanceRecord<T>>> {
    if i == 0 {
        return Err(Error::InvalidArgument("quantile rank must be at least 1".into()));
    }
    let mut nonzero: Vec<&ImbalanceRecord<T>> = s
        .records
        .iter()
        .filter(|r| r.imbalance(source) != T::zero())
        .collect();
    let keep = nonzero.len().div_ceil(i as usize);
    nonzero.sort_by(|a, b| {
        let (ma, mb) = (a.imbalance(source).abs(), b.imbalance(source).abs());
        mb.partial_cmp(&ma)
            .expect("finite imbalances")
            .then(a.asset.cmp(&b.asset))
    });
    nonzero.truncate(keep);
    Ok(nonzero)
}

/// Subtracts the cross-sectional means of both imbalances.
pub fn demean_cross_section<T: Scalar>(s: &SignalSet<T>) -> Result<SignalSet<T>> {
    if s.demeaned {
        return Err(Error::AlreadyDemeaned);
    }
    let vols: Vec<T> = s.records.iter().map(|r| r.i_vol).collect();
    let trs: Vec<T> = s.records.iter().map(|r| r.i_tr).collect();
    let mv = mean(&vols).unwrap_or_else(T::zero);
    let mt = mean(&trs).unwrap_or_else(T::zero);
    let records = s
        .records
        .iter()
        .map(|r| ImbalanceRecord {
            i_vol: r.i_vol - mv,
            i_tr: r.i_tr - mt,
            ..r.clone()
        })
        .collect();
    Ok(SignalSet {
        records,
        demeaned: true,
        demean_offsets: Some((mv, mt)),
        ..s.clone()
    })
}

/// Number of issuers with at least `n` active funds, for each `n` in the grid.
pub fn survival_curve(d: &DiffMatrix, n_grid: &[u32]) -> Vec<(u32, usize)> {
    let mut activity: Vec<u32> = d
        .assets()
        .iter()
        .map(|&a| d.column(a).map_or(0, |c| c.len() as u32))
        .collect();
    activity.sort_unstable();
    n_grid
        .iter()
        .map(|&n| (n, activity.len() - activity.partition_point(|&a| a < n)))
        .collect()
}

/// Log-linear least-squares fit `ln count ≈ intercept − rate · N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit<T: Scalar = f64> {
    pub intercept: T,
    pub rate: T,
    pub r_squared: T,
}

/// Fits an exponential decay to the nonzero points of a survival curve.
pub fn fit_exponential_decay<T: Scalar>(curve: &[(u32, usize)]) -> Result<DecayFit<T>> {
    let (xs, ys): (Vec<T>, Vec<T>) = curve
        .iter()
        .filter(|(_, c)| *c > 0)
        .map(|&(n, c)| (T::of(n as f64), T::of_count(c).ln()))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::Degenerate("need two nonzero survival points"));
    }
    let fit = crate::stats::ols(&ys, &xs)?;
    Ok(DecayFit {
        intercept: fit.intercept,
        rate: -fit.slope,
        r_squared: fit.r_squared,
    })
}

/// Share of strictly positive values among nonzero imbalances, per source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignFractions<T: Scalar = f64> {
    /// `None` when every volume imbalance is zero.
    pub frac_pos_vol: Option<T>,
    pub frac_pos_tr: Option<T>,
}

pub fn sign_fractions<T: Scalar>(s: &SignalSet<T>) -> Result<SignFractions<T>> {
    if s.records.is_empty() {
        return Err(Error::Empty("signal set"));
    }
    let frac = |source: Source| {
        let (pos, nonzero) = s.records.iter().fold((0usize, 0usize), |(p, n), r| {
            let v = r.imbalance(source);
            (p + (v > T::zero()) as usize, n + (v != T::zero()) as usize)
        });
        (nonzero > 0).then(|| T::of_count(pos) / T::of_count(nonzero))
    };
    Ok(SignFractions {
        frac_pos_vol: frac(Source::Vol),
        frac_pos_tr: frac(Source::Tr),
    })
}

/// Writes signal sets in the documented CSV layout.
pub fn write_signals<T: Scalar, W: Write>(out: W, sets: &[SignalSet<T>]) -> Result<()> {
    let mut out = out;
    write_schema_line(&mut out, "signals", 1)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SIGNALS_HEADER.split(','))?;
    for s in sets {
        let date = s.period_end.to_string();
        for r in &s.records {
            w.write_record([
                date.clone(),
                r.asset.to_string(),
                r.n_active.to_string(),
                r.b_vol.to_string(),
                r.s_vol.to_string(),
                r.b_tr.to_string(),
                r.s_tr.to_string(),
                float(r.i_vol),
                float(r.i_tr),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads undemeaned signal records back, recomputing both ratios from the
/// integer aggregates so no precision is lost in the text round trip.
///
/// Returns records grouped per period in file order of first appearance.
pub fn read_signal_records<T: Scalar, R: Read>(input: R) -> Result<Vec<(NaiveDate, Vec<ImbalanceRecord<T>>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    check_header(rdr.headers()?, SIGNALS_HEADER)?;
    let mut out: Vec<(NaiveDate, Vec<ImbalanceRecord<T>>)> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| Error::Row { line, reason };
        if row.len() != 9 {
            return Err(bad(format!("expected 9 fields, found {}", row.len())));
        }
        let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d").map_err(|e| bad(e.to_string()))?;
        let asset: Cusip6 = row[1].parse().map_err(|e: Error| bad(e.to_string()))?;
        let int = |i: usize| -> Result<u64> {
            row[i]
                .parse()
                .map_err(|_| Error::Row { line, reason: format!("bad integer {:?}", &row[i]) })
        };
        let agg = BuySell {
            b_vol: int(3)?,
            s_vol: int(4)?,
            b_tr: int(5)? as u32,
            s_tr: int(6)? as u32,
        };
        if int(2)? != agg.n_active() as u64 {
            return Err(bad("n_active disagrees with trade counts".into()));
        }
        let rec = ImbalanceRecord::from_aggregates(date, asset, agg)
            .ok_or_else(|| bad("record without active funds".into()))?;
        match out.last_mut() {
            Some((d, recs)) if *d == date => recs.push(rec),
            _ => out.push((date, vec![rec])),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::holdings::Cik;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn asset(i: usize) -> Cusip6 {
        format!("A{i:05}").parse().unwrap()
    }

    fn column_matrix(columns: &[Vec<i64>]) -> DiffMatrix {
        let cells = columns.iter().enumerate().flat_map(|(j, col)| {
            col.iter()
                .enumerate()
                .map(move |(f, &v)| (Cik(f as u64), asset(j), v))
        });
        DiffMatrix::from_cells(d(2021, 9, 30), d(2021, 6, 30), cells).unwrap()
    }

    fn record(name: usize, i_vol: f64, i_tr: f64) -> ImbalanceRecord {
        ImbalanceRecord {
            period_end: d(2021, 9, 30),
            asset: asset(name),
            n_active: 1,
            b_vol: 0,
            s_vol: 0,
            b_tr: 0,
            s_tr: 0,
            i_vol,
            i_tr,
        }
    }

    fn set(records: Vec<ImbalanceRecord>) -> SignalSet {
        SignalSet {
            period_end: d(2021, 9, 30),
            prev_period_end: d(2021, 6, 30),
            records,
            n_threshold: 0,
            demeaned: false,
            demean_offsets: None,
        }
    }

    #[test]
    fn aggregates_mixed_column() {
        let dm = column_matrix(&[vec![10, -5, 2], vec![1, 1]]);
        let agg = aggregate_buys_sells(&dm, asset(0)).unwrap();
        assert_eq!((agg.b_vol, agg.s_vol, agg.b_tr, agg.s_tr), (12, 5, 2, 1));
        let agg = aggregate_buys_sells(&dm, asset(1)).unwrap();
        assert_eq!((agg.b_vol, agg.s_vol, agg.b_tr, agg.s_tr), (2, 0, 2, 0));
        assert!(matches!(
            aggregate_buys_sells(&dm, asset(9)),
            Err(Error::UnknownAsset(_))
        ));
    }

    #[test]
    fn aggregates_match_naive_loop_on_random_columns() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let col: Vec<i64> = (0..20)
                .map(|_| if rng.gen_bool(0.3) { 0 } else { rng.gen_range(-1000..=1000) })
                .collect();
            let dm = column_matrix(std::slice::from_ref(&col));
            if dm.column(asset(0)).is_none() {
                continue;
            }
            let (mut bv, mut sv, mut bt, mut st) = (0i64, 0i64, 0u32, 0u32);
            for v in &col {
                if *v > 0 {
                    bv += v;
                    bt += 1;
                }
                if *v < 0 {
                    sv -= v;
                    st += 1;
                }
            }
            let agg = aggregate_buys_sells(&dm, asset(0)).unwrap();
            assert_eq!((agg.b_vol as i64, agg.s_vol as i64, agg.b_tr, agg.s_tr), (bv, sv, bt, st));
        }
    }

    #[test]
    fn volume_ratio() {
        let r = ImbalanceRecord::<f64>::from_aggregates(
            d(2021, 9, 30),
            asset(0),
            BuySell { b_vol: 300, s_vol: 100, b_tr: 3, s_tr: 1 },
        )
        .unwrap();
        assert_eq!(r.i_vol, 0.5);
        assert_eq!(r.i_tr, 0.5);
        assert_eq!(r.n_active, 4);
    }

    #[test]
    fn single_buyer_is_extreme() {
        let dm = column_matrix(&[vec![40]]);
        let s: SignalSet = compute_imbalances(&dm, 1);
        assert_eq!(s.records[0].i_vol, 1.0);
        assert_eq!(s.records[0].i_tr, 1.0);
    }

    #[test]
    fn threshold_cuts_inactive_assets() {
        // activity per asset: 5, 1, 3, 2, 4 -> N = 3 keeps assets 0, 2, 4
        let dm = column_matrix(&[
            vec![1, 2, -3, 4, 5],
            vec![7],
            vec![-1, -1, 1],
            vec![2, 0, -2],
            vec![0, 1, 1, -1, 1],
        ]);
        let s: SignalSet = compute_imbalances(&dm, 3);
        let kept: Vec<_> = s.records.iter().map(|r| r.asset).collect();
        assert_eq!(kept, vec![asset(0), asset(2), asset(4)]);
        assert!(s.records.iter().all(|r| r.n_active >= 3));
    }

    #[test]
    fn quantile_top_fifth() {
        let recs = (0..10).map(|i| record(i, (i as f64 + 1.0) / 10.0, 0.1)).collect();
        let s = set(recs);
        let top = quantile_rank_filter(&s, Source::Vol, 5).unwrap();
        let names: Vec<_> = top.iter().map(|r| r.asset).collect();
        assert_eq!(names, vec![asset(9), asset(8)]);
        assert_eq!(quantile_rank_filter(&s, Source::Vol, 1).unwrap().len(), 10);
        assert!(quantile_rank_filter(&s, Source::Vol, 0).is_err());
    }

    #[test]
    fn quantile_drops_zeros_first() {
        let s = set(vec![
            record(0, 0.0, 0.0),
            record(1, 0.1, 0.0),
            record(2, -0.1, 0.0),
            record(3, 0.9, 0.0),
            record(4, -0.9, 0.0),
        ]);
        let top = quantile_rank_filter(&s, Source::Vol, 2).unwrap();
        let mut names: Vec<_> = top.iter().map(|r| r.asset).collect();
        names.sort();
        assert_eq!(names, vec![asset(3), asset(4)]);
        assert!(quantile_rank_filter(&s, Source::Tr, 1).unwrap().is_empty());
    }

    #[test]
    fn quantile_ties_go_to_lower_id() {
        let s = set(vec![record(3, 0.5, 0.0), record(1, -0.5, 0.0), record(2, 0.5, 0.0)]);
        let top = quantile_rank_filter(&s, Source::Vol, 3).unwrap();
        assert_eq!(top[0].asset, asset(1));
    }

    #[test]
    fn demeaning() {
        let s = set(vec![record(0, 0.5, 1.0), record(1, -0.5, 0.0)]);
        let dm = demean_cross_section(&s).unwrap();
        assert_eq!(dm.records[0].i_vol, 0.5);
        assert_eq!(dm.records[1].i_vol, -0.5);
        assert_eq!(dm.records[0].i_tr, 0.5);
        assert_eq!(dm.records[1].i_tr, -0.5);
        assert_eq!(dm.demean_offsets, Some((0.0, 0.5)));
        assert!(matches!(demean_cross_section(&dm), Err(Error::AlreadyDemeaned)));
    }

    #[test]
    fn demeaned_random_set_has_zero_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let s = set((0..97).map(|i| record(i, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect());
        let dm = demean_cross_section(&s).unwrap();
        let mv = dm.records.iter().map(|r| r.i_vol).sum::<f64>() / 97.0;
        let mt = dm.records.iter().map(|r| r.i_tr).sum::<f64>() / 97.0;
        assert!(mv.abs() < 1e-12 && mt.abs() < 1e-12);
    }

    #[test]
    fn survival_counts() {
        // activity histogram: 1, 2, 2, 3, 5
        let dm = column_matrix(&[
            vec![1],
            vec![1, -1],
            vec![0, 3, 3],
            vec![1, 1, 1],
            vec![1, 2, 3, 4, 5],
        ]);
        assert_eq!(
            survival_curve(&dm, &[0, 1, 2, 3, 4, 5, 6]),
            vec![(0, 5), (1, 5), (2, 4), (3, 2), (4, 1), (5, 1), (6, 0)]
        );
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let curve: Vec<(u32, usize)> = (0..6)
            .map(|k| (k * 50, (10_000.0 * (-0.01 * (k * 50) as f64).exp()).round() as usize))
            .collect();
        let fit: DecayFit = fit_exponential_decay(&curve).unwrap();
        assert!((fit.rate - 0.01).abs() < 1e-4);
        assert!(fit.r_squared > 0.9999);
    }

    #[test]
    fn sign_fraction_cases() {
        let all_pos = set(vec![record(0, 0.2, 0.4), record(1, 1.0, 0.1)]);
        let f = sign_fractions(&all_pos).unwrap();
        assert_eq!((f.frac_pos_vol, f.frac_pos_tr), (Some(1.0), Some(1.0)));
        let balanced = set(vec![record(0, 0.3, -0.3), record(1, -0.3, 0.3)]);
        let f = sign_fractions(&balanced).unwrap();
        assert_eq!((f.frac_pos_vol, f.frac_pos_tr), (Some(0.5), Some(0.5)));
        let mixed = set(vec![
            record(0, 0.3, 0.0),
            record(1, -0.3, 0.0),
            record(2, 0.1, 0.0),
            record(3, 0.0, 0.0),
        ]);
        let f = sign_fractions(&mixed).unwrap();
        assert_eq!(f.frac_pos_vol, Some(2.0 / 3.0));
        assert_eq!(f.frac_pos_tr, None);
        assert!(matches!(sign_fractions(&set(vec![])), Err(Error::Empty(_))));
    }

    #[test]
    fn signals_round_trip_through_csv() {
        let dm = column_matrix(&[vec![3, -1], vec![-7, -2, 4]]);
        let s: SignalSet = compute_imbalances(&dm, 0);
        let mut buf = Vec::new();
        write_signals(&mut buf, std::slice::from_ref(&s)).unwrap();
        let back = read_signal_records::<f64, _>(buf.as_slice()).unwrap();
        assert_eq!(back, vec![(s.period_end, s.records.clone())]);
    }

    fn arb_columns() -> impl Strategy<Value = Vec<Vec<i64>>> {
        proptest::collection::vec(proptest::collection::vec(-50i64..50, 0..12), 1..12)
    }

    proptest! {
        #[test]
        fn bounds_and_identities(cols in arb_columns(), n in 0u32..6) {
            let dm = column_matrix(&cols);
            let s: SignalSet = compute_imbalances(&dm, n);
            for r in &s.records {
                prop_assert!((-1.0..=1.0).contains(&r.i_vol));
                prop_assert!((-1.0..=1.0).contains(&r.i_tr));
                prop_assert_eq!(r.i_vol.abs() == 1.0, r.b_vol == 0 || r.s_vol == 0);
                prop_assert_eq!(r.i_tr.abs() == 1.0, r.b_tr == 0 || r.s_tr == 0);
                let col = dm.column(r.asset).unwrap();
                prop_assert_eq!(r.b_vol as i64 - r.s_vol as i64, col.iter().map(|c| c.1).sum::<i64>());
                prop_assert_eq!(r.n_active as usize, col.len());
            }
            let base: SignalSet = compute_imbalances(&dm, 0);
            prop_assert_eq!(base.with_threshold(n).unwrap(), s);
        }

        #[test]
        fn scaling_a_column_keeps_ratios(col in proptest::collection::vec(-50i64..50, 1..12), k in 1i64..100) {
            let a: SignalSet = compute_imbalances(&column_matrix(std::slice::from_ref(&col)), 0);
            let scaled: Vec<i64> = col.iter().map(|v| v * k).collect();
            let b: SignalSet = compute_imbalances(&column_matrix(&[scaled]), 0);
            prop_assert_eq!(a.records.len(), b.records.len());
            for (x, y) in a.records.iter().zip(&b.records) {
                prop_assert_eq!(x.i_vol, y.i_vol);
                prop_assert_eq!(x.i_tr, y.i_tr);
            }
        }

        #[test]
        fn quantile_ranks_are_nested(cols in arb_columns()) {
            let s: SignalSet = compute_imbalances(&column_matrix(&cols), 0);
            for source in Source::ALL {
                for i in 1..5u32 {
                    let outer = quantile_rank_filter(&s, source, i).unwrap();
                    let inner = quantile_rank_filter(&s, source, i + 1).unwrap();
                    prop_assert!(inner.iter().all(|r| outer.iter().any(|o| o.asset == r.asset)));
                }
            }
        }

        #[test]
        fn survival_is_non_increasing(cols in arb_columns()) {
            let dm = column_matrix(&cols);
            let grid: Vec<u32> = (0..15).collect();
            let curve = survival_curve(&dm, &grid);
            prop_assert!(curve.windows(2).all(|w| w[0].1 >= w[1].1));
            prop_assert_eq!(curve[0].1, dm.assets().len());
        }
    }
}
