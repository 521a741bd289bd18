//! Holdings ingestion: normalized filing rows, per-quarter holdings matrices
//! and quarter-over-quarter difference matrices.
//!
//! Both matrices are sparse. A holdings matrix stores strictly positive share
//! counts keyed by `(fund, issuer)`; a difference matrix stores nonzero signed
//! changes grouped by issuer column, since every downstream signal is a
//! column aggregate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::QuarterCalendar;
use crate::cusip::{Cusip6, Cusip9};
use crate::error::{Error, Result};
use crate::fmt::write_schema_line;

pub const HOLDINGS_HEADER: &str = "period_end,cik,cusip9,other_manager,shares";
pub const TRIPLET_HEADER: &str = "period_end,cik,cusip6,value";

/// Central Index Key of a filing institution.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cik(pub u64);

impl fmt::Display for Cik {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Cik {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cik({})", self.0)
    }
}

impl FromStr for Cik {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .parse::<u64>()
            .map(Cik)
            .map_err(|_| Error::InvalidArgument(format!("CIK must be an integer, got {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldingRecord {
    pub period_end: NaiveDate,
    pub cik: Cik,
    pub cusip9: Cusip9,
    pub other_manager: Option<i64>,
    pub shares: u64,
}

/// A row that failed validation, with its 1-based line number in the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParsedHoldings {
    pub records: Vec<HoldingRecord>,
    pub rejected: Vec<RejectedRow>,
}

/// Reads the normalized holdings CSV.
///
/// Header mismatches and I/O failures abort; individual bad rows are
/// collected in `rejected` and parsing continues.
pub fn parse_holdings<R: Read>(input: R) -> Result<ParsedHoldings> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(input);
    check_header(rdr.headers()?, HOLDINGS_HEADER)?;

    let mut out = ParsedHoldings::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_holding_row(&row) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.rejected.push(RejectedRow { line, reason }),
        }
    }
    Ok(out)
}

pub(crate) fn check_header(found: &csv::StringRecord, expected: &str) -> Result<()> {
    let joined = found.iter().map(str::trim).collect::<Vec<_>>().join(",");
    if joined == expected {
        Ok(())
    } else {
        Err(Error::Header {
            found: joined,
            expected: expected.to_string(),
        })
    }
}

fn parse_holding_row(row: &csv::StringRecord) -> std::result::Result<HoldingRecord, String> {
    if row.len() != 5 {
        return Err(format!("expected 5 fields, found {}", row.len()));
    }
    let period_end = NaiveDate::parse_from_str(row[0].trim(), "%Y-%m-%d")
        .map_err(|e| format!("bad period_end {:?}: {e}", &row[0]))?;
    let cik: Cik = row[1].parse().map_err(|e: Error| e.to_string())?;
    let cusip9: Cusip9 = row[2].trim().parse().map_err(|e: Error| e.to_string())?;
    let other_manager = match row[3].trim() {
        "" => None,
        s => Some(
            s.parse::<i64>()
                .map_err(|_| format!("bad other_manager {s:?}"))?,
        ),
    };
    let raw = row[4].trim();
    let shares = match raw.parse::<i64>() {
        Ok(v) if v < 0 => return Err("negative shares".into()),
        Ok(v) => v as u64,
        Err(_) => return Err(format!("bad shares {raw:?}")),
    };
    Ok(HoldingRecord {
        period_end,
        cik,
        cusip9,
        other_manager,
        shares,
    })
}

/// Fund × issuer share counts at one quarter end. Stored cells are > 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldingsMatrix {
    period_end: NaiveDate,
    funds: BTreeSet<Cik>,
    assets: BTreeSet<Cusip6>,
    cells: BTreeMap<(Cik, Cusip6), u64>,
}

impl HoldingsMatrix {
    /// Builds a matrix from already aggregated cells; zero cells are dropped.
    pub fn from_cells<I>(period_end: NaiveDate, cells: I) -> Self
    where
        I: IntoIterator<Item = ((Cik, Cusip6), u64)>,
    {
        let cells: BTreeMap<_, _> = cells.into_iter().filter(|(_, v)| *v > 0).collect();
        let funds = cells.keys().map(|(f, _)| *f).collect();
        let assets = cells.keys().map(|(_, a)| *a).collect();
        Self {
            period_end,
            funds,
            assets,
            cells,
        }
    }

    pub fn period_end(&self) -> NaiveDate {
        self.period_end
    }

    pub fn funds(&self) -> &BTreeSet<Cik> {
        &self.funds
    }

    pub fn assets(&self) -> &BTreeSet<Cusip6> {
        &self.assets
    }

    pub fn get(&self, fund: Cik, asset: Cusip6) -> u64 {
        self.cells.get(&(fund, asset)).copied().unwrap_or(0)
    }

    pub fn cells(&self) -> impl Iterator<Item = (Cik, Cusip6, u64)> + '_ {
        self.cells.iter().map(|(&(f, a), &v)| (f, a, v))
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Applies a difference matrix, returning the next quarter's holdings.
    pub fn advanced_by(&self, diff: &DiffMatrix) -> Result<HoldingsMatrix> {
        let mut cells: BTreeMap<(Cik, Cusip6), i128> = self
            .cells
            .iter()
            .map(|(&k, &v)| (k, v as i128))
            .collect();
        for (fund, asset, delta) in diff.cells() {
            *cells.entry((fund, asset)).or_insert(0) += delta as i128;
        }
        let mut out = BTreeMap::new();
        for (key, v) in cells {
            if v < 0 {
                return Err(Error::InvalidArgument(format!(
                    "negative holding for fund {} asset {} after applying diff",
                    key.0, key.1
                )));
            }
            if v > 0 {
                out.insert(key, v as u64);
            }
        }
        Ok(HoldingsMatrix::from_cells(diff.period_end(), out))
    }
}

/// Sums shares per `(cik, cusip6)`, discarding the other-manager tag and the
/// issue/check characters of the CUSIP.
pub fn build_holdings_matrix(records: &[HoldingRecord], period_end: NaiveDate) -> Result<HoldingsMatrix> {
    let mut sums: BTreeMap<(Cik, Cusip6), u64> = BTreeMap::new();
    for r in records {
        if r.period_end != period_end {
            return Err(Error::MixedPeriods {
                first: period_end,
                other: r.period_end,
            });
        }
        let cell = sums.entry((r.cik, r.cusip9.issuer())).or_insert(0);
        *cell = cell.checked_add(r.shares).ok_or_else(|| {
            Error::InvalidArgument(format!("share count overflow for fund {}", r.cik))
        })?;
    }
    Ok(HoldingsMatrix::from_cells(period_end, sums))
}

/// Groups records by quarter end and builds one matrix per quarter, in parallel.
pub fn build_all_holdings(records: &[HoldingRecord]) -> Result<Vec<HoldingsMatrix>> {
    let mut groups: BTreeMap<NaiveDate, Vec<HoldingRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.period_end).or_default().push(r.clone());
    }
    groups
        .into_par_iter()
        .map(|(period, recs)| build_holdings_matrix(&recs, period))
        .collect()
}

/// Signed holding changes between two consecutive quarters.
///
/// `assets` is the issuer universe of the two snapshots; `columns` only holds
/// issuers with at least one nonzero change, each sorted by fund.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffMatrix {
    period_end: NaiveDate,
    prev_period_end: NaiveDate,
    assets: BTreeSet<Cusip6>,
    columns: BTreeMap<Cusip6, Vec<(Cik, i64)>>,
    pruned_assets: usize,
}

impl DiffMatrix {
    /// Builds a difference matrix from explicit cells.
    ///
    /// Zero cells are dropped; a repeated `(fund, asset)` key is an error.
    /// Assets that only carry zero cells stay in the universe until pruned.
    pub fn from_cells<I>(period_end: NaiveDate, prev_period_end: NaiveDate, cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Cik, Cusip6, i64)>,
    {
        if prev_period_end >= period_end {
            return Err(Error::NonConsecutive {
                prev: prev_period_end,
                curr: period_end,
            });
        }
        let mut assets = BTreeSet::new();
        let mut map: BTreeMap<Cusip6, BTreeMap<Cik, i64>> = BTreeMap::new();
        for (fund, asset, v) in cells {
            assets.insert(asset);
            if v == 0 {
                continue;
            }
            if map.entry(asset).or_default().insert(fund, v).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate diff cell for fund {fund} asset {asset}"
                )));
            }
        }
        let columns = map
            .into_iter()
            .map(|(a, col)| (a, col.into_iter().collect()))
            .collect();
        Ok(Self {
            period_end,
            prev_period_end,
            assets,
            columns,
            pruned_assets: 0,
        })
    }

    pub fn period_end(&self) -> NaiveDate {
        self.period_end
    }

    pub fn prev_period_end(&self) -> NaiveDate {
        self.prev_period_end
    }

    pub fn assets(&self) -> &BTreeSet<Cusip6> {
        &self.assets
    }

    pub fn pruned_assets(&self) -> usize {
        self.pruned_assets
    }

    pub fn column(&self, asset: Cusip6) -> Option<&[(Cik, i64)]> {
        self.columns.get(&asset).map(Vec::as_slice)
    }

    /// Nonempty columns in ascending issuer order.
    pub fn columns(&self) -> impl Iterator<Item = (Cusip6, &[(Cik, i64)])> + '_ {
        self.columns.iter().map(|(&a, c)| (a, c.as_slice()))
    }

    pub fn get(&self, fund: Cik, asset: Cusip6) -> i64 {
        self.columns
            .get(&asset)
            .and_then(|col| {
                col.binary_search_by_key(&fund, |&(f, _)| f)
                    .ok()
                    .map(|i| col[i].1)
            })
            .unwrap_or(0)
    }

    /// Cells ordered by issuer, then fund.
    pub fn cells(&self) -> impl Iterator<Item = (Cik, Cusip6, i64)> + '_ {
        self.columns
            .iter()
            .flat_map(|(&a, col)| col.iter().map(move |&(f, v)| (f, a, v)))
    }

    pub fn n_cells(&self) -> usize {
        self.columns.values().map(Vec::len).sum()
    }

    pub fn funds(&self) -> BTreeSet<Cik> {
        self.columns
            .values()
            .flat_map(|c| c.iter().map(|&(f, _)| f))
            .collect()
    }

    pub(crate) fn with_pruned_count(mut self, pruned: usize) -> Self {
        self.pruned_assets = pruned;
        self
    }
}

/// `h_curr − h_prev` over the union of both key sets, missing cells read as 0.
pub fn diff_matrices(
    h_curr: &HoldingsMatrix,
    h_prev: &HoldingsMatrix,
    calendar: &QuarterCalendar,
) -> Result<DiffMatrix> {
    calendar.check_consecutive(h_prev.period_end, h_curr.period_end)?;

    let mut columns: BTreeMap<Cusip6, Vec<(Cik, i64)>> = BTreeMap::new();
    let mut prev = h_prev.cells.iter().peekable();
    let mut curr = h_curr.cells.iter().peekable();
    // merge walk over the (fund, asset)-sorted maps
    loop {
        let (key, delta) = match (prev.peek(), curr.peek()) {
            (None, None) => break,
            (Some((&pk, &pv)), None) => {
                prev.next();
                (pk, -(pv as i64))
            }
            (None, Some((&ck, &cv))) => {
                curr.next();
                (ck, cv as i64)
            }
            (Some((&pk, &pv)), Some((&ck, &cv))) => {
                if pk < ck {
                    prev.next();
                    (pk, -(pv as i64))
                } else if ck < pk {
                    curr.next();
                    (ck, cv as i64)
                } else {
                    prev.next();
                    curr.next();
                    (pk, cv as i64 - pv as i64)
                }
            }
        };
        if delta != 0 {
            columns.entry(key.1).or_default().push((key.0, delta));
        }
    }
    // fund-major visit order leaves every column sorted by fund
    let assets = h_prev.assets.union(&h_curr.assets).copied().collect();
    Ok(DiffMatrix {
        period_end: h_curr.period_end,
        prev_period_end: h_prev.period_end,
        assets,
        columns,
        pruned_assets: 0,
    })
}

/// Drops issuers whose column holds no nonzero change.
pub fn prune_zero_columns(d: DiffMatrix) -> DiffMatrix {
    let before = d.assets.len();
    let assets: BTreeSet<Cusip6> = d.columns.keys().copied().collect();
    let removed = before - assets.len();
    let pruned = d.pruned_assets + removed;
    DiffMatrix { assets, ..d }.with_pruned_count(pruned)
}

/// Diffs every calendar-consecutive pair of snapshots and prunes dead columns.
///
/// Snapshots whose predecessor quarter is absent are skipped; their dates are
/// returned alongside the matrices.
pub fn diff_all(
    holdings: &[HoldingsMatrix],
    calendar: &QuarterCalendar,
) -> Result<(Vec<DiffMatrix>, Vec<NaiveDate>)> {
    let by_date: BTreeMap<NaiveDate, &HoldingsMatrix> =
        holdings.iter().map(|h| (h.period_end, h)).collect();
    for &date in by_date.keys() {
        if !calendar.contains(date) {
            return Err(Error::NotInCalendar(date));
        }
    }
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for (&date, &h) in by_date.iter().skip(1) {
        match calendar.previous(date).and_then(|p| by_date.get(&p)) {
            Some(&prev) => pairs.push((h, prev)),
            None => skipped.push(date),
        }
    }
    let diffs = pairs
        .into_par_iter()
        .map(|(curr, prev)| diff_matrices(curr, prev, calendar).map(prune_zero_columns))
        .collect::<Result<Vec<_>>>()?;
    Ok((diffs, skipped))
}

/// Writes holdings matrices as sparse triplets.
pub fn write_holdings_triplets<W: Write>(out: W, matrices: &[HoldingsMatrix]) -> Result<()> {
    let mut out = out;
    write_schema_line(&mut out, "holdings-triplets", 1)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIPLET_HEADER.split(','))?;
    for m in matrices {
        let date = m.period_end.to_string();
        for (f, a, v) in m.cells() {
            w.write_record([date.as_str(), &f.to_string(), a.as_str(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes difference matrices as sparse triplets (signed values).
pub fn write_diff_triplets<W: Write>(out: W, diffs: &[DiffMatrix]) -> Result<()> {
    let mut out = out;
    write_schema_line(&mut out, "diff-triplets", 1)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIPLET_HEADER.split(','))?;
    for d in diffs {
        let date = d.period_end.to_string();
        for (f, a, v) in d.cells() {
            w.write_record([date.as_str(), &f.to_string(), a.as_str(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Raw `(period_end, cik, cusip6, value)` triplets.
pub fn read_triplets<R: Read>(input: R) -> Result<Vec<(NaiveDate, Cik, Cusip6, i64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    check_header(rdr.headers()?, TRIPLET_HEADER)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| Error::Row { line, reason };
        if row.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", row.len())));
        }
        let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d")
            .map_err(|e| bad(format!("bad period_end: {e}")))?;
        let cik: Cik = row[1].parse().map_err(|e: Error| bad(e.to_string()))?;
        let asset: Cusip6 = row[2].parse().map_err(|e: Error| bad(e.to_string()))?;
        let value: i64 = row[3]
            .parse()
            .map_err(|_| bad(format!("bad value {:?}", &row[3])))?;
        out.push((date, cik, asset, value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn a(s: &str) -> Cusip6 {
        s.parse().unwrap()
    }

    fn cal() -> QuarterCalendar {
        QuarterCalendar::calendar_quarters(d(2021, 1, 1), d(2021, 12, 31)).unwrap()
    }

    fn rec(period: NaiveDate, cik: u64, cusip: &str, om: Option<i64>, shares: u64) -> HoldingRecord {
        HoldingRecord {
            period_end: period,
            cik: Cik(cik),
            cusip9: cusip.parse().unwrap(),
            other_manager: om,
            shares,
        }
    }

    #[test]
    fn parses_documented_row() {
        let csv = "period_end,cik,cusip9,other_manager,shares\n2021-09-30,1234,037833100,1,5000\n";
        let parsed = parse_holdings(csv.as_bytes()).unwrap();
        assert!(parsed.rejected.is_empty());
        assert_eq!(
            parsed.records,
            vec![rec(d(2021, 9, 30), 1234, "037833100", Some(1), 5000)]
        );
    }

    #[test]
    fn rejects_bad_rows_with_line_numbers() {
        let csv = "period_end,cik,cusip9,other_manager,shares\n\
                   2021-09-30,1,037833100,,-5\n\
                   2021-09-30,1,03783310,,5\n\
                   2021-09-30,x,037833100,,5\n\
                   2021-09-30,1,037833100,,7\n";
        let parsed = parse_holdings(csv.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.records[0].other_manager, None);
        let lines: Vec<u64> = parsed.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
        assert_eq!(parsed.rejected[0].reason, "negative shares");
        assert!(parsed.rejected[1].reason.contains("9 characters"));
    }

    #[test]
    fn empty_stream_yields_nothing() {
        let parsed = parse_holdings("period_end,cik,cusip9,other_manager,shares\n".as_bytes()).unwrap();
        assert!(parsed.records.is_empty() && parsed.rejected.is_empty());
    }

    #[test]
    fn wrong_header_is_an_error() {
        assert!(matches!(
            parse_holdings("date,cik,cusip,shares\n".as_bytes()),
            Err(Error::Header { .. })
        ));
    }

    #[test]
    fn aggregates_share_classes_and_managers() {
        let p = d(2021, 9, 30);
        let recs = vec![
            rec(p, 1, "037833100", Some(1), 100),
            rec(p, 1, "037833209", Some(2), 50),
        ];
        let h = build_holdings_matrix(&recs, p).unwrap();
        assert_eq!(h.n_cells(), 1);
        assert_eq!(h.get(Cik(1), a("037833")), 150);

        let single = build_holdings_matrix(&[rec(p, 7, "594918104", None, 10)], p).unwrap();
        assert_eq!(single.cells().collect::<Vec<_>>(), vec![(Cik(7), a("594918"), 10)]);
    }

    #[test]
    fn mixed_periods_rejected() {
        let recs = vec![
            rec(d(2021, 6, 30), 1, "037833100", None, 1),
            rec(d(2021, 9, 30), 1, "037833100", None, 1),
        ];
        assert!(matches!(
            build_holdings_matrix(&recs, d(2021, 6, 30)),
            Err(Error::MixedPeriods { .. })
        ));
    }

    #[test]
    fn zero_share_groups_omitted() {
        let p = d(2021, 9, 30);
        let h = build_holdings_matrix(&[rec(p, 1, "037833100", None, 0)], p).unwrap();
        assert_eq!(h.n_cells(), 0);
        assert!(h.funds().is_empty());
    }

    #[test]
    fn diff_cases() {
        let prev = HoldingsMatrix::from_cells(
            d(2021, 6, 30),
            [((Cik(1), a("AAAAAA")), 100), ((Cik(1), a("BBBBBB")), 100), ((Cik(2), a("CCCCCC")), 100)],
        );
        let curr = HoldingsMatrix::from_cells(
            d(2021, 9, 30),
            [((Cik(1), a("AAAAAA")), 150), ((Cik(2), a("CCCCCC")), 100)],
        );
        let diff = diff_matrices(&curr, &prev, &cal()).unwrap();
        assert_eq!(diff.get(Cik(1), a("AAAAAA")), 50);
        assert_eq!(diff.get(Cik(1), a("BBBBBB")), -100);
        assert_eq!(diff.get(Cik(2), a("CCCCCC")), 0);
        assert_eq!(diff.n_cells(), 2);
        assert!(diff.column(a("CCCCCC")).is_none());
        assert_eq!(diff.assets().len(), 3);
        assert_eq!(diff.prev_period_end(), d(2021, 6, 30));

        let pruned = prune_zero_columns(diff);
        assert_eq!(pruned.assets().len(), 2);
        assert_eq!(pruned.pruned_assets(), 1);
    }

    #[test]
    fn diff_ordering_checked_against_calendar() {
        let q2 = HoldingsMatrix::from_cells(d(2021, 6, 30), []);
        let q3 = HoldingsMatrix::from_cells(d(2021, 9, 30), []);
        let q4 = HoldingsMatrix::from_cells(d(2021, 12, 31), []);
        assert!(diff_matrices(&q3, &q2, &cal()).is_ok());
        assert!(matches!(diff_matrices(&q2, &q3, &cal()), Err(Error::NonConsecutive { .. })));
        assert!(matches!(diff_matrices(&q4, &q2, &cal()), Err(Error::NonConsecutive { .. })));
    }

    #[test]
    fn prune_counts_dead_column_on_5x4_fixture() {
        // assets A..D over funds 1..5; column C only carries zeros
        let grid: [[i64; 4]; 5] = [
            [3, -1, 0, 0],
            [0, 2, 0, 0],
            [-4, 0, 0, 5],
            [1, 0, 0, 0],
            [0, 0, 0, -2],
        ];
        let names = ["AAAAAA", "BBBBBB", "CCCCCC", "DDDDDD"];
        let cells = grid.iter().enumerate().flat_map(|(f, row)| {
            row.iter()
                .enumerate()
                .map(move |(j, &v)| (Cik(f as u64 + 1), a(names[j]), v))
        });
        let dm = DiffMatrix::from_cells(d(2021, 9, 30), d(2021, 6, 30), cells).unwrap();
        assert_eq!(dm.assets().len(), 4);
        let pruned = prune_zero_columns(dm);
        assert_eq!(pruned.assets().len(), 3);
        assert_eq!(pruned.pruned_assets(), 1);
        assert!(!pruned.assets().contains(&a("CCCCCC")));
        let again = prune_zero_columns(pruned.clone());
        assert_eq!(again, pruned);
    }

    #[test]
    fn triplets_round_trip() {
        let dm = DiffMatrix::from_cells(
            d(2021, 9, 30),
            d(2021, 6, 30),
            [(Cik(2), a("BBBBBB"), -3), (Cik(1), a("AAAAAA"), 5)],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_diff_triplets(&mut buf, std::slice::from_ref(&dm)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema: diff-triplets/1\nperiod_end,cik,cusip6,value\n"));
        let back = read_triplets(buf.as_slice()).unwrap();
        assert_eq!(
            back,
            vec![
                (d(2021, 9, 30), Cik(1), a("AAAAAA"), 5),
                (d(2021, 9, 30), Cik(2), a("BBBBBB"), -3)
            ]
        );
    }

    fn arb_matrix(period: NaiveDate) -> impl Strategy<Value = HoldingsMatrix> {
        proptest::collection::btree_map((0u64..8, 0usize..6), 0u64..1000, 0..30).prop_map(move |m| {
            HoldingsMatrix::from_cells(
                period,
                m.into_iter().map(|((f, j), v)| {
                    ((Cik(f), a(["AAAAAA", "BBBBBB", "CCCCCC", "DDDDDD", "EEEEEE", "FFFFFF"][j])), v)
                }),
            )
        })
    }

    proptest! {
        #[test]
        fn reconstruction_is_exact(
            prev in arb_matrix(NaiveDate::from_ymd_opt(2021, 6, 30).unwrap()),
            curr in arb_matrix(NaiveDate::from_ymd_opt(2021, 9, 30).unwrap()),
        ) {
            let diff = diff_matrices(&curr, &prev, &cal()).unwrap();
            prop_assert!(diff.cells().all(|(_, _, v)| v != 0));
            prop_assert_eq!(prev.advanced_by(&diff).unwrap(), curr);
            let pruned = prune_zero_columns(diff);
            prop_assert_eq!(prune_zero_columns(pruned.clone()), pruned);
        }

        #[test]
        fn matrix_is_order_independent(
            rows in proptest::collection::vec((0u64..5, 0usize..3, 0u64..500), 0..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let p = NaiveDate::from_ymd_opt(2021, 9, 30).unwrap();
            let cusips = ["037833100", "037833209", "594918104"];
            let recs: Vec<_> = rows.iter().map(|&(f, j, s)| rec(p, f, cusips[j], None, s)).collect();
            let mut shuffled = recs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(
                build_holdings_matrix(&recs, p).unwrap(),
                build_holdings_matrix(&shuffled, p).unwrap()
            );
        }
    }
}
