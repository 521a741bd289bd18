//! SIC major-group sectors: issuer mapping, sector-restricted signals and
//! per-sector popularity series.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cusip::Cusip6;
use crate::error::{Error, Result};
use crate::fmt::{float, write_schema_line};
use crate::holdings::{check_header, DiffMatrix, RejectedRow};
use crate::imbalance::SignalSet;
use crate::market::ReturnsPanel;
use crate::scalar::{mean, Scalar};

pub const SECTOR_HEADER: &str = "cusip6,label";
pub const POPULARITY_HEADER: &str = "period_end,sector,mean_active_funds,cumulative_mer";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sector {
    #[serde(rename = "agric")]
    Agriculture,
    #[serde(rename = "mining")]
    Mining,
    #[serde(rename = "constr")]
    Construction,
    #[serde(rename = "manuf")]
    Manufacturing,
    #[serde(rename = "transp")]
    Transportation,
    #[serde(rename = "wholesale")]
    Wholesale,
    #[serde(rename = "retail")]
    Retail,
    #[serde(rename = "fin-ins-RE")]
    FinanceInsuranceRealEstate,
    #[serde(rename = "services")]
    Services,
    #[serde(rename = "pubAdm")]
    PublicAdministration,
}

impl Sector {
    pub const ALL: [Sector; 10] = [
        Sector::Agriculture,
        Sector::Mining,
        Sector::Construction,
        Sector::Manufacturing,
        Sector::Transportation,
        Sector::Wholesale,
        Sector::Retail,
        Sector::FinanceInsuranceRealEstate,
        Sector::Services,
        Sector::PublicAdministration,
    ];

    /// Short label used in files and reports.
    pub fn label(self) -> &'static str {
        match self {
            Sector::Agriculture => "agric",
            Sector::Mining => "mining",
            Sector::Construction => "constr",
            Sector::Manufacturing => "manuf",
            Sector::Transportation => "transp",
            Sector::Wholesale => "wholesale",
            Sector::Retail => "retail",
            Sector::FinanceInsuranceRealEstate => "fin-ins-RE",
            Sector::Services => "services",
            Sector::PublicAdministration => "pubAdm",
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Sector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Sector::ALL
            .into_iter()
            .find(|x| x.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sector label {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SectorMap {
    entries: BTreeMap<Cusip6, Sector>,
}

impl SectorMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a mapping; re-adding the same label is a no-op.
    pub fn insert(&mut self, asset: Cusip6, sector: Sector) -> Result<()> {
        match self.entries.insert(asset, sector) {
            Some(prev) if prev != sector => Err(Error::ConflictingSector {
                cusip6: asset.to_string(),
                first: prev.to_string(),
                second: sector.to_string(),
            }),
            _ => Ok(()),
        }
    }

    pub fn get(&self, asset: Cusip6) -> Option<Sector> {
        self.entries.get(&asset).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cusip6, Sector)> + '_ {
        self.entries.iter().map(|(&a, &s)| (a, s))
    }

    /// How many of `assets` carry a sector label.
    pub fn coverage<'a>(&self, assets: impl IntoIterator<Item = &'a Cusip6>) -> Coverage {
        let (mut mapped, mut total) = (0, 0);
        for a in assets {
            total += 1;
            mapped += self.entries.contains_key(a) as usize;
        }
        Coverage { mapped, total }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Coverage {
    pub mapped: usize,
    pub total: usize,
}

impl Coverage {
    pub fn ratio(&self) -> Option<f64> {
        (self.total > 0).then(|| self.mapped as f64 / self.total as f64)
    }
}

#[derive(Debug, Default)]
pub struct LoadedSectors {
    pub map: SectorMap,
    pub rejected: Vec<RejectedRow>,
}

/// Reads the `cusip6,label` CSV. Rows with a non-canonical label or a bad
/// identifier are rejected individually; conflicting labels for one issuer
/// abort the load.
pub fn load_sector_map<R: Read>(input: R) -> Result<LoadedSectors> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(input);
    check_header(rdr.headers()?, SECTOR_HEADER)?;
    let mut out = LoadedSectors::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let parsed = (row.len() == 2)
            .then_some(())
            .ok_or_else(|| format!("expected 2 fields, found {}", row.len()))
            .and_then(|_| {
                let asset: Cusip6 = row[0].trim().parse().map_err(|e: Error| e.to_string())?;
                let sector: Sector = row[1].trim().parse().map_err(|e: Error| e.to_string())?;
                Ok((asset, sector))
            });
        match parsed {
            Ok((asset, sector)) => out.map.insert(asset, sector)?,
            Err(reason) => out.rejected.push(RejectedRow { line, reason }),
        }
    }
    Ok(out)
}

/// Records whose issuer maps to `sector`; unmapped issuers are dropped.
pub fn sector_filter<T: Scalar>(signals: &SignalSet<T>, map: &SectorMap, sector: Sector) -> SignalSet<T> {
    SignalSet {
        records: signals
            .records
            .iter()
            .filter(|r| map.get(r.asset) == Some(sector))
            .cloned()
            .collect(),
        ..signals.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopularityPoint<T: Scalar = f64> {
    pub period_end: NaiveDate,
    pub sector: Sector,
    pub mean_active_funds: T,
    /// Running sum of the sector's equal-weight mean quarterly MER.
    pub cumulative_mer: T,
    /// Assets that contributed a return to this period's mean.
    pub n_with_returns: usize,
}

/// Average number of active funds per sector issuer, with the running sum of
/// the equal-weight sector MER over each quarter.
///
/// Averages run over issuers present in that quarter's difference matrix.
/// Issuers without a full quarter of returns are left out of the MER mean;
/// a quarter where none has returns adds zero.
pub fn popularity_series<T: Scalar>(
    diffs: &[DiffMatrix],
    map: &SectorMap,
    panel: &ReturnsPanel<T>,
) -> Result<Vec<PopularityPoint<T>>> {
    if diffs.is_empty() {
        return Err(Error::Empty("difference matrices"));
    }
    let mut ordered: Vec<&DiffMatrix> = diffs.iter().collect();
    ordered.sort_by_key(|d| d.period_end());
    let mut cumulative: BTreeMap<Sector, T> = BTreeMap::new();
    let mut out = Vec::new();
    for d in ordered {
        let mut activity: BTreeMap<Sector, Vec<T>> = BTreeMap::new();
        let mut mers: BTreeMap<Sector, Vec<T>> = BTreeMap::new();
        for &asset in d.assets() {
            let Some(sector) = map.get(asset) else { continue };
            let n = d.column(asset).map_or(0, |c| c.len());
            activity.entry(sector).or_default().push(T::of_count(n));
            if let Ok(w) = panel.quarterly_return(asset.as_str(), d.prev_period_end(), d.period_end()) {
                mers.entry(sector).or_default().push(w.mer);
            }
        }
        for (sector, counts) in activity {
            let sector_mers = mers.remove(&sector).unwrap_or_default();
            let step = mean(&sector_mers).unwrap_or_else(T::zero);
            let cum = cumulative.entry(sector).or_insert_with(T::zero);
            *cum = *cum + step;
            out.push(PopularityPoint {
                period_end: d.period_end(),
                sector,
                mean_active_funds: mean(&counts).expect("non-empty"),
                cumulative_mer: *cum,
                n_with_returns: sector_mers.len(),
            });
        }
    }
    Ok(out)
}

pub fn write_popularity<T: Scalar, W: Write>(out: W, points: &[PopularityPoint<T>]) -> Result<()> {
    let mut out = out;
    write_schema_line(&mut out, "popularity", 1)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(POPULARITY_HEADER.split(','))?;
    for p in points {
        w.write_record([
            p.period_end.to_string(),
            p.sector.to_string(),
            float(p.mean_active_funds),
            float(p.cumulative_mer),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Issuers of `signals` without a sector label.
pub fn unmapped_assets<T: Scalar>(signals: &SignalSet<T>, map: &SectorMap) -> BTreeSet<Cusip6> {
    signals
        .records
        .iter()
        .filter(|r| map.get(r.asset).is_none())
        .map(|r| r.asset)
        .collect()
}
