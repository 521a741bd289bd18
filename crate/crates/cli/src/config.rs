//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use holdflow::market::{QuantileMethod, DEFAULT_BENCHMARK};
use holdflow::stats::WinsorScope;
use holdflow::strategy::GridSpec;
use holdflow::QuarterCalendar;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "HOLDFLOW_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub holdings: Option<PathBuf>,
    pub returns: Option<PathBuf>,
    pub sectors: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            holdings: None,
            returns: None,
            sectors: None,
            output: PathBuf::from("out"),
        }
    }
}

/// First and last quarter of the study; every calendar quarter in between
/// is expected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalendarSpec {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub calendar: Option<CalendarSpec>,
    pub grid: GridSpec,
    /// Thresholds for the impact table; the backtest thresholds when empty.
    pub impact_thresholds: Vec<u32>,
    /// Largest N and step of the survival-curve grid.
    pub survival_max: u32,
    pub survival_step: u32,
    pub significance: f64,
    pub benchmark: String,
    pub winsor_fraction: f64,
    pub winsor_method: QuantileMethod,
    pub winsor_scope: WinsorScope,
    /// Reject holdings rows whose CUSIP check digit is wrong.
    pub check_digits: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            calendar: None,
            grid: GridSpec::default(),
            impact_thresholds: Vec::new(),
            survival_max: 500,
            survival_step: 50,
            significance: 0.05,
            benchmark: DEFAULT_BENCHMARK.to_string(),
            winsor_fraction: 0.10,
            winsor_method: QuantileMethod::default(),
            winsor_scope: WinsorScope::default(),
            check_digits: false,
            seed: 7,
        }
    }
}

impl RunConfig {
    /// Parses a TOML file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(e).context(format!("reading config {}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::input(e).context(format!("parsing config {}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.rebase(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every grid value against the module preconditions.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::input(anyhow::anyhow!(msg)));
        let g = &self.grid;
        if g.sources.is_empty() || g.thresholds.is_empty() || g.quantiles.is_empty() || g.directions.is_empty() {
            return bad("grid needs at least one source, threshold, quantile and direction".into());
        }
        if g.demean.is_empty() {
            return bad("grid.demean must list false, true or both".into());
        }
        if g.horizons.is_empty() && g.conditioned_horizons.is_empty() {
            return bad("grid has no horizons".into());
        }
        if g.quantiles.contains(&0) {
            return bad("quantile ranks start at 1".into());
        }
        for &m in g.horizons.iter().chain(&g.conditioned_horizons).chain(&g.sector_horizons) {
            if m == 0 {
                return bad("horizons must be positive".into());
            }
        }
        if !g.conditioned_horizons.is_empty() && g.lookbacks.is_empty() {
            return bad("conditioned horizons given without lookbacks".into());
        }
        if g.lookbacks.contains(&0) {
            return bad("lookbacks must be positive".into());
        }
        if !g.sectors.is_empty() && (g.sector_thresholds.is_empty() || g.sector_horizons.is_empty()) {
            return bad("sector runs need sector_thresholds and sector_horizons".into());
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return bad(format!("significance {} outside (0, 1)", self.significance));
        }
        if !(0.0..0.5).contains(&self.winsor_fraction) {
            return bad(format!("winsor_fraction {} outside [0, 0.5)", self.winsor_fraction));
        }
        if self.survival_step == 0 {
            return bad("survival_step must be positive".into());
        }
        if self.benchmark.trim().is_empty() {
            return bad("benchmark id is empty".into());
        }
        if let Some(c) = self.calendar {
            if c.end < c.start {
                return bad(format!("calendar end {} precedes start {}", c.end, c.start));
            }
        }
        for c in self.grid.expand() {
            c.validate().map_err(CliError::from)?;
        }
        Ok(())
    }

    pub fn impact_thresholds(&self) -> Vec<u32> {
        if self.impact_thresholds.is_empty() {
            self.grid.thresholds.clone()
        } else {
            self.impact_thresholds.clone()
        }
    }

    pub fn survival_grid(&self) -> Vec<u32> {
        (0..=self.survival_max).step_by(self.survival_step as usize).collect()
    }

    /// The configured quarter calendar, or every calendar quarter spanned by
    /// `dates`.
    pub fn quarter_calendar(&self, dates: &[NaiveDate]) -> CliResult<QuarterCalendar> {
        let (start, end) = match self.calendar {
            Some(c) => (c.start, c.end),
            None => match (dates.iter().min(), dates.iter().max()) {
                (Some(&a), Some(&b)) => (a, b),
                _ => return Err(CliError::input(anyhow::anyhow!("no holdings periods"))),
            },
        };
        Ok(QuarterCalendar::calendar_quarters(start, end)?)
    }

    pub fn required(&self, which: &str, path: &Option<PathBuf>) -> CliResult<PathBuf> {
        path.clone()
            .ok_or_else(|| CliError::input(anyhow::anyhow!("no {which} path configured")))
    }
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.holdings.as_mut().map(fix);
        self.returns.as_mut().map(fix);
        self.sectors.as_mut().map(fix);
        fix(&mut self.output);
    }
}
