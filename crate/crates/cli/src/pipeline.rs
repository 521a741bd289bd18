//! Subcommand implementations. Every stage reads its inputs from files and
//! writes a fixed set of files under the output directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use holdflow::fmt::{float, opt_float, write_schema_line};
use holdflow::holdings::{
    build_all_holdings, diff_all, parse_holdings, read_triplets, write_diff_triplets, write_holdings_triplets,
    RejectedRow,
};
use holdflow::imbalance::{
    compute_imbalances, fit_exponential_decay, read_signal_records, sign_fractions, survival_curve, write_signals,
};
use holdflow::market::load_returns;
use holdflow::sector::{load_sector_map, popularity_series, sector_filter, write_popularity};
use holdflow::stats::{
    deflate_reports, impact_table, significance_filter, write_impact_by_period, write_impact_table, ImpactOptions,
    ImpactTable, ReturnKind, EULER_GAMMA,
};
use holdflow::strategy::run_backtest;
use holdflow::{BacktestReport, DiffMatrix, ReturnsPanel, SectorMap, SignalSet};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Context};

pub const INGEST_DIR: &str = "ingest";
pub const IMBALANCE_DIR: &str = "imbalance";
pub const BACKTEST_DIR: &str = "backtest";
pub const IMPACT_DIR: &str = "impact";
pub const SECTORS_DIR: &str = "sectors";
pub const MANIFEST: &str = "manifest.csv";

const DIFF_PERIODS_HEADER: &str = "period_end,prev_period_end,assets,cells,pruned_assets";
const PERIODS_HEADER: &str = "period_end,prev_period_end,records";

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(e).context(format!("opening {}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).at(format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).map_err(|e| CliError::computation(e).context(format!("creating {}", path.display())))?;
    Ok(BufWriter::new(f))
}

/// CSV writer whose file starts with the schema comment line.
fn csv_out(path: &Path, schema: &str, header: &str) -> CliResult<csv::Writer<BufWriter<File>>> {
    let mut f = create(path)?;
    write_schema_line(&mut f, schema, 1)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header.split(','))
        .map_err(|e| CliError::computation(e).context(format!("writing {}", path.display())))?;
    Ok(w)
}

fn finish<W: Write>(w: csv::Writer<W>, path: &Path) -> CliResult<()> {
    w.into_inner()
        .map_err(|e| CliError::computation(anyhow::anyhow!("{e}")))
        .and_then(|mut inner| inner.flush().map_err(CliError::computation))
        .map_err(|e| e.context(format!("writing {}", path.display())))
}

fn row<W: Write>(w: &mut csv::Writer<W>, fields: &[String]) -> CliResult<()> {
    w.write_record(fields).map_err(CliError::computation)
}

fn write_with<F>(path: &Path, f: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> holdflow::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).map_err(|e| CliError::computation(e).context(format!("writing {}", path.display())))?;
    w.flush().map_err(CliError::computation)
}

fn write_kv(path: &Path, schema: &str, pairs: &[(&str, String)]) -> CliResult<()> {
    let mut w = csv_out(path, schema, "key,value")?;
    for (k, v) in pairs {
        row(&mut w, &[k.to_string(), v.clone()])?;
    }
    finish(w, path)
}

fn stage(cfg: &RunConfig, dir: &str, file: &str) -> PathBuf {
    cfg.paths.output.join(dir).join(file)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestSummary {
    pub rows_read: usize,
    pub rows_rejected: usize,
    pub snapshots: usize,
    pub diff_periods: usize,
    pub skipped_periods: usize,
    pub diff_cells: usize,
    pub assets_before_pruning: usize,
    pub pruned_columns: usize,
}

impl IngestSummary {
    pub fn pruned_fraction(&self) -> Option<f64> {
        (self.assets_before_pruning > 0).then(|| self.pruned_columns as f64 / self.assets_before_pruning as f64)
    }
}

/// Parses holdings, builds per-quarter matrices and their differences.
pub fn cmd_ingest(cfg: &RunConfig) -> CliResult<IngestSummary> {
    let path = cfg.required("holdings", &cfg.paths.holdings)?;
    let parsed = parse_holdings(open(&path)?).at(format!("reading {}", path.display()))?;
    let mut rejected: Vec<RejectedRow> = parsed.rejected;
    let mut records = Vec::with_capacity(parsed.records.len());
    for r in parsed.records {
        if cfg.check_digits && !r.cusip9.has_valid_check_digit() {
            rejected.push(RejectedRow {
                line: 0,
                reason: format!("check digit of {}", r.cusip9),
            });
        } else {
            records.push(r);
        }
    }
    let rows_read = records.len() + rejected.len();
    let holdings = build_all_holdings(&records).at(format!("building matrices from {}", path.display()))?;
    let dates: Vec<NaiveDate> = holdings.iter().map(|h| h.period_end()).collect();
    let calendar = cfg.quarter_calendar(&dates)?;
    let (diffs, skipped) = diff_all(&holdings, &calendar)?;

    let summary = IngestSummary {
        rows_read,
        rows_rejected: rejected.len(),
        snapshots: holdings.len(),
        diff_periods: diffs.len(),
        skipped_periods: skipped.len(),
        diff_cells: diffs.iter().map(|d| d.n_cells()).sum(),
        assets_before_pruning: diffs.iter().map(|d| d.assets().len() + d.pruned_assets()).sum(),
        pruned_columns: diffs.iter().map(|d| d.pruned_assets()).sum(),
    };

    write_with(&stage(cfg, INGEST_DIR, "holdings.csv"), |w| write_holdings_triplets(w, &holdings))?;
    write_with(&stage(cfg, INGEST_DIR, "diffs.csv"), |w| write_diff_triplets(w, &diffs))?;
    let p = stage(cfg, INGEST_DIR, "diff_periods.csv");
    let mut w = csv_out(&p, "diff-periods", DIFF_PERIODS_HEADER)?;
    for d in &diffs {
        row(
            &mut w,
            &[
                d.period_end().to_string(),
                d.prev_period_end().to_string(),
                d.assets().len().to_string(),
                d.n_cells().to_string(),
                d.pruned_assets().to_string(),
            ],
        )?;
    }
    finish(w, &p)?;
    let p = stage(cfg, INGEST_DIR, "rejected.csv");
    let mut w = csv_out(&p, "rejected-rows", "line,reason")?;
    for r in &rejected {
        row(&mut w, &[r.line.to_string(), r.reason.clone()])?;
    }
    finish(w, &p)?;
    let skipped: Vec<String> = skipped.iter().map(|d| d.to_string()).collect();
    write_kv(
        &stage(cfg, INGEST_DIR, "ingest_summary.csv"),
        "ingest-summary",
        &[
            ("rows_read", summary.rows_read.to_string()),
            ("rows_rejected", summary.rows_rejected.to_string()),
            ("snapshots", summary.snapshots.to_string()),
            ("diff_periods", summary.diff_periods.to_string()),
            ("skipped_periods", skipped.join(" ")),
            ("diff_cells", summary.diff_cells.to_string()),
            ("assets_before_pruning", summary.assets_before_pruning.to_string()),
            ("pruned_columns", summary.pruned_columns.to_string()),
            ("pruned_fraction", opt_float(summary.pruned_fraction())),
            // full filing universes typically lose 30 to 40 percent of issuer columns here
            ("pruned_fraction_typical", "0.3-0.4".into()),
        ],
    )?;
    Ok(summary)
}

/// Reads the difference matrices written by `ingest`.
pub fn load_diffs(cfg: &RunConfig) -> CliResult<Vec<DiffMatrix>> {
    let p = stage(cfg, INGEST_DIR, "diff_periods.csv");
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(open(&p)?);
    let mut periods = Vec::new();
    for r in rdr.records() {
        let r = r.map_err(|e| CliError::input(e).context(format!("reading {}", p.display())))?;
        let date = |i: usize| {
            NaiveDate::parse_from_str(&r[i], "%Y-%m-%d")
                .map_err(|e| CliError::input(e).context(format!("bad date in {}", p.display())))
        };
        periods.push((date(0)?, date(1)?));
    }
    let t = stage(cfg, INGEST_DIR, "diffs.csv");
    let mut cells: BTreeMap<NaiveDate, Vec<_>> = BTreeMap::new();
    for (d, fund, asset, v) in read_triplets(open(&t)?).at(format!("reading {}", t.display()))? {
        cells.entry(d).or_default().push((fund, asset, v));
    }
    periods
        .into_iter()
        .map(|(end, prev)| {
            let c = cells.remove(&end).unwrap_or_default();
            DiffMatrix::from_cells(end, prev, c).at(format!("rebuilding {end}"))
        })
        .collect()
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ImbalanceSummary {
    pub periods: usize,
    pub records: usize,
}

/// Computes unthresholded signals and the activity diagnostics.
pub fn cmd_imbalance(cfg: &RunConfig) -> CliResult<ImbalanceSummary> {
    let diffs = load_diffs(cfg)?;
    let sets: Vec<SignalSet> = diffs.par_iter().map(|d| compute_imbalances(d, 0)).collect();
    write_with(&stage(cfg, IMBALANCE_DIR, "signals.csv"), |w| write_signals(w, &sets))?;

    let p = stage(cfg, IMBALANCE_DIR, "periods.csv");
    let mut w = csv_out(&p, "signal-periods", PERIODS_HEADER)?;
    for s in &sets {
        row(&mut w, &[s.period_end.to_string(), s.prev_period_end.to_string(), s.len().to_string()])?;
    }
    finish(w, &p)?;

    let grid = cfg.survival_grid();
    let p = stage(cfg, IMBALANCE_DIR, "survival.csv");
    let mut w = csv_out(&p, "survival", "period_end,N,assets")?;
    let p2 = stage(cfg, IMBALANCE_DIR, "decay_fit.csv");
    let mut w2 = csv_out(&p2, "decay-fit", "period_end,intercept,rate,r_squared")?;
    for d in &diffs {
        let curve = survival_curve(d, &grid);
        for (n, c) in &curve {
            row(&mut w, &[d.period_end().to_string(), n.to_string(), c.to_string()])?;
        }
        let fit = fit_exponential_decay::<f64>(&curve).ok();
        row(
            &mut w2,
            &[
                d.period_end().to_string(),
                opt_float(fit.map(|f| f.intercept)),
                opt_float(fit.map(|f| f.rate)),
                opt_float(fit.map(|f| f.r_squared)),
            ],
        )?;
    }
    finish(w, &p)?;
    finish(w2, &p2)?;

    let mut thresholds = cfg.impact_thresholds();
    thresholds.extend(&cfg.grid.thresholds);
    thresholds.push(0);
    thresholds.sort_unstable();
    thresholds.dedup();
    let p = stage(cfg, IMBALANCE_DIR, "sign_fractions.csv");
    let mut w = csv_out(&p, "sign-fractions", "period_end,N,records,frac_pos_vol,frac_pos_tr")?;
    for s in &sets {
        for &n in &thresholds {
            let t = s.with_threshold(n)?;
            let f = sign_fractions(&t).ok();
            row(
                &mut w,
                &[
                    s.period_end.to_string(),
                    n.to_string(),
                    t.len().to_string(),
                    opt_float(f.and_then(|f| f.frac_pos_vol)),
                    opt_float(f.and_then(|f| f.frac_pos_tr)),
                ],
            )?;
        }
    }
    finish(w, &p)?;
    Ok(ImbalanceSummary {
        periods: sets.len(),
        records: sets.iter().map(|s| s.len()).sum(),
    })
}

/// Reads the N = 0 signal sets written by `imbalance`.
pub fn load_signals(cfg: &RunConfig) -> CliResult<Vec<SignalSet>> {
    let p = stage(cfg, IMBALANCE_DIR, "periods.csv");
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(open(&p)?);
    let mut sets = Vec::new();
    for r in rdr.records() {
        let r = r.map_err(|e| CliError::input(e).context(format!("reading {}", p.display())))?;
        let date = |i: usize| {
            NaiveDate::parse_from_str(&r[i], "%Y-%m-%d")
                .map_err(|e| CliError::input(e).context(format!("bad date in {}", p.display())))
        };
        sets.push(SignalSet {
            period_end: date(0)?,
            prev_period_end: date(1)?,
            records: Vec::new(),
            n_threshold: 0,
            demeaned: false,
            demean_offsets: None,
        });
    }
    let s = stage(cfg, IMBALANCE_DIR, "signals.csv");
    let mut by_date: BTreeMap<NaiveDate, Vec<_>> =
        read_signal_records(open(&s)?).at(format!("reading {}", s.display()))?.into_iter().collect();
    for set in &mut sets {
        set.records = by_date.remove(&set.period_end).unwrap_or_default();
    }
    if let Some(d) = by_date.keys().next() {
        return Err(CliError::input(anyhow::anyhow!("signals for {d} have no entry in {}", p.display())));
    }
    Ok(sets)
}

pub fn load_panel(cfg: &RunConfig) -> CliResult<ReturnsPanel> {
    let path = cfg.required("returns", &cfg.paths.returns)?;
    load_returns(open(&path)?, &cfg.benchmark).at(format!("reading {}", path.display()))
}

/// The sector map, if one is configured.
pub fn load_sectors(cfg: &RunConfig) -> CliResult<Option<(SectorMap, usize)>> {
    match &cfg.paths.sectors {
        None => Ok(None),
        Some(path) => {
            let loaded = load_sector_map(open(path)?).at(format!("reading {}", path.display()))?;
            Ok(Some((loaded.map, loaded.rejected.len())))
        }
    }
}

const SUMMARY_HEADER: &str = "config_id,source,N,quantile_i,horizon_m,direction,conditioning,lookback,sector,demean,\
periods,omitted_periods,overlapping_periods,dropped_assets,pnl_total,ppt,sharpe_annualized,sharpe_per_period,\
skewness,kurtosis,deflated_confidence,significant,sharpe_display";

/// Rounds to the serialized precision so JSON and CSV agree.
fn round(x: f64) -> Option<f64> {
    x.is_finite().then(|| float(x).parse().expect("formatted float parses"))
}

#[derive(Serialize)]
struct PeriodJson {
    period_end: NaiveDate,
    pnl: Option<f64>,
    n_assets: usize,
    cumulative: Option<f64>,
}

#[derive(Serialize)]
struct SharpeJson {
    per_period: Option<f64>,
    annualized: Option<f64>,
    n_periods: usize,
    mean: Option<f64>,
    std: Option<f64>,
    skewness: Option<f64>,
    kurtosis: Option<f64>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    schema: &'static str,
    config_id: &'a str,
    config: &'a holdflow::StrategyConfig,
    /// PnL per period is the plain sum of per-asset MER markouts times
    /// direction; only ppt normalizes by the number of traded assets.
    pnl_convention: &'static str,
    empty: bool,
    omitted_periods: usize,
    overlapping_periods: usize,
    dropped_assets: usize,
    pnl_total: Option<f64>,
    ppt: Option<f64>,
    sharpe: Option<SharpeJson>,
    deflated_confidence: Option<f64>,
    significant: Option<bool>,
    sharpe_display: Option<f64>,
    pnl_by_period: Vec<PeriodJson>,
}

fn report_json(r: &BacktestReport) -> String {
    let j = ReportJson {
        schema: "backtest-report/1",
        config_id: &r.config_id,
        config: &r.config,
        pnl_convention: "sum over assets of direction x MER markout; ppt divides by traded assets",
        empty: r.empty,
        omitted_periods: r.omitted_periods,
        overlapping_periods: r.overlapping_periods,
        dropped_assets: r.dropped_assets,
        pnl_total: round(r.pnl_total),
        ppt: r.ppt.and_then(round),
        sharpe: r.sharpe.map(|s| SharpeJson {
            per_period: round(s.per_period),
            annualized: round(s.annualized),
            n_periods: s.n_periods,
            mean: round(s.mean),
            std: round(s.std),
            skewness: round(s.skewness),
            kurtosis: round(s.kurtosis),
        }),
        deflated_confidence: r.deflated_confidence.and_then(round),
        significant: r.significant,
        sharpe_display: r.sharpe_display.and_then(round),
        pnl_by_period: r
            .pnl_by_period
            .iter()
            .map(|p| PeriodJson {
                period_end: p.period_end,
                pnl: round(p.pnl),
                n_assets: p.n_assets,
                cumulative: round(p.cumulative),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&j).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BacktestSummary {
    pub configs: usize,
    pub with_sharpe: usize,
    pub significant: usize,
    pub s0: Option<f64>,
}

/// Runs the configured grid, deflates every Sharpe ratio against the whole
/// grid and writes per-config reports.
pub fn cmd_backtest(cfg: &RunConfig) -> CliResult<(BacktestSummary, Vec<BacktestReport>)> {
    let sets = load_signals(cfg)?;
    let panel = load_panel(cfg)?;
    let sectors = if cfg.grid.sectors.is_empty() { None } else { load_sectors(cfg)?.map(|s| s.0) };
    let mut grid = cfg.grid.clone();
    if sectors.is_none() && !grid.sectors.is_empty() {
        return Err(CliError::input(anyhow::anyhow!("sector runs configured without a sector map")));
    }
    grid.sectors.sort_unstable();
    let configs = grid.expand();
    if configs.is_empty() {
        return Err(CliError::input(anyhow::anyhow!("empty strategy grid")));
    }
    let mut reports = run_backtest(&sets, &configs, &panel, sectors.as_ref())?;
    let ctx = deflate_reports(&mut reports)?;
    significance_filter(&mut reports, cfg.significance);

    let p = stage(cfg, BACKTEST_DIR, "summary.csv");
    let mut w = csv_out(&p, "backtest-summary", SUMMARY_HEADER)?;
    for r in &reports {
        let c = &r.config;
        let s = r.sharpe;
        row(
            &mut w,
            &[
                r.config_id.clone(),
                c.source.to_string(),
                c.n_threshold.to_string(),
                c.quantile_i.to_string(),
                c.horizon_m.to_string(),
                c.direction.to_string(),
                c.conditioning.to_string(),
                c.lookback.map(|l| l.to_string()).unwrap_or_default(),
                c.sector.map(|s| s.to_string()).unwrap_or_default(),
                c.demean.to_string(),
                r.pnl_by_period.len().to_string(),
                r.omitted_periods.to_string(),
                r.overlapping_periods.to_string(),
                r.dropped_assets.to_string(),
                float(r.pnl_total),
                opt_float(r.ppt),
                opt_float(s.map(|s| s.annualized)),
                opt_float(s.map(|s| s.per_period)),
                opt_float(s.map(|s| s.skewness)),
                opt_float(s.map(|s| s.kurtosis)),
                opt_float(r.deflated_confidence),
                r.significant.map(|b| b.to_string()).unwrap_or_default(),
                opt_float(r.sharpe_display),
            ],
        )?;
    }
    finish(w, &p)?;

    let p = stage(cfg, BACKTEST_DIR, "pnl_by_period.csv");
    let mut w = csv_out(&p, "pnl-by-period", "config_id,period_end,pnl,n_assets,cumulative")?;
    for r in &reports {
        for q in &r.pnl_by_period {
            row(
                &mut w,
                &[
                    r.config_id.clone(),
                    q.period_end.to_string(),
                    float(q.pnl),
                    q.n_assets.to_string(),
                    float(q.cumulative),
                ],
            )?;
        }
    }
    finish(w, &p)?;

    let dir = cfg.paths.output.join(BACKTEST_DIR).join("reports");
    fs::create_dir_all(&dir).at(format!("creating {}", dir.display()))?;
    reports.par_iter().try_for_each(|r| {
        let path = dir.join(format!("{}.json", r.config_id));
        fs::write(&path, report_json(r)).map_err(|e| CliError::computation(e).context(format!("writing {}", path.display())))
    })?;

    let summary = BacktestSummary {
        configs: reports.len(),
        with_sharpe: reports.iter().filter(|r| r.sharpe.is_some()).count(),
        significant: reports.iter().filter(|r| r.significant == Some(true)).count(),
        s0: ctx.as_ref().map(|c| c.s0()),
    };
    write_kv(
        &stage(cfg, BACKTEST_DIR, "deflation.csv"),
        "deflation",
        &[
            ("configs", summary.configs.to_string()),
            ("k_trials", ctx.as_ref().map(|c| c.k_trials.to_string()).unwrap_or_default()),
            ("s0_per_period", opt_float(summary.s0)),
            ("euler_gamma", float(EULER_GAMMA)),
            ("significance", float(cfg.significance)),
            ("significant", summary.significant.to_string()),
        ],
    )?;
    let stats = panel.load_stats();
    write_kv(
        &stage(cfg, BACKTEST_DIR, "returns_summary.csv"),
        "returns-summary",
        &[
            ("benchmark", panel.benchmark_id().to_string()),
            ("trading_days", panel.calendar().len().to_string()),
            ("assets", panel.assets().len().to_string()),
            ("rows_off_calendar", stats.rows_off_calendar.to_string()),
            ("assets_dropped", stats.assets_dropped.to_string()),
        ],
    )?;
    Ok((summary, reports))
}

pub fn impact_options(cfg: &RunConfig) -> ImpactOptions {
    ImpactOptions {
        winsor_fraction: cfg.winsor_fraction,
        quantile_method: cfg.winsor_method,
        scope: cfg.winsor_scope,
    }
}

/// Price-impact R² table: raw returns then MERs, thresholds descending.
pub fn cmd_impact(cfg: &RunConfig) -> CliResult<ImpactTable> {
    let sets = load_signals(cfg)?;
    let panel = load_panel(cfg)?;
    let table = impact_table(&sets, &panel, &cfg.impact_thresholds(), &ReturnKind::ALL, impact_options(cfg))?;
    write_with(&stage(cfg, IMPACT_DIR, "impact_table.csv"), |w| write_impact_table(w, &table))?;
    write_with(&stage(cfg, IMPACT_DIR, "impact_by_period.csv"), |w| write_impact_by_period(w, &table))?;
    Ok(table)
}

/// Sector coverage and popularity series; skipped without a sector map.
pub fn cmd_sectors(cfg: &RunConfig) -> CliResult<bool> {
    let Some((map, rejected)) = load_sectors(cfg)? else {
        return Ok(false);
    };
    let diffs = load_diffs(cfg)?;
    let sets = load_signals(cfg)?;
    let panel = load_panel(cfg)?;
    let points = popularity_series(&diffs, &map, &panel)?;
    write_with(&stage(cfg, SECTORS_DIR, "popularity.csv"), |w| write_popularity(w, &points))?;

    let universe: std::collections::BTreeSet<_> = diffs.iter().flat_map(|d| d.assets().iter().copied()).collect();
    let p = stage(cfg, SECTORS_DIR, "coverage.csv");
    let mut w = csv_out(&p, "sector-coverage", "sector,mapped,with_signals_and_returns")?;
    for sector in holdflow::Sector::ALL {
        let mapped = map.iter().filter(|&(_, s)| s == sector).count();
        let traded: std::collections::BTreeSet<_> = sets
            .iter()
            .flat_map(|s| sector_filter(s, &map, sector).records)
            .filter(|r| panel.contains(r.asset.as_str()))
            .map(|r| r.asset)
            .collect();
        row(&mut w, &[sector.to_string(), mapped.to_string(), traded.len().to_string()])?;
    }
    finish(w, &p)?;
    let cov = map.coverage(&universe);
    write_kv(
        &stage(cfg, SECTORS_DIR, "coverage_summary.csv"),
        "sector-coverage-summary",
        &[
            ("universe", cov.total.to_string()),
            ("mapped", cov.mapped.to_string()),
            ("coverage", opt_float(cov.ratio())),
            ("rejected_rows", rejected.to_string()),
        ],
    )?;
    Ok(true)
}

/// Lowercase hex SHA-256 of a byte stream.
pub fn sha256_hex<R: Read>(mut r: R) -> std::io::Result<String> {
    let mut h = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Relative path and hash of every file under `root`, sorted by path.
pub fn hash_tree(root: &Path) -> std::io::Result<Vec<(String, u64, String)>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(root, &mut files)?;
    let mut out = files
        .into_par_iter()
        .map(|p| {
            let rel = p
                .strip_prefix(root)
                .expect("under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            let bytes = fs::metadata(&p)?.len();
            Ok((rel, bytes, sha256_hex(File::open(&p)?)?))
        })
        .collect::<std::io::Result<Vec<_>>>()?;
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ReportSummary {
    pub ingest: IngestSummary,
    pub imbalance: ImbalanceSummary,
    pub backtest: BacktestSummary,
    pub impact_rows: usize,
    pub sectors: bool,
    pub files: usize,
}

/// Full pipeline plus a manifest of output hashes.
pub fn cmd_report(cfg: &RunConfig) -> CliResult<ReportSummary> {
    let ingest = cmd_ingest(cfg)?;
    let imbalance = cmd_imbalance(cfg)?;
    let (backtest, _) = cmd_backtest(cfg)?;
    let impact = cmd_impact(cfg)?;
    let sectors = cmd_sectors(cfg)?;
    let files = write_manifest(&cfg.paths.output)?;
    Ok(ReportSummary {
        ingest,
        imbalance,
        backtest,
        impact_rows: impact.rows.len(),
        sectors,
        files,
    })
}

/// Writes `manifest.csv` listing every other output file; returns the count.
pub fn write_manifest(root: &Path) -> CliResult<usize> {
    let manifest = root.join(MANIFEST);
    if manifest.exists() {
        fs::remove_file(&manifest).at("removing old manifest")?;
    }
    let entries = hash_tree(root).map_err(CliError::computation)?;
    let mut w = csv_out(&manifest, "manifest", "path,bytes,sha256")?;
    for (p, n, h) in &entries {
        row(&mut w, &[p.clone(), n.to_string(), h.clone()])?;
    }
    finish(w, &manifest)?;
    Ok(entries.len())
}
