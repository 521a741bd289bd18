//! Synthetic holdings, returns and sector bundles with planted imbalances.
//!
//! Two modes:
//!
//! * `noise`: funds trade a long-only book each quarter. Each issuer gets a
//!   planted buy probability `(1 + θ) / 2` per active fund, a contemporaneous
//!   price impact `λ · I_vol` spread over the quarter and a reversal of
//!   `κ · I_vol` over the 21 trading days after the quarter end. Betas to the
//!   benchmark vary by issuer. Idiosyncratic noise is scaled per quarter so
//!   the expected cross-sectional R² of the quarterly MER on `I_vol` is
//!   `impact_r2`.
//! * `linear`: every fund trades every issuer with one lot size, so
//!   `I_vol = I_tr`, and quarterly returns are exactly `α + β · I`. A fifth of
//!   the issuers sit at each of −1 and +1 so winsorization leaves returns
//!   unchanged.
//!
//! `truth.csv` records the planted `θ` with the realized aggregates.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use holdflow::calendar::next_calendar_quarter_end;
use holdflow::cusip::check_digit;
use holdflow::fmt::{float, write_schema_line};
use holdflow::imbalance::BuySell;
use holdflow::Sector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{CalendarSpec, Paths, RunConfig};
use crate::error::{CliError, CliResult};

pub const TRUTH_HEADER: &str = "period_end,asset,theta,n_active,b_vol,s_vol,b_tr,s_tr,i_vol,i_tr";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    #[default]
    Noise,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub mode: SynthMode,
    pub seed: u64,
    /// Number of quarterly changes; one more holdings snapshot is written.
    pub quarters: usize,
    pub funds: usize,
    pub assets: usize,
    pub first_quarter_end: NaiveDate,
    pub impact_lambda: f64,
    pub reversal_kappa: f64,
    pub impact_r2: f64,
    /// Issuers held and traded by every fund each quarter.
    pub mega_assets: usize,
    /// Issuers held by about half of the funds.
    pub popular_assets: usize,
    pub linear_alpha: f64,
    pub linear_beta: f64,
}

impl SynthConfig {
    pub fn noise(seed: u64) -> Self {
        SynthConfig {
            mode: SynthMode::Noise,
            seed,
            quarters: 34,
            funds: 500,
            assets: 300,
            first_quarter_end: NaiveDate::from_ymd_opt(2013, 3, 31).expect("date"),
            impact_lambda: 0.04,
            reversal_kappa: 0.01,
            impact_r2: 0.3,
            mega_assets: 5,
            popular_assets: 25,
            linear_alpha: 0.01,
            linear_beta: 0.05,
        }
    }

    pub fn linear(seed: u64) -> Self {
        SynthConfig {
            mode: SynthMode::Linear,
            quarters: 8,
            assets: 40,
            ..Self::noise(seed)
        }
    }

    pub fn quarter_ends(&self) -> Vec<NaiveDate> {
        let mut ends = vec![self.first_quarter_end];
        for _ in 0..self.quarters {
            let last = *ends.last().expect("non-empty");
            ends.push(next_calendar_quarter_end(last));
        }
        ends
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::input(anyhow::anyhow!("synth: {m}")));
        if self.quarters < 2 || self.funds < 2 || self.assets < 5 {
            return bad("need at least 2 quarters, 2 funds and 5 assets");
        }
        if !(self.impact_r2 > 0.0 && self.impact_r2 < 1.0) {
            return bad("impact_r2 must lie in (0, 1)");
        }
        if self.mega_assets + self.popular_assets > self.assets {
            return bad("more mega and popular issuers than issuers");
        }
        Ok(())
    }
}

/// Files written by [`generate`].
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub holdings: PathBuf,
    pub returns: PathBuf,
    pub sectors: PathBuf,
    pub truth: PathBuf,
    pub config: PathBuf,
}

pub fn asset_id(a: usize) -> String {
    format!("{:06}", 200_000 + a * 7)
}

fn cusip9(a: usize, class: &str) -> String {
    let first8 = format!("{}{class}", asset_id(a));
    let c = check_digit(&first8).expect("alphanumeric");
    format!("{first8}{c}")
}

fn cik(f: usize) -> u64 {
    1_000_000 + f as u64 * 13
}

/// Weekdays from `start` through `end`.
pub fn business_days(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    start
        .iter_days()
        .take_while(|d| *d <= end)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

struct Planted {
    /// `[quarter][asset]` realized aggregates of the change ending that quarter.
    aggregates: Vec<Vec<BuySell>>,
    theta: Vec<Vec<f64>>,
    /// `[snapshot][fund][asset]` shares.
    snapshots: Vec<Vec<Vec<u64>>>,
}

fn realized_i_vol(agg: &BuySell) -> Option<f64> {
    let total = agg.b_vol + agg.s_vol;
    (total > 0).then(|| (agg.b_vol as f64 - agg.s_vol as f64) / total as f64)
}

fn plant_noise(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Planted {
    let (nf, na) = (cfg.funds, cfg.assets);
    let popular_end = cfg.mega_assets + cfg.popular_assets;
    // issuers that are held throughout but never traded
    let never_traded: Vec<bool> = (0..na).map(|a| a >= popular_end && a % 20 == 19).collect();
    let mut h = vec![vec![0u64; na]; nf];
    for row in h.iter_mut() {
        for (a, cell) in row.iter_mut().enumerate() {
            let p = if a < cfg.mega_assets {
                1.0
            } else if a < popular_end {
                0.5
            } else {
                0.08
            };
            if rng.gen::<f64>() < p {
                *cell = rng.gen_range(50_000..500_000);
            }
        }
    }
    let holders: Vec<Vec<usize>> = (0..na).map(|a| (0..nf).filter(|&f| h[f][a] > 0).collect()).collect();
    let mut snapshots = vec![h.clone()];
    let mut aggregates = Vec::with_capacity(cfg.quarters);
    let mut theta = Vec::with_capacity(cfg.quarters);
    for _ in 0..cfg.quarters {
        let mut agg_q = vec![BuySell::default(); na];
        let mut theta_q = vec![0.0; na];
        for a in 0..na {
            let t = match rng.gen::<f64>() {
                u if u < 0.03 => 1.0,
                u if u < 0.06 => -1.0,
                _ => rng.gen_range(-1.0..1.0),
            };
            theta_q[a] = t;
            let activity = if a < cfg.mega_assets {
                1.0
            } else if never_traded[a] || rng.gen::<f64>() < 0.1 {
                0.0
            } else {
                rng.gen_range(0.2..0.9)
            };
            for &f in &holders[a] {
                if activity < 1.0 && rng.gen::<f64>() >= activity {
                    continue;
                }
                let buy = rng.gen::<f64>() < (1.0 + t) / 2.0;
                let lot: u64 = rng.gen_range(100..5_000);
                let cell = &mut h[f][a];
                if buy {
                    *cell += lot;
                    agg_q[a].b_vol += lot;
                    agg_q[a].b_tr += 1;
                } else if *cell > 0 {
                    let sold = lot.min(*cell);
                    *cell -= sold;
                    agg_q[a].s_vol += sold;
                    agg_q[a].s_tr += 1;
                }
            }
        }
        snapshots.push(h.clone());
        aggregates.push(agg_q);
        theta.push(theta_q);
    }
    Planted { aggregates, theta, snapshots }
}

fn plant_linear(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Planted {
    let (nf, na) = (cfg.funds, cfg.assets);
    let lot = 100u64;
    let mut h = vec![vec![1_000_000u64; na]; nf];
    let mut snapshots = vec![h.clone()];
    let mut aggregates = Vec::new();
    let mut theta = Vec::new();
    let extremes = na / 5;
    for _ in 0..cfg.quarters {
        let mut order: Vec<usize> = (0..na).collect();
        order.shuffle(rng);
        let mut buyers = vec![0usize; na];
        for (rank, &a) in order.iter().enumerate() {
            buyers[a] = if rank < extremes {
                0
            } else if rank < 2 * extremes {
                nf
            } else {
                rng.gen_range(1..nf)
            };
        }
        let mut agg_q = vec![BuySell::default(); na];
        let mut theta_q = vec![0.0; na];
        for a in 0..na {
            for (f, row) in h.iter_mut().enumerate() {
                if f < buyers[a] {
                    row[a] += lot;
                    agg_q[a].b_vol += lot;
                    agg_q[a].b_tr += 1;
                } else {
                    row[a] -= lot;
                    agg_q[a].s_vol += lot;
                    agg_q[a].s_tr += 1;
                }
            }
            theta_q[a] = realized_i_vol(&agg_q[a]).expect("every fund trades");
        }
        snapshots.push(h.clone());
        aggregates.push(agg_q);
        theta.push(theta_q);
    }
    Planted { aggregates, theta, snapshots }
}

fn write_holdings(path: &Path, ends: &[NaiveDate], planted: &Planted, rng: &mut ChaCha8Rng) -> CliResult<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "period_end,cik,cusip9,other_manager,shares")?;
    let na = planted.snapshots[0][0].len();
    let ids: Vec<(String, String)> = (0..na).map(|a| (cusip9(a, "10"), cusip9(a, "20"))).collect();
    for (date, snap) in ends.iter().zip(&planted.snapshots) {
        for (f, row) in snap.iter().enumerate() {
            let c = cik(f);
            for (a, &shares) in row.iter().enumerate() {
                if shares == 0 {
                    continue;
                }
                let (common, class_b) = &ids[a];
                // a second share class for every tenth issuer, split reports for some funds
                let (main, other) = if a % 10 == 3 && shares > 1 {
                    (shares - shares / 4, shares / 4)
                } else {
                    (shares, 0)
                };
                if main > 1 && rng.gen::<f64>() < 0.05 {
                    let first = main / 3;
                    writeln!(w, "{date},{c},{common},1,{first}")?;
                    writeln!(w, "{date},{c},{common},2,{}", main - first)?;
                } else {
                    writeln!(w, "{date},{c},{common},,{main}")?;
                }
                if other > 0 {
                    writeln!(w, "{date},{c},{class_b},,{other}")?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_truth(path: &Path, ends: &[NaiveDate], planted: &Planted) -> CliResult<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_schema_line(&mut w, "synth-truth", 1)?;
    writeln!(w, "{TRUTH_HEADER}")?;
    for (k, aggs) in planted.aggregates.iter().enumerate() {
        for (a, agg) in aggs.iter().enumerate() {
            let i_tr = (agg.n_active() > 0)
                .then(|| (agg.b_tr as f64 - agg.s_tr as f64) / agg.n_active() as f64);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                ends[k + 1],
                asset_id(a),
                float(planted.theta[k][a]),
                agg.n_active(),
                agg.b_vol,
                agg.s_vol,
                agg.b_tr,
                agg.s_tr,
                realized_i_vol(agg).map(float).unwrap_or_default(),
                i_tr.map(float).unwrap_or_default(),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Daily returns `[asset][day]` plus the benchmark series.
fn plant_returns(
    cfg: &SynthConfig,
    days: &[NaiveDate],
    ends: &[NaiveDate],
    planted: &Planted,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let na = cfg.assets;
    let quarter_of = |i: usize| ends.partition_point(|e| *e < days[i]);
    let day_span = |k: usize| days.partition_point(|d| *d <= ends[k])..days.partition_point(|d| *d <= ends[k + 1]);
    match cfg.mode {
        SynthMode::Linear => {
            let bench_daily = 0.0002;
            let bench = vec![bench_daily; days.len()];
            let mut series = vec![vec![0.0001; days.len()]; na];
            for (k, thetas) in planted.theta.iter().enumerate() {
                let span = day_span(k);
                let n = span.len() as f64;
                for (a, s) in series.iter_mut().enumerate() {
                    let daily = (cfg.linear_alpha + cfg.linear_beta * thetas[a]) / n;
                    for v in &mut s[span.clone()] {
                        *v = daily;
                    }
                }
            }
            (bench, series)
        }
        SynthMode::Noise => {
            let bench_dist = Normal::new(0.0003, 0.01).expect("valid");
            let bench: Vec<f64> = days.iter().map(|_| bench_dist.sample(rng)).collect();
            let i_vol: Vec<Vec<f64>> = planted
                .aggregates
                .iter()
                .map(|q| q.iter().map(|agg| realized_i_vol(agg).unwrap_or(0.0)).collect())
                .collect();
            let (lambda, kappa, r2) = (cfg.impact_lambda, cfg.reversal_kappa, cfg.impact_r2);
            // per-quarter daily noise, one extra entry for days outside the study
            let mut sigma = Vec::with_capacity(cfg.quarters);
            for k in 0..cfg.quarters {
                let v = population_variance(&i_vol[k]);
                let v_prev = if k > 0 { population_variance(&i_vol[k - 1]) } else { 0.0 };
                let wanted = lambda * lambda * v * (1.0 - r2) / r2;
                let total = (wanted - kappa * kappa * v_prev).max(0.1 * wanted);
                sigma.push((total / day_span(k).len().max(1) as f64).sqrt());
            }
            let mut series = vec![vec![0.0; days.len()]; na];
            for s in series.iter_mut() {
                let beta = rng.gen_range(0.6..1.4);
                for (i, v) in s.iter_mut().enumerate() {
                    let q = quarter_of(i);
                    let sd = sigma[q.saturating_sub(1).min(cfg.quarters - 1)];
                    *v = beta * bench[i] + sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
                }
            }
            for (k, iv) in i_vol.iter().enumerate().take(cfg.quarters) {
                let span = day_span(k);
                let n = span.len() as f64;
                let after = span.end..(span.end + 21).min(days.len());
                for (a, s) in series.iter_mut().enumerate() {
                    let i = iv[a];
                    for v in &mut s[span.clone()] {
                        *v += lambda * i / n;
                    }
                    for v in &mut s[after.clone()] {
                        *v -= kappa * i / 21.0;
                    }
                }
            }
            (bench, series)
        }
    }
}

fn write_returns(
    path: &Path,
    cfg: &SynthConfig,
    days: &[NaiveDate],
    bench: &[f64],
    series: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> CliResult<()> {
    let na = series.len();
    let noise = cfg.mode == SynthMode::Noise;
    // a few issuers without any returns and a few with missing days
    let missing: Vec<bool> = (0..na).map(|a| noise && a >= cfg.mega_assets && a % 50 == 7).collect();
    let gaps: Vec<Vec<usize>> = (0..na)
        .map(|a| {
            if noise && a >= cfg.mega_assets && a % 37 == 11 {
                (0..5).map(|_| rng.gen_range(0..days.len())).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "date,asset,ret")?;
    for (i, d) in days.iter().enumerate() {
        writeln!(w, "{d},SPY,{}", float(bench[i]))?;
        for a in 0..na {
            if missing[a] || gaps[a].contains(&i) {
                continue;
            }
            writeln!(w, "{d},{},{}", asset_id(a), float(series[a][i]))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_sectors(path: &Path, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> CliResult<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "cusip6,label")?;
    for a in 0..cfg.assets {
        // about four in five issuers carry a label in noise mode
        if cfg.mode == SynthMode::Noise && rng.gen::<f64>() < 0.2 {
            continue;
        }
        let s = Sector::ALL[rng.gen_range(0..Sector::ALL.len())];
        writeln!(w, "{},{}", asset_id(a), s.label())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `holdings.csv`, `returns.csv`, `sectors.csv`, `truth.csv` and a
/// `run.toml` pointing at them into `dir`.
pub fn generate(cfg: &SynthConfig, dir: &Path) -> CliResult<Bundle> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    let bundle = Bundle {
        dir: dir.to_path_buf(),
        holdings: dir.join("holdings.csv"),
        returns: dir.join("returns.csv"),
        sectors: dir.join("sectors.csv"),
        truth: dir.join("truth.csv"),
        config: dir.join("run.toml"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ends = cfg.quarter_ends();
    let planted = match cfg.mode {
        SynthMode::Noise => plant_noise(cfg, &mut rng),
        SynthMode::Linear => plant_linear(cfg, &mut rng),
    };
    write_holdings(&bundle.holdings, &ends, &planted, &mut rng)?;
    write_truth(&bundle.truth, &ends, &planted)?;

    let first = ends[0] - Duration::days(120);
    let last = *ends.last().expect("non-empty") + Duration::days(130);
    let days = business_days(first, last);
    let (bench, series) = plant_returns(cfg, &days, &ends, &planted, &mut rng);
    write_returns(&bundle.returns, cfg, &days, &bench, &series, &mut rng)?;
    write_sectors(&bundle.sectors, cfg, &mut rng)?;

    let mut run = RunConfig {
        paths: Paths {
            holdings: Some("holdings.csv".into()),
            returns: Some("returns.csv".into()),
            sectors: Some("sectors.csv".into()),
            output: "out".into(),
        },
        calendar: Some(CalendarSpec {
            start: ends[0],
            end: *ends.last().expect("non-empty"),
        }),
        seed: cfg.seed,
        ..RunConfig::default()
    };
    run.grid.sectors = Sector::ALL.to_vec();
    let mut text = String::from("# synthetic bundle\n");
    text.push_str(&format!(
        "# mode = {:?}, seed = {}, quarters = {}, funds = {}, assets = {}\n",
        cfg.mode, cfg.seed, cfg.quarters, cfg.funds, cfg.assets
    ));
    text.push_str(&run.to_toml());
    fs::write(&bundle.config, text)?;
    Ok(bundle)
}
