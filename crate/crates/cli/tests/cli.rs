//! End-to-end checks of the `holdflow` binary on synthetic bundles.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use holdflow_cli::pipeline::hash_tree;
use tempfile::TempDir;

fn holdflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holdflow"))
        .args(args)
        .env_remove("HOLDFLOW_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = holdflow(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthesizes a bundle and returns its `run.toml`.
fn bundle(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--dir", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("run.toml")
}

/// Data rows of a schema-tagged CSV, keyed by header name.
fn rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(str::to_string)).collect())
        .collect()
}

#[test]
fn missing_input_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let out = holdflow(&[
        "ingest",
        "--holdings",
        s(&tmp.path().join("absent.csv")),
        "--output",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_header_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let h = tmp.path().join("h.csv");
    fs::write(&h, "date,fund,id,shares\n2020-03-31,1,037833100,10\n").unwrap();
    let out = holdflow(&["ingest", "--holdings", s(&h), "--output", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn imbalance_before_ingest_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = bundle(&tmp.path().join("b"), &["--mode", "linear"]);
    let out = holdflow(&["-c", s(&cfg), "imbalance"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "sigificance = 0.01\n").unwrap();
    let out = holdflow(&["-c", s(&cfg), "ingest"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_and_ingest_are_byte_stable() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["--seed", "11", "--mode", "linear"];
    bundle(&a, &args);
    bundle(&b, &args);
    assert_eq!(hash_tree(&a).unwrap(), hash_tree(&b).unwrap());

    let cfg = a.join("run.toml");
    ok(&["-c", s(&cfg), "ingest"]);
    let first = hash_tree(&a.join("out")).unwrap();
    ok(&["-c", s(&cfg), "--jobs", "1", "ingest"]);
    assert_eq!(first, hash_tree(&a.join("out")).unwrap());
}

#[test]
fn signals_match_planted_aggregates() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("b");
    let cfg = bundle(&dir, &["--seed", "4", "--mode", "linear"]);
    ok(&["-c", s(&cfg), "ingest"]);
    ok(&["-c", s(&cfg), "imbalance"]);

    let key = |r: &BTreeMap<String, String>| (r["period_end"].clone(), r["asset"].clone());
    let truth: BTreeMap<_, _> = rows(&dir.join("truth.csv"))
        .into_iter()
        .filter(|r| r["n_active"] != "0")
        .map(|r| (key(&r), r))
        .collect();
    let signals = rows(&dir.join("out/imbalance/signals.csv"));
    assert_eq!(signals.len(), truth.len());
    let mut extremes = 0;
    for r in &signals {
        let t = &truth[&key(r)];
        for col in ["n_active", "b_vol", "s_vol", "b_tr", "s_tr"] {
            assert_eq!(r[col], t[col], "{col} of {:?}", key(r));
        }
        let theta: f64 = t["theta"].parse().unwrap();
        if theta.abs() == 1.0 {
            let i_vol: f64 = r["i_vol"].parse().unwrap();
            assert_eq!(i_vol, theta);
            extremes += 1;
        }
    }
    assert!(extremes > 0);
}

/// Quarterly raw returns summed over benchmark trading days in (prev, end];
/// issuers with a missing day are dropped.
fn quarterly_returns(path: &Path, ends: &[String]) -> BTreeMap<(String, String), f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut days = BTreeSet::new();
    let mut daily: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let mut f = line.split(',');
        let (date, asset, ret) = (f.next().unwrap(), f.next().unwrap(), f.next().unwrap());
        if asset == "SPY" {
            days.insert(date.to_string());
        }
        daily.entry(asset.to_string()).or_default().insert(date.to_string(), ret.parse().unwrap());
    }
    let mut out = BTreeMap::new();
    for w in ends.windows(2) {
        let window: Vec<&String> = days.iter().filter(|d| **d > w[0] && **d <= w[1]).collect();
        for (asset, series) in &daily {
            let vals: Option<Vec<f64>> = window.iter().map(|d| series.get(*d).copied()).collect();
            if let Some(v) = vals {
                out.insert((w[1].clone(), asset.clone()), v.iter().sum());
            }
        }
    }
    out
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

#[test]
fn impact_r2_matches_independent_regression() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("b");
    let cfg = bundle(
        &dir,
        &["--seed", "5", "--quarters", "12", "--funds", "150", "--assets", "120"],
    );
    ok(&["-c", s(&cfg), "ingest"]);
    ok(&["-c", s(&cfg), "imbalance"]);
    ok(&["-c", s(&cfg), "--winsor-fraction", "0", "--thresholds", "0", "impact"]);

    let truth = rows(&dir.join("truth.csv"));
    let ends: Vec<String> = fs::read_to_string(dir.join("holdings.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l[..10].to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let rets = quarterly_returns(&dir.join("returns.csv"), &ends);

    let mut oracle = BTreeMap::new();
    for end in &ends[1..] {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for r in truth.iter().filter(|r| &r["period_end"] == end && r["n_active"] != "0") {
            if let Some(&ret) = rets.get(&(end.clone(), r["asset"].clone())) {
                let (b, s): (f64, f64) = (r["b_vol"].parse().unwrap(), r["s_vol"].parse().unwrap());
                x.push((b - s) / (b + s));
                y.push(ret);
            }
        }
        oracle.insert(end.clone(), (r_squared(&x, &y), x.len()));
    }

    let got: Vec<_> = rows(&dir.join("out/impact/impact_by_period.csv"))
        .into_iter()
        .filter(|r| r["returns"] == "Raw rets" && r["source"] == "I^vol")
        .collect();
    assert_eq!(got.len(), oracle.len());
    let mut mean = 0.0;
    for r in &got {
        let (want, n) = oracle[&r["period_end"]];
        let r2: f64 = r["r2"].parse().unwrap();
        assert_eq!(r["n_obs"].parse::<usize>().unwrap(), n);
        assert!((r2 - want).abs() < 1e-8, "{}: {r2} vs {want}", r["period_end"]);
        mean += r2 / got.len() as f64;
    }
    // The generator targets an expected R² of 0.3.
    assert!((mean - 0.3).abs() < 0.12, "mean R² {mean}");
}

#[test]
fn backtest_grid_is_antisymmetric() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("b");
    let cfg = bundle(
        &dir,
        &["--seed", "6", "--quarters", "10", "--funds", "150", "--assets", "100"],
    );
    let c = s(&cfg);
    ok(&["-c", c, "ingest"]);
    ok(&["-c", c, "imbalance"]);
    ok(&["-c", c, "--thresholds", "20", "--quantiles", "1,2", "--horizons", "5,21", "backtest"]);

    let summary = rows(&dir.join("out/backtest/summary.csv"));
    // 2 sources × 2 q × 2 directions × 2 demean × (2 plain + 2·3·3 conditioned),
    // plus 2 sources × 2 q × 3 horizons contrarian runs for each of 10 sectors.
    assert_eq!(summary.len(), 2 * 2 * 2 * 2 * 20 + 10 * 12);
    let total: BTreeMap<String, f64> = summary
        .iter()
        .map(|r| (r["config_id"].clone(), r["pnl_total"].parse().unwrap_or(0.0)))
        .collect();
    let mut pairs = 0;
    for (id, &v) in &total {
        if let Some(mirror) = id.contains("_follow").then(|| id.replace("_follow", "_contrarian")) {
            let w = total[&mirror];
            assert!((v + w).abs() <= 1e-9 * (1.0 + v.abs()), "{id}: {v} vs {w}");
            pairs += 1;
        }
    }
    assert!(pairs > 0);
}
