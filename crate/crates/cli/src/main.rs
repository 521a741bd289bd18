use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use holdflow::imbalance::Source;
use holdflow::strategy::Direction;
use holdflow_cli::pipeline::{cmd_backtest, cmd_imbalance, cmd_impact, cmd_ingest, cmd_report};
use holdflow_cli::synth::{generate, SynthConfig, SynthMode};
use holdflow_cli::{CliError, CliResult, RunConfig, CONFIG_ENV};

#[derive(Parser)]
#[command(name = "holdflow", version, about = "Institutional holdings flow imbalance research pipeline")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, short, global = true)]
    jobs: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    holdings: Option<PathBuf>,
    #[arg(long, global = true)]
    returns: Option<PathBuf>,
    #[arg(long, global = true)]
    sectors: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    benchmark: Option<String>,
    #[arg(long, global = true)]
    significance: Option<f64>,
    #[arg(long, global = true)]
    winsor_fraction: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_delimiter = ',')]
    thresholds: Option<Vec<u32>>,
    #[arg(long, global = true, value_delimiter = ',')]
    sources: Option<Vec<Source>>,
    #[arg(long, global = true, value_delimiter = ',')]
    quantiles: Option<Vec<u32>>,
    #[arg(long, global = true, value_delimiter = ',')]
    horizons: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    directions: Option<Vec<Direction>>,
    #[arg(long, global = true, value_delimiter = ',')]
    lookbacks: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    demean: Option<Vec<bool>>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse holdings and write per-quarter matrices and differences.
    Ingest,
    /// Compute imbalance signals and activity diagnostics.
    Imbalance,
    /// Run the strategy grid with deflated Sharpe significance.
    Backtest,
    /// Price-impact R² table.
    Impact,
    /// Generate a synthetic input bundle.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthMode::Noise)]
        mode: SynthMode,
        /// Bundle directory.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        quarters: Option<usize>,
        #[arg(long)]
        funds: Option<usize>,
        #[arg(long)]
        assets: Option<usize>,
        /// Expected cross-sectional R² of quarterly returns on I_vol.
        #[arg(long)]
        impact_r2: Option<f64>,
    },
    /// Run every stage and write a manifest of output hashes.
    Report,
}

impl Overrides {
    fn apply(self, cfg: &mut RunConfig) {
        let p = &mut cfg.paths;
        p.holdings = self.holdings.or(p.holdings.take());
        p.returns = self.returns.or(p.returns.take());
        p.sectors = self.sectors.or(p.sectors.take());
        if let Some(o) = self.output {
            p.output = o;
        }
        if let Some(b) = self.benchmark {
            cfg.benchmark = b;
        }
        if let Some(s) = self.significance {
            cfg.significance = s;
        }
        if let Some(w) = self.winsor_fraction {
            cfg.winsor_fraction = w;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let g = &mut cfg.grid;
        if let Some(v) = self.thresholds {
            g.thresholds = v;
        }
        if let Some(v) = self.sources {
            g.sources = v;
        }
        if let Some(v) = self.quantiles {
            g.quantiles = v;
        }
        if let Some(v) = self.horizons {
            g.horizons = v;
        }
        if let Some(v) = self.directions {
            g.directions = v;
        }
        if let Some(v) = self.lookbacks {
            g.lookbacks = v;
        }
        if let Some(v) = self.demean {
            g.demean = v;
        }
    }
}

fn run(cli: Cli) -> CliResult<String> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;
    match cli.command {
        Command::Ingest => cmd_ingest(&cfg).map(|s| json(&s)),
        Command::Imbalance => cmd_imbalance(&cfg).map(|s| json(&s)),
        Command::Backtest => cmd_backtest(&cfg).map(|(s, _)| json(&s)),
        Command::Impact => cmd_impact(&cfg).map(|t| format!("{} impact rows", t.rows.len())),
        Command::Report => cmd_report(&cfg).map(|s| json(&s)),
        Command::Synth { mode, dir, quarters, funds, assets, impact_r2 } => {
            let mut s = match mode {
                SynthMode::Noise => SynthConfig::noise(cfg.seed),
                SynthMode::Linear => SynthConfig::linear(cfg.seed),
            };
            s.quarters = quarters.unwrap_or(s.quarters);
            s.funds = funds.unwrap_or(s.funds);
            s.assets = assets.unwrap_or(s.assets);
            s.impact_r2 = impact_r2.unwrap_or(s.impact_r2);
            let b = generate(&s, &dir)?;
            Ok(format!("wrote bundle to {}", b.dir.display()))
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("summary serializes")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build();
    let result = match pool {
        Ok(pool) => pool.install(|| run(cli)),
        Err(e) => Err(CliError::input(e)),
    };
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
