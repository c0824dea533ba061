//! `rwre`: experiment harness for exact bridge computations.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::Experiment;

#[derive(Parser)]
#[command(
    name = "rwre",
    version,
    about = "Exact quenched computations for random walks in random environment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Root directory for run output (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides `threads` in the config).
    #[arg(long)]
    threads: Option<usize>,
    /// Added to every configured seed.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Regime, kappa, speed and I(0) of a site law.
    Kappa(Common),
    /// ln P(X_2n = 0) over an n grid.
    BridgeProb(Common),
    /// Bridge probabilities confined to |x| < M.
    Confined(Common),
    /// Exact conditional CDF and quantiles of the bridge maximum.
    MaxDispExact(Common),
    /// Exact bridge samples and their maximum statistics.
    SampleBridge(Common),
    /// Exponent and (ln n)^2 constant fits of ln P(X_2n = 0).
    Scaling(Common),
    /// Simple random walk small-deviation constants.
    SrwSmalldev(Common),
    /// Exit-time MGF, closed form against DP, and its bound.
    MgfCheck(Common),
    /// Change-of-measure identity by exhaustive enumeration.
    ComCheck(Common),
    /// Longest runs of fair sites.
    LongestRun(Common),
    /// P(max >= n/(ln n)^beta | bridge) for beta > 2.
    ConjectureExplore(Common),
}

impl Command {
    fn split(self) -> (Experiment, Common) {
        match self {
            Command::Kappa(c) => (Experiment::Kappa, c),
            Command::BridgeProb(c) => (Experiment::BridgeProb, c),
            Command::Confined(c) => (Experiment::Confined, c),
            Command::MaxDispExact(c) => (Experiment::MaxDispExact, c),
            Command::SampleBridge(c) => (Experiment::SampleBridge, c),
            Command::Scaling(c) => (Experiment::Scaling, c),
            Command::SrwSmalldev(c) => (Experiment::SrwSmalldev, c),
            Command::MgfCheck(c) => (Experiment::MgfCheck, c),
            Command::ComCheck(c) => (Experiment::ComCheck, c),
            Command::LongestRun(c) => (Experiment::LongestRun, c),
            Command::ConjectureExplore(c) => (Experiment::ConjectureExplore, c),
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf> {
    let (experiment, common) = cli.command.split();
    let loaded = config::load(&common.config, experiment)?;
    let cfg = &loaded.config;

    if let Some(k) = common.threads.or(cfg.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("configuring thread pool")?;
    }
    let root = common
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(|p| loaded.base_dir.join(p)))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let hash = output::config_hash(experiment.name(), common.seed_offset, &loaded.raw);
    let mut dir = output::RunDir::create(
        &root,
        experiment.name(),
        &hash,
        common.seed_offset,
        rayon::current_num_threads(),
    )?;
    let ctx = experiments::Ctx {
        cfg,
        base_dir: &loaded.base_dir,
        seed_offset: common.seed_offset,
    };
    match experiments::run(experiment, &ctx, &mut dir) {
        Ok(()) => dir.complete(),
        Err(e) => {
            let path = dir.abandon(&format!("{e:#}"))?;
            Err(e.context(format!("run left incomplete in {}", path.display())))
        }
    }
}
