//! Experiment configuration.
//!
//! A config file is TOML. Top-level keys are shared defaults; a table named
//! after the experiment (e.g. `[max-disp-exact]`) overrides them for that
//! experiment only.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rwre_core::{RegimeTag, SiteDistribution};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    Kappa,
    BridgeProb,
    Confined,
    MaxDispExact,
    SampleBridge,
    Scaling,
    SrwSmalldev,
    MgfCheck,
    ComCheck,
    LongestRun,
    ConjectureExplore,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Kappa => "kappa",
            Experiment::BridgeProb => "bridge-prob",
            Experiment::Confined => "confined",
            Experiment::MaxDispExact => "max-disp-exact",
            Experiment::SampleBridge => "sample-bridge",
            Experiment::Scaling => "scaling",
            Experiment::SrwSmalldev => "srw-smalldev",
            Experiment::MgfCheck => "mgf-check",
            Experiment::ComCheck => "com-check",
            Experiment::LongestRun => "longest-run",
            Experiment::ConjectureExplore => "conjecture-explore",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// File of `omega weight` lines, relative to the config file.
    pub distribution: Option<PathBuf>,
    /// Inline support, `[[omega, weight], ...]`.
    pub support: Option<Vec<[f64; 2]>>,
    /// Homogeneous environment with this right-step probability.
    pub homogeneous: Option<f64>,
    /// Expected regime; the run aborts if the law disagrees.
    pub regime: Option<String>,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Confinement radius for `confined`.
    pub m: Option<u64>,
    /// Radius `ceil(gamma ln n)` for `confined` when `m` is absent.
    pub gamma: Option<f64>,
    /// Thresholds `n / (ln n)^beta` for `conjecture-explore`.
    #[serde(default)]
    pub beta: Vec<f64>,
    /// Bridges per (seed, n) for `sample-bridge`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Sampled paths written out per (seed, n).
    #[serde(default)]
    pub paths: usize,
    /// Radius for `srw-smalldev`; defaults to `ceil(n^0.4)`.
    pub x: Option<u64>,
    #[serde(default)]
    pub ell: Vec<u32>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default = "default_lambda_fraction")]
    pub lambda_fraction: f64,
    #[serde(default)]
    pub r_grid: Vec<i64>,
    /// `half` (ω = 1/2) or `min` (ω = ω_min) for `longest-run`.
    #[serde(default = "default_fair")]
    pub fair: String,
    #[serde(default = "default_ms")]
    pub event_radii: Vec<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_samples() -> usize {
    1000
}
fn default_lambda_fraction() -> f64 {
    0.9
}
fn default_fair() -> String {
    "half".into()
}
fn default_ms() -> Vec<u64> {
    vec![2]
}

/// A loaded config together with the bytes it was read from.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub raw: Vec<u8>,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path, experiment: Experiment) -> Result<Loaded> {
    let raw = fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
    let text = std::str::from_utf8(&raw).context("config is not UTF-8")?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let config = parse(text, experiment)?;
    config.validate(&base_dir)?;
    Ok(Loaded {
        config,
        raw,
        base_dir,
    })
}

pub fn parse(text: &str, experiment: Experiment) -> Result<ExperimentConfig> {
    let doc: toml::Table = text.parse().context("parsing TOML config")?;
    let mut merged = toml::Table::new();
    for (k, v) in &doc {
        if !v.is_table() {
            merged.insert(k.clone(), v.clone());
        }
    }
    if let Some(section) = doc.get(experiment.name()) {
        let section = section
            .as_table()
            .with_context(|| format!("[{}] must be a table", experiment.name()))?;
        for (k, v) in section {
            merged.insert(k.clone(), v.clone());
        }
    }
    ExperimentConfig::deserialize(toml::Value::Table(merged))
        .with_context(|| format!("invalid config for {}", experiment.name()))
}

impl ExperimentConfig {
    fn validate(&self, base_dir: &Path) -> Result<()> {
        ensure!(
            self.n_grid.windows(2).all(|w| w[0] < w[1]),
            "n_grid must be strictly ascending"
        );
        ensure!(!self.seeds.is_empty(), "seeds must not be empty");
        let sources = [
            self.distribution.is_some(),
            self.support.is_some(),
            self.homogeneous.is_some(),
        ];
        ensure!(
            sources.iter().filter(|s| **s).count() <= 1,
            "give at most one of distribution, support, homogeneous"
        );
        if let Some(d) = &self.distribution {
            let p = base_dir.join(d);
            ensure!(p.is_file(), "distribution file {} not found", p.display());
        }
        if let Some(r) = &self.regime {
            r.parse::<RegimeTag>()
                .map_err(|e| anyhow::anyhow!("regime: {e}"))?;
        }
        ensure!(
            self.fair == "half" || self.fair == "min",
            "fair must be \"half\" or \"min\""
        );
        Ok(())
    }

    /// The site law, checked against `regime` when one is given.
    pub fn site_distribution(&self, base_dir: &Path) -> Result<SiteDistribution> {
        let dist = if let Some(d) = &self.distribution {
            let p = base_dir.join(d);
            let text =
                fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            text.parse::<SiteDistribution>()?
        } else if let Some(s) = &self.support {
            SiteDistribution::new(s.iter().map(|p| (p[0], p[1])).collect())?
        } else if let Some(p) = self.homogeneous {
            SiteDistribution::point(p)?
        } else {
            bail!("this experiment needs one of distribution, support, homogeneous");
        };
        if let Some(r) = &self.regime {
            let want: RegimeTag = r.parse().map_err(|e| anyhow::anyhow!("regime: {e}"))?;
            let got = dist.classify().tag;
            ensure!(
                got == want,
                "regime mismatch: config expects {want}, law is {got}"
            );
        }
        Ok(dist)
    }

    pub fn require_grid(&self) -> Result<&[usize]> {
        ensure!(!self.n_grid.is_empty(), "n_grid must not be empty");
        ensure!(self.n_grid[0] > 0, "n_grid entries must be positive");
        Ok(&self.n_grid)
    }
}
