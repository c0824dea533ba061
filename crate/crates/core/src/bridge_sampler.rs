//! Exact sampling of bridges through the Doob transform of the quenched
//! walk.
//!
//! The backward table stores `ln h(k, x)`, the log-probability that a walk at
//! `x` after `k` steps is back at the origin at time `2n`. Sampling forward
//! with `P(x → x+1) = ω_x h(k+1, x+1) / h(k, x)` produces paths with exactly
//! the conditional law given `X_{2n} = 0`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env_model::Environment;
use crate::error::{Error, Result};
use crate::exact_kernel::{ln_add_exp, DpTable, NEG_INF};
use crate::format::fmt_g17;
use crate::par::Execution;

/// A sampled bridge `X_0, …, X_{2n}` and its statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgePath {
    pub n: usize,
    pub sites: Vec<i64>,
    pub max_abs: u64,
    /// Visits before time `2n` to sites with `ω_x > ω_min`.
    pub b_count: usize,
    pub seed: u64,
    /// ChaCha stream the path was drawn from.
    pub stream: u64,
}

impl BridgePath {
    /// Builds a path from explicit sites, checking the bridge shape.
    pub fn from_sites(env: &Environment, sites: Vec<i64>) -> Result<Self> {
        if sites.is_empty() || sites.len().is_multiple_of(2) {
            return Err(Error::NotABridge(format!(
                "{} sites, expected 2n + 1",
                sites.len()
            )));
        }
        if sites[0] != 0 || *sites.last().unwrap() != 0 {
            return Err(Error::NotABridge("path must start and end at 0".into()));
        }
        if let Some(k) = sites.windows(2).position(|w| (w[1] - w[0]).abs() != 1) {
            return Err(Error::NotABridge(format!("non-unit step at k = {k}")));
        }
        let lo = *sites.iter().min().unwrap();
        let hi = *sites.iter().max().unwrap();
        env.require(lo, hi)?;
        let n = (sites.len() - 1) / 2;
        let max_abs = sites.iter().map(|x| x.unsigned_abs()).max().unwrap();
        let b_count = count_biased_visits(env, &sites, env.omega_min());
        Ok(Self {
            n,
            sites,
            max_abs,
            b_count,
            seed: 0,
            stream: 0,
        })
    }

    /// `k,x` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,x\n");
        for (k, x) in self.sites.iter().enumerate() {
            writeln!(s, "{k},{x}").unwrap();
        }
        s
    }
}

pub(crate) fn count_biased_visits(env: &Environment, sites: &[i64], omega_min: f64) -> usize {
    sites[..sites.len() - 1]
        .iter()
        .filter(|&&x| env.at(x) > omega_min)
        .count()
}

/// Backward table `ln h(k, x)` for bridges of length `2n`, optionally
/// confined to `|x| < radius`.
pub fn backward_table(env: &Environment, n: usize, radius: Option<u64>) -> Result<DpTable> {
    let steps = 2 * n;
    let cap = radius.map(|m| m as i64 - 1).unwrap_or(i64::MAX);
    if cap < 0 {
        return Err(Error::Domain("confinement radius must be >= 1".into()));
    }
    let reach = (n as i64).min(cap);
    if n > 0 {
        env.require(-reach, reach)?;
    }
    let half_width =
        |k: usize| (k.min(steps - k) as i64).min(cap - ((cap - k as i64).rem_euclid(2)));

    let mut rows: Vec<(i64, Vec<f64>)> = vec![(0, Vec::new()); steps + 1];
    rows[steps] = (0, vec![0.0]);
    for k in (0..steps).rev() {
        let m = half_width(k);
        let (next_first, next) = &rows[k + 1];
        let next_first = *next_first;
        let lookup = |x: i64| -> f64 {
            let d = x - next_first;
            if d < 0 || d % 2 != 0 {
                return NEG_INF;
            }
            next.get((d / 2) as usize).copied().unwrap_or(NEG_INF)
        };
        let mut row = Vec::new();
        let first = if m >= 0 { -m } else { 0 };
        if m >= 0 {
            let mut x = -m;
            while x <= m {
                let w = env.at(x);
                let up = w.ln() + lookup(x + 1);
                let down = (1.0 - w).ln() + lookup(x - 1);
                row.push(ln_add_exp(up, down));
                x += 2;
            }
        }
        rows[k] = (first, row);
    }
    Ok(DpTable::from_rows(steps, rows))
}

/// Bridge sampler for a fixed environment and length; the backward table
/// is built once and shared by all draws.
pub struct BridgeSampler<'a> {
    env: &'a Environment,
    n: usize,
    table: DpTable,
    omega_min: f64,
}

impl<'a> BridgeSampler<'a> {
    pub fn new(env: &'a Environment, n: usize) -> Result<Self> {
        Self::with_radius(env, n, None)
    }

    /// Sampler for bridges additionally confined to `|x| < radius`.
    pub fn with_radius(env: &'a Environment, n: usize, radius: Option<u64>) -> Result<Self> {
        let table = backward_table(env, n, radius)?;
        if table.get(0, 0) == NEG_INF {
            return Err(Error::DegenerateBridge(n));
        }
        Ok(Self {
            env,
            n,
            table,
            omega_min: env.omega_min(),
        })
    }

    pub fn table(&self) -> &DpTable {
        &self.table
    }

    /// `ln P_ω(X_{2n} = 0)` (within the confinement, if any).
    pub fn log_normalizer(&self) -> f64 {
        self.table.get(0, 0)
    }

    /// Unnormalized Doob transition weights `(up, down)` at `(k, x)`; they
    /// sum to one up to rounding.
    pub fn transition(&self, k: usize, x: i64) -> (f64, f64) {
        let h = self.table.get(k, x);
        let w = self.env.at(x);
        let up = w.ln() + self.table.get(k + 1, x + 1) - h;
        let down = (1.0 - w).ln() + self.table.get(k + 1, x - 1) - h;
        (up.exp(), down.exp())
    }

    fn p_up(&self, k: usize, x: i64) -> f64 {
        let w = self.env.at(x);
        let up = w.ln() + self.table.get(k + 1, x + 1);
        let down = (1.0 - w).ln() + self.table.get(k + 1, x - 1);
        if up == NEG_INF {
            0.0
        } else if down == NEG_INF {
            1.0
        } else {
            1.0 / (1.0 + (down - up).exp())
        }
    }

    pub fn sample_with<R: Rng>(&self, rng: &mut R) -> BridgePath {
        let steps = 2 * self.n;
        let mut sites = Vec::with_capacity(steps + 1);
        let mut x = 0i64;
        sites.push(x);
        for k in 0..steps {
            let u: f64 = rng.gen();
            x += if u < self.p_up(k, x) { 1 } else { -1 };
            sites.push(x);
        }
        debug_assert_eq!(x, 0);
        let max_abs = sites.iter().map(|s| s.unsigned_abs()).max().unwrap_or(0);
        let b_count = count_biased_visits(self.env, &sites, self.omega_min);
        BridgePath {
            n: self.n,
            sites,
            max_abs,
            b_count,
            seed: 0,
            stream: 0,
        }
    }

    /// Draws the path for `(seed, stream)`; the result does not depend on
    /// which thread or in which order draws happen.
    pub fn sample(&self, seed: u64, stream: u64) -> BridgePath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut path = self.sample_with(&mut rng);
        path.seed = seed;
        path.stream = stream;
        path
    }
}

/// One bridge of length `2n` keyed by `seed`.
pub fn sample_bridge(env: &Environment, n: usize, seed: u64) -> Result<BridgePath> {
    Ok(BridgeSampler::new(env, n)?.sample(seed, 0))
}

/// 99% Dvoretzky–Kiefer–Wolfowitz half-width for `n` samples.
pub fn dkw_half_width(n_samples: usize, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * n_samples as f64)).sqrt()
}

/// Empirical law of the bridge maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxDispSummary {
    pub n: usize,
    pub seed: u64,
    /// Sorted sample maxima.
    pub sorted_max: Vec<u64>,
    pub median: u64,
    pub q05: u64,
    pub q95: u64,
    pub mean_b_count: f64,
    pub dkw_half_width: f64,
}

impl MaxDispSummary {
    fn from_paths(n: usize, seed: u64, maxima: Vec<u64>, b_counts: &[usize]) -> Self {
        let mut sorted_max = maxima;
        sorted_max.sort_unstable();
        let k = sorted_max.len();
        let quantile = |q: f64| {
            let idx = ((q * k as f64).ceil() as usize).clamp(1, k) - 1;
            sorted_max[idx]
        };
        let mean_b_count = b_counts.iter().sum::<usize>() as f64 / k as f64;
        Self {
            n,
            seed,
            median: quantile(0.5),
            q05: quantile(0.05),
            q95: quantile(0.95),
            mean_b_count,
            dkw_half_width: dkw_half_width(k, 0.99),
            sorted_max,
        }
    }

    /// Empirical `P(max < m)`.
    pub fn ecdf_below(&self, m: u64) -> f64 {
        self.sorted_max.partition_point(|&v| v < m) as f64 / self.sorted_max.len() as f64
    }

    pub fn csv_header() -> &'static str {
        "n,seed_count,median,q05,q95,mean_b_count"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.n,
            self.sorted_max.len(),
            self.median,
            self.q05,
            self.q95,
            fmt_g17(self.mean_b_count)
        )
    }
}

/// `n_samples` independent bridges, sample `i` drawn from stream `i` of
/// `seed`.
pub fn max_disp_samples(
    env: &Environment,
    n: usize,
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<MaxDispSummary> {
    if n_samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let sampler = BridgeSampler::new(env, n)?;
    let draws = exec.map_range(n_samples, |i| {
        let p = sampler.sample(seed, i as u64);
        (p.max_abs, p.b_count)
    });
    let maxima = draws.iter().map(|d| d.0).collect();
    let b_counts: Vec<usize> = draws.iter().map(|d| d.1).collect();
    Ok(MaxDispSummary::from_paths(n, seed, maxima, &b_counts))
}
