//! Independent reference implementations used by the integration tests.
//! Everything here works in the linear domain by brute force.

#![allow(dead_code)]

use rwre_core::{Environment, SiteDistribution};

pub fn nestling_law() -> SiteDistribution {
    SiteDistribution::new(vec![(0.25, 0.1), (0.75, 0.9)]).unwrap()
}

pub fn marginal() -> SiteDistribution {
    SiteDistribution::new(vec![(0.5, 0.5), (0.75, 0.5)]).unwrap()
}

pub fn non_nestling() -> SiteDistribution {
    SiteDistribution::new(vec![(0.6, 0.5), (0.8, 0.5)]).unwrap()
}

pub fn recurrent() -> SiteDistribution {
    SiteDistribution::new(vec![(1.0 / 3.0, 0.5), (2.0 / 3.0, 0.5)]).unwrap()
}

/// One distribution per regime: nestling, marginal, non-nestling, recurrent.
pub fn regimes() -> Vec<(&'static str, SiteDistribution)> {
    vec![
        ("nestling", nestling_law()),
        ("marginal", marginal()),
        ("non_nestling", non_nestling()),
        ("recurrent", recurrent()),
    ]
}

/// Every path of `steps` steps from the origin with its probability.
pub fn all_paths(env: &Environment, steps: usize) -> Vec<(Vec<i64>, f64)> {
    let mut out = Vec::with_capacity(1 << steps);
    for bits in 0u64..(1u64 << steps) {
        let mut x = 0i64;
        let mut p = 1.0;
        let mut path = vec![0i64];
        for k in 0..steps {
            let w = env.omega(x).unwrap();
            if bits >> k & 1 == 1 {
                p *= w;
                x += 1;
            } else {
                p *= 1.0 - w;
                x -= 1;
            }
            path.push(x);
        }
        out.push((path, p));
    }
    out
}

fn max_abs(path: &[i64]) -> u64 {
    path.iter().map(|x| x.unsigned_abs()).max().unwrap()
}

pub fn bridge_prob(env: &Environment, n: usize) -> f64 {
    all_paths(env, 2 * n)
        .iter()
        .filter(|(p, _)| *p.last().unwrap() == 0)
        .map(|(_, q)| q)
        .sum()
}

pub fn confined_prob(env: &Environment, steps: usize, m: u64, bridge: bool) -> f64 {
    all_paths(env, steps)
        .iter()
        .filter(|(p, _)| max_abs(p) < m && (!bridge || *p.last().unwrap() == 0))
        .map(|(_, q)| q)
        .sum()
}

pub fn hitting_cdf(env: &Environment, target: i64, horizon: usize) -> Vec<f64> {
    let mut cdf = vec![0.0; horizon + 1];
    for (path, q) in all_paths(env, horizon) {
        if let Some(t) = path.iter().position(|&x| x == target) {
            for c in &mut cdf[t..] {
                *c += q;
            }
        }
    }
    cdf
}

/// `P(max |X| < M | X_{2n} = 0)` for `M = 1..=n+1`.
pub fn bridge_max_cdf(env: &Environment, n: usize) -> Vec<f64> {
    let paths: Vec<_> = all_paths(env, 2 * n)
        .into_iter()
        .filter(|(p, _)| *p.last().unwrap() == 0)
        .collect();
    let total: f64 = paths.iter().map(|(_, q)| q).sum();
    (1..=n as u64 + 1)
        .map(|m| {
            paths
                .iter()
                .filter(|(p, _)| max_abs(p) < m)
                .map(|(_, q)| q)
                .sum::<f64>()
                / total
        })
        .collect()
}

/// `P^x(T_a < T_b)` by iterating the killed chain until the surviving mass
/// is negligible.
pub fn exit_left_by_iteration(env: &Environment, a: i64, x: i64, b: i64) -> f64 {
    let width = (b - a + 1) as usize;
    let mut mass = vec![0.0; width];
    mass[(x - a) as usize] = 1.0;
    let mut left = 0.0;
    for _ in 0..10_000_000 {
        let mut next = vec![0.0; width];
        for i in 1..width - 1 {
            let w = env.omega(a + i as i64).unwrap();
            next[i + 1] += w * mass[i];
            next[i - 1] += (1.0 - w) * mass[i];
        }
        left += next[0];
        next[0] = 0.0;
        next[width - 1] = 0.0;
        mass = next;
        if mass.iter().sum::<f64>() < 1e-18 {
            break;
        }
    }
    left
}

/// Textbook ratio-of-sums formula for `P^x(T_a < T_b)`.
pub fn exit_left_formula(env: &Environment, a: i64, x: i64, b: i64) -> f64 {
    let mut prod = 1.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for j in a..b {
        if j > a {
            prod *= env.rho(j).unwrap();
        }
        if j >= x {
            num += prod;
        }
        den += prod;
    }
    num / den
}

/// Binomial coefficient as a float.
pub fn choose(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
