//! Exact quenched probabilities by dynamic programming on the space-time
//! lattice.
//!
//! All masses are carried as natural logarithms and combined with
//! [`ln_add_exp`], so probabilities far below `f64::MIN_POSITIVE` stay exact
//! to relative precision. Only sites of the parity reachable at a given step
//! are visited, and bridge computations skip sites that can no longer
//! return to the origin in the remaining time.

use crate::env_model::Environment;
use crate::error::{Error, Result};
use crate::par::Execution;

pub const NEG_INF: f64 = f64::NEG_INFINITY;

/// Largest `n` for which [`max_disp_bridge_cdf`] sweeps every `M`.
pub const FULL_SWEEP_MAX_N: usize = 1 << 10;

/// `ln(e^a + e^b)` with `-inf` as the additive identity.
#[inline]
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ e^{x_i}` over a slice; `-inf` for an empty or all-`-inf` slice.
pub fn ln_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(NEG_INF, f64::max);
    if m == NEG_INF {
        return NEG_INF;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// What happens to the walk when it leaves an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Mass leaving the interval is recorded per side.
    Absorbing,
    /// Mass leaving the interval is discarded.
    Killing,
}

/// Sites `lo..=hi` the walk may occupy; `None` leaves a side open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalSpec {
    pub lo: Option<i64>,
    pub hi: Option<i64>,
    pub boundary: Boundary,
}

impl IntervalSpec {
    pub fn unbounded() -> Self {
        Self {
            lo: None,
            hi: None,
            boundary: Boundary::Killing,
        }
    }

    /// The open interval `(-m, m)`, i.e. `max |X_k| < m`.
    pub fn symmetric(m: u64) -> Self {
        let m = m as i64;
        Self {
            lo: Some(1 - m),
            hi: Some(m - 1),
            boundary: Boundary::Killing,
        }
    }
}

/// Optional pruning of negligible cells.
///
/// Cells whose log mass falls below the step maximum plus `ln(relative)` are
/// dropped and their mass is added to a running total, which bounds the
/// absolute error of any probability read from the final row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub relative: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { relative: 1e-300 }
    }
}

/// Final state of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutcome {
    pub site_lo: i64,
    /// Log mass per site in `site_lo..`, `-inf` where unreachable.
    pub log_mass: Vec<f64>,
    /// Log mass that left through the lower side (absorbing intervals).
    pub absorbed_lo: f64,
    pub absorbed_hi: f64,
    /// Log of the total mass removed by truncation (`-inf` when off).
    pub discarded: f64,
}

impl ForwardOutcome {
    pub fn at(&self, x: i64) -> f64 {
        let i = x - self.site_lo;
        if i < 0 || i as usize >= self.log_mass.len() {
            NEG_INF
        } else {
            self.log_mass[i as usize]
        }
    }

    pub fn total(&self) -> f64 {
        ln_sum_exp(&self.log_mass)
    }
}

/// Forward lattice walker over a fixed site range.
struct Forward {
    lo: i64,
    hi: i64,
    ln_up: Vec<f64>,
    ln_down: Vec<f64>,
    cur: Vec<f64>,
    next: Vec<f64>,
    /// Active range at the current step.
    a: i64,
    b: i64,
    step: usize,
    /// Total step count for bridge pruning.
    bridge_to: Option<usize>,
    truncation: Option<Truncation>,
    absorbed_lo: f64,
    absorbed_hi: f64,
    discarded: f64,
}

impl Forward {
    fn new(
        env: &Environment,
        lo: i64,
        hi: i64,
        bridge_to: Option<usize>,
        truncation: Option<Truncation>,
    ) -> Self {
        debug_assert!(lo <= 0 && 0 <= hi);
        let width = (hi - lo + 1) as usize;
        let mut ln_up = Vec::with_capacity(width);
        let mut ln_down = Vec::with_capacity(width);
        for x in lo..=hi {
            if env.contains(x) {
                let w = env.at(x);
                ln_up.push(w.ln());
                ln_down.push((1.0 - w).ln());
            } else {
                // Never stepped from: callers validate the sites they use.
                ln_up.push(NEG_INF);
                ln_down.push(NEG_INF);
            }
        }
        let mut cur = vec![NEG_INF; width];
        cur[(-lo) as usize] = 0.0;
        Self {
            lo,
            hi,
            ln_up,
            ln_down,
            cur,
            next: vec![NEG_INF; width],
            a: 0,
            b: 0,
            step: 0,
            bridge_to,
            truncation,
            absorbed_lo: NEG_INF,
            absorbed_hi: NEG_INF,
            discarded: NEG_INF,
        }
    }

    #[inline]
    fn idx(&self, x: i64) -> usize {
        (x - self.lo) as usize
    }

    fn advance(&mut self) {
        let (a, b) = (self.a, self.b);
        if a > b {
            self.step += 1;
            return;
        }
        // Boundary flux out of the range.
        if a == self.lo {
            let v = self.cur[self.idx(a)] + self.ln_down[self.idx(a)];
            self.absorbed_lo = ln_add_exp(self.absorbed_lo, v);
        }
        if b == self.hi {
            let v = self.cur[self.idx(b)] + self.ln_up[self.idx(b)];
            self.absorbed_hi = ln_add_exp(self.absorbed_hi, v);
        }

        let mut na = (a - 1).max(self.lo);
        let mut nb = (b + 1).min(self.hi);
        let parity = ((self.step + 1) % 2) as i64;
        if let Some(total) = self.bridge_to {
            let left = total.saturating_sub(self.step + 1) as i64;
            if -left > na {
                na = -left;
            }
            if left < nb {
                nb = left;
            }
            // Mass pruned here cannot reach the origin in time.
        }
        if na.rem_euclid(2) != parity {
            na += 1;
        }
        if nb.rem_euclid(2) != parity {
            nb -= 1;
        }

        let mut step_max = NEG_INF;
        let mut x = na;
        while x <= nb {
            let mut v = NEG_INF;
            if x > a && x - 1 <= b {
                let j = self.idx(x - 1);
                v = self.cur[j] + self.ln_up[j];
            }
            if x + 1 >= a && x < b {
                let j = self.idx(x + 1);
                v = ln_add_exp(v, self.cur[j] + self.ln_down[j]);
            }
            let i = self.idx(x);
            self.next[i] = v;
            if v > step_max {
                step_max = v;
            }
            x += 2;
        }

        if let Some(t) = self.truncation {
            if step_max > NEG_INF {
                let cut = step_max + t.relative.ln();
                let mut x = na;
                while x <= nb {
                    let i = self.idx(x);
                    if self.next[i] < cut && self.next[i] > NEG_INF {
                        self.discarded = ln_add_exp(self.discarded, self.next[i]);
                        self.next[i] = NEG_INF;
                    }
                    x += 2;
                }
            }
        }

        // Clear the cells of the old step so the buffer can be reused.
        let mut x = a;
        while x <= b {
            let i = self.idx(x);
            self.cur[i] = NEG_INF;
            x += 2;
        }
        std::mem::swap(&mut self.cur, &mut self.next);
        self.a = na;
        self.b = nb;
        self.step += 1;
    }

    fn finish(self) -> ForwardOutcome {
        ForwardOutcome {
            site_lo: self.lo,
            log_mass: self.cur,
            absorbed_lo: self.absorbed_lo,
            absorbed_hi: self.absorbed_hi,
            discarded: self.discarded,
        }
    }
}

/// Sites in `[lo, hi]` from which a step may be taken during `steps` steps
/// (with bridge pruning when `bridge` is set).
fn stepping_sites(lo: i64, hi: i64, steps: usize, bridge: bool) -> (i64, i64) {
    if steps == 0 {
        return (1, 0);
    }
    let reach = if bridge {
        (steps / 2) as i64
    } else {
        steps as i64 - 1
    };
    (lo.max(-reach), hi.min(reach))
}

/// Runs `steps` steps from the origin inside `interval`.
///
/// With `bridge` set, only mass that can still return to the origin by
/// time `steps` is propagated.
pub fn forward(
    env: &Environment,
    steps: usize,
    interval: &IntervalSpec,
    bridge: bool,
    truncation: Option<Truncation>,
) -> Result<ForwardOutcome> {
    let reach = steps as i64;
    let lo = interval.lo.unwrap_or(-reach).max(-reach);
    let hi = interval.hi.unwrap_or(reach).min(reach);
    if lo > 0 || hi < 0 {
        return Err(Error::Domain(format!(
            "interval [{lo}, {hi}] does not contain the origin"
        )));
    }
    let (need_lo, need_hi) = stepping_sites(lo, hi, steps, bridge);
    env.require(need_lo, need_hi)?;
    let mut fw = Forward::new(env, lo, hi, bridge.then_some(steps), truncation);
    for _ in 0..steps {
        fw.advance();
    }
    Ok(fw.finish())
}

/// `ln P_ω(X_{2n} = 0)`.
pub fn bridge_log_prob(env: &Environment, n: usize) -> Result<f64> {
    let out = forward(env, 2 * n, &IntervalSpec::unbounded(), true, None)?;
    Ok(out.at(0))
}

/// Bridge log-probability together with a rigorous bound on the error
/// introduced by truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedLogProb {
    pub value: f64,
    /// `ln(1 + D / P)` where `D` is the discarded mass; the exact value lies
    /// in `[value, value + error_bound]`.
    pub error_bound: f64,
}

pub fn bridge_log_prob_truncated(
    env: &Environment,
    n: usize,
    truncation: Truncation,
) -> Result<TruncatedLogProb> {
    let out = forward(
        env,
        2 * n,
        &IntervalSpec::unbounded(),
        true,
        Some(truncation),
    )?;
    let value = out.at(0);
    let error_bound = if out.discarded == NEG_INF {
        0.0
    } else if value == NEG_INF {
        f64::INFINITY
    } else {
        (out.discarded - value).exp().ln_1p()
    };
    Ok(TruncatedLogProb { value, error_bound })
}

/// `ln P_ω(max_{k ≤ steps} |X_k| < m)`, or with `require_bridge`
/// `ln P_ω(max_{k ≤ steps} |X_k| < m, X_steps = 0)`.
pub fn confined_log_prob(
    env: &Environment,
    steps: usize,
    m: u64,
    require_bridge: bool,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("confinement radius must be >= 1".into()));
    }
    if require_bridge && steps % 2 == 1 {
        return Err(Error::Parity(steps));
    }
    let out = forward(
        env,
        steps,
        &IntervalSpec::symmetric(m),
        require_bridge,
        None,
    )?;
    Ok(if require_bridge {
        out.at(0)
    } else {
        out.total()
    })
}

/// `P_ω(T_target ≤ k)` for `k = 0..=horizon`.
pub fn hitting_cdf(env: &Environment, target: i64, horizon: usize) -> Result<Vec<f64>> {
    if target == 0 {
        return Ok(vec![1.0; horizon + 1]);
    }
    let interval = if target > 0 {
        IntervalSpec {
            lo: None,
            hi: Some(target - 1),
            boundary: Boundary::Absorbing,
        }
    } else {
        IntervalSpec {
            lo: Some(target + 1),
            hi: None,
            boundary: Boundary::Absorbing,
        }
    };
    let reach = horizon as i64;
    let lo = interval.lo.unwrap_or(-reach).max(-reach);
    let hi = interval.hi.unwrap_or(reach).min(reach);
    let (need_lo, need_hi) = stepping_sites(lo, hi, horizon, false);
    env.require(need_lo, need_hi)?;

    let mut fw = Forward::new(env, lo, hi, None, None);
    let mut cdf = Vec::with_capacity(horizon + 1);
    cdf.push(0.0);
    for _ in 0..horizon {
        fw.advance();
        let absorbed = if target > 0 {
            fw.absorbed_hi
        } else {
            fw.absorbed_lo
        };
        // Only the target side absorbs; the open side is wide enough that
        // nothing leaves through it within the horizon.
        cdf.push(absorbed.exp().min(1.0));
    }
    Ok(cdf)
}

/// Exact conditional law of `max_{k ≤ 2n} |X_k|` given `X_{2n} = 0`, on a
/// grid of radii.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeMaxCdf {
    pub n: usize,
    /// Radii `M`, ascending.
    pub ms: Vec<u64>,
    /// `P_ω(max |X_k| < M | X_{2n} = 0)` for each entry of `ms`.
    pub cdf: Vec<f64>,
    pub bridge_log_prob: f64,
}

impl BridgeMaxCdf {
    /// `P(max < m)` if `m` is on the grid.
    pub fn at(&self, m: u64) -> Option<f64> {
        self.ms.binary_search(&m).ok().map(|i| self.cdf[i])
    }
}

/// Radii used by [`max_disp_bridge_cdf`]: every `M` in `1..=n+1` up to
/// [`FULL_SWEEP_MAX_N`], otherwise all `M ≤ 32` followed by a geometric
/// grid of ratio 1.05 ending at `n + 1`.
pub fn default_radius_grid(n: usize) -> Vec<u64> {
    let top = n as u64 + 1;
    if n <= FULL_SWEEP_MAX_N {
        return (1..=top).collect();
    }
    let mut ms: Vec<u64> = (1..=32.min(top)).collect();
    let mut r = 32.0f64;
    loop {
        r *= 1.05;
        let m = r.round() as u64;
        if m >= top {
            break;
        }
        if m > *ms.last().unwrap() {
            ms.push(m);
        }
    }
    ms.push(top);
    ms
}

fn check_bridge(env: &Environment, n: usize) -> Result<f64> {
    let lp = bridge_log_prob(env, n)?;
    if lp == NEG_INF {
        return Err(Error::DegenerateBridge(n));
    }
    Ok(lp)
}

pub fn max_disp_bridge_cdf(env: &Environment, n: usize, exec: Execution) -> Result<BridgeMaxCdf> {
    max_disp_bridge_cdf_at(env, n, &default_radius_grid(n), exec)
}

/// Conditional CDF of the bridge maximum at the given radii (one confined
/// DP per radius).
pub fn max_disp_bridge_cdf_at(
    env: &Environment,
    n: usize,
    ms: &[u64],
    exec: Execution,
) -> Result<BridgeMaxCdf> {
    let lp = check_bridge(env, n)?;
    let mut ms = ms.to_vec();
    ms.sort_unstable();
    ms.dedup();
    let values = exec.map(&ms, |&m| confined_log_prob(env, 2 * n, m, true));
    let mut cdf = Vec::with_capacity(ms.len());
    let mut running = 0.0f64;
    for v in values {
        let p = (v? - lp).exp().min(1.0);
        // Rounding can make adjacent radii disagree in the last bit.
        running = running.max(p);
        cdf.push(running);
    }
    Ok(BridgeMaxCdf {
        n,
        ms,
        cdf,
        bridge_log_prob: lp,
    })
}

/// Smallest `m` with `P_ω(max_{k ≤ 2n} |X_k| ≤ m | X_{2n} = 0) ≥ q`, found by
/// bisection on the radius.
pub fn bridge_max_quantile(env: &Environment, n: usize, q: f64) -> Result<u64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!("quantile level {q} not in (0, 1]")));
    }
    if n == 0 {
        return Ok(0);
    }
    let lp = check_bridge(env, n)?;
    let below =
        |m: u64| -> Result<f64> { Ok((confined_log_prob(env, 2 * n, m + 1, true)? - lp).exp()) };
    // P(max ≤ n) = 1, and max ≥ 1 always.
    let (mut lo, mut hi) = (1u64, n as u64);
    if below(lo)? >= q {
        return Ok(lo);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if below(mid)? >= q {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `P_ω^x(T_a < T_b)` and `P_ω^x(T_b < T_a)` from the explicit hitting
/// formula, summed in log space.
pub fn exit_probs_closed_form(env: &Environment, a: i64, x: i64, b: i64) -> Result<(f64, f64)> {
    if !(a < x && x < b) {
        return Err(Error::Ordering { a, x, b });
    }
    env.require(a, b)?;
    // partial[j - a] = Σ_{i=a+1}^{j} ln ρ_i
    let mut partial = Vec::with_capacity((b - a) as usize);
    let mut acc = 0.0;
    partial.push(0.0);
    for i in a + 1..b {
        let w = env.at(i);
        acc += (1.0 - w).ln() - w.ln();
        partial.push(acc);
    }
    let split = (x - a) as usize;
    let total = ln_sum_exp(&partial);
    let left = (ln_sum_exp(&partial[split..]) - total).exp();
    let right = (ln_sum_exp(&partial[..split]) - total).exp();
    Ok((left, right))
}

/// `P_ω^x(T_a < T_b)`.
pub fn exit_prob_closed_form(env: &Environment, a: i64, x: i64, b: i64) -> Result<f64> {
    exit_probs_closed_form(env, a, x, b).map(|(left, _)| left)
}

/// Full forward table for the unrestricted walk from the origin, used for
/// inspection and export. Row `k` holds sites `-k, -k+2, …, k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTable {
    pub n_steps: usize,
    rows: Vec<(i64, Vec<f64>)>,
}

impl DpTable {
    pub(crate) fn from_rows(n_steps: usize, rows: Vec<(i64, Vec<f64>)>) -> Self {
        debug_assert_eq!(rows.len(), n_steps + 1);
        Self { n_steps, rows }
    }

    /// Log mass at `(step, x)`; `-inf` off the stored cells.
    #[inline]
    pub fn get(&self, step: usize, x: i64) -> f64 {
        let (first, row) = &self.rows[step];
        let d = x - first;
        if d < 0 || d % 2 != 0 {
            return NEG_INF;
        }
        row.get((d / 2) as usize).copied().unwrap_or(NEG_INF)
    }

    /// Stored sites and values of one step.
    pub fn row(&self, step: usize) -> impl Iterator<Item = (i64, f64)> + '_ {
        let (first, row) = &self.rows[step];
        row.iter()
            .enumerate()
            .map(move |(i, &v)| (first + 2 * i as i64, v))
    }

    pub fn site_range(&self) -> (i64, i64) {
        let lo = self.rows.iter().map(|r| r.0).min().unwrap_or(0);
        let hi = self
            .rows
            .iter()
            .map(|r| r.0 + 2 * r.1.len() as i64 - 2)
            .max()
            .unwrap_or(0);
        (lo, hi)
    }
}

pub fn forward_table(env: &Environment, steps: usize) -> Result<DpTable> {
    let (need_lo, need_hi) = stepping_sites(-(steps as i64), steps as i64, steps, false);
    env.require(need_lo, need_hi)?;
    let mut rows = Vec::with_capacity(steps + 1);
    rows.push((0i64, vec![0.0]));
    for k in 0..steps {
        let (first, prev) = &rows[k];
        let first = *first;
        let mut next = Vec::with_capacity(prev.len() + 1);
        for j in 0..=prev.len() {
            let x = first - 1 + 2 * j as i64;
            let mut v = NEG_INF;
            if j >= 1 {
                v = prev[j - 1] + env.at(x - 1).ln();
            }
            if j < prev.len() {
                v = ln_add_exp(v, prev[j] + (1.0 - env.at(x + 1)).ln());
            }
            next.push(v);
        }
        rows.push((first - 1, next));
    }
    Ok(DpTable::from_rows(steps, rows))
}
