//! Reference quantities and finite-`n` fits: longest fair runs, simple
//! random walk small deviations, exit-time moment generating functions, and
//! least-squares exponent/constant fits.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::env_model::Environment;
use crate::error::{Error, Result};
use crate::exact_kernel::confined_log_prob;
use crate::format::fmt_g17;

/// Which sites count as "fair" in [`longest_fair_run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FairPredicate {
    /// `ω_x = 1/2`.
    Half,
    /// `ω_x` equal to the given value (typically `ω_min`).
    Equals(f64),
}

impl FairPredicate {
    fn test(&self, omega: f64) -> bool {
        match *self {
            FairPredicate::Half => omega == 0.5,
            FairPredicate::Equals(v) => omega == v,
        }
    }
}

/// Longest run of fair sites. `start` is `None` when there is no fair site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FairRun {
    pub length: usize,
    pub start: Option<i64>,
}

/// Longest stretch of consecutive fair sites in `[a, b)`, leftmost on ties.
pub fn longest_fair_run(env: &Environment, a: i64, b: i64, pred: FairPredicate) -> Result<FairRun> {
    if b <= a {
        return Ok(FairRun {
            length: 0,
            start: None,
        });
    }
    env.require(a, b - 1)?;
    let mut best = FairRun {
        length: 0,
        start: None,
    };
    let mut run = 0usize;
    for x in a..b {
        if pred.test(env.at(x)) {
            run += 1;
            if run > best.length {
                best = FairRun {
                    length: run,
                    start: Some(x + 1 - run as i64),
                };
            }
        } else {
            run = 0;
        }
    }
    Ok(best)
}

/// Exact small-deviation probability of the simple symmetric walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallDeviation {
    /// `ln P_{1/2}(max_{k ≤ n} |X_k| < x)`.
    pub log_prob: f64,
    /// `(x² / n) · log_prob`, which tends to `−π²/8`.
    pub normalized: f64,
}

pub fn srw_smalldev_constant(n_steps: usize, x: u64) -> Result<SmallDeviation> {
    if x == 0 || n_steps == 0 {
        return Err(Error::Domain("need n_steps >= 1 and x >= 1".into()));
    }
    let r = x as i64;
    let env = Environment::homogeneous(0.5, -r, r)?;
    let log_prob = confined_log_prob(&env, n_steps, x, false)?;
    let normalized = if log_prob == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        (x * x) as f64 / n_steps as f64 * log_prob
    };
    Ok(SmallDeviation {
        log_prob,
        normalized,
    })
}

/// `−ln cos(π / 2ℓ)`, the abscissa of convergence of the exit-time MGF.
pub fn lambda_crit(ell: u32) -> f64 {
    if ell <= 1 {
        return f64::INFINITY;
    }
    -(PI / (2.0 * ell as f64)).cos().ln()
}

/// `(1 − ε)² π² / (8 ℓ²)`.
pub fn lambda_eps(eps: f64, ell: u32) -> f64 {
    let l = ell as f64;
    (1.0 - eps).powi(2) * PI * PI / (8.0 * l * l)
}

/// `C₁(ε) = ((1 − ε)π/2) tan((1 − ε)π/2)`.
pub fn c1_const(eps: f64) -> f64 {
    let t = (1.0 - eps) * PI / 2.0;
    t * t.tan()
}

/// `1 + C₁(ε)/ℓ`.
pub fn mgf_bound(eps: f64, ell: u32) -> f64 {
    1.0 + c1_const(eps) / ell as f64
}

/// `arccos(e^{−λ})` through `2 asin(√((1 − e^{−λ})/2))`, accurate for small λ.
fn c_lambda(lambda: f64) -> f64 {
    2.0 * (-(-lambda).exp_m1() / 2.0).sqrt().asin()
}

fn check_mgf_args(ell: u32, lambda: f64) -> Result<()> {
    if ell == 0 {
        return Err(Error::Domain("ell must be >= 1".into()));
    }
    if lambda.is_nan() || lambda < 0.0 || lambda >= lambda_crit(ell) {
        return Err(Error::Domain(format!(
            "lambda = {lambda} outside [0, lambda_crit({ell}) = {})",
            lambda_crit(ell)
        )));
    }
    Ok(())
}

/// `E[e^{λσ}]` where `σ` is the exit time of a simple walk started at 1 from
/// `[1, 2ℓ − 1]`: `cos(c_λ(ℓ − 1)) / cos(c_λ ℓ)`.
pub fn exit_mgf_closed(ell: u32, lambda: f64) -> Result<f64> {
    check_mgf_args(ell, lambda)?;
    let c = c_lambda(lambda);
    let l = ell as f64;
    Ok((c * (l - 1.0)).cos() / (c * l).cos())
}

/// The same expectation by propagating the killed walk and summing
/// `P(σ = k) e^{λk}` until the estimated remainder drops below `tail_tol`.
///
/// The walk has period two, so the remainder is bounded through the
/// two-step decay ratio of the weighted surviving mass, which settles to
/// `e^{2λ} cos²(π/2ℓ)`.
pub fn exit_mgf_dp(ell: u32, lambda: f64, tail_tol: f64) -> Result<f64> {
    check_mgf_args(ell, lambda)?;
    const MAX_STEPS: usize = 50_000_000;
    let width = 2 * ell as usize - 1;
    let half_growth = 0.5 * lambda.exp();
    let mut cur = vec![0.0; width];
    let mut next = vec![0.0; width];
    cur[0] = 1.0;
    // surviving mass at steps k-3..=k
    let mut hist = [f64::NAN, f64::NAN, f64::NAN, 1.0f64];
    // Neumaier-compensated running sum of exits.
    let (mut total, mut comp) = (0.0f64, 0.0f64);
    let mut add = |v: f64| {
        let t = total + v;
        if total.abs() >= v.abs() {
            comp += (total - t) + v;
        } else {
            comp += (v - t) + total;
        }
        total = t;
    };

    for _ in 0..MAX_STEPS {
        let exits = half_growth * (cur[0] + cur[width - 1]);
        add(exits);
        let mut s = 0.0;
        for i in 0..width {
            let left = if i > 0 { cur[i - 1] } else { 0.0 };
            let right = if i + 1 < width { cur[i + 1] } else { 0.0 };
            next[i] = half_growth * (left + right);
            s += next[i];
        }
        std::mem::swap(&mut cur, &mut next);
        if s == 0.0 {
            return Ok(total + comp);
        }
        hist = [hist[1], hist[2], hist[3], s];
        let r_a = hist[3] / hist[1];
        let r_b = hist[2] / hist[0];
        if (r_a - r_b).abs() <= 1e-9 * r_a && r_a.max(r_b) < 1.0 {
            // exits after this step are at most e^λ times the later masses
            let r2 = r_a.max(r_b);
            let growth = 2.0 * half_growth;
            let tail = growth * s * (1.0 + growth) / (1.0 - r2);
            if tail < tail_tol {
                return Ok(total + comp);
            }
        }
    }
    Err(Error::Domain(format!(
        "exit MGF series did not converge within {MAX_STEPS} steps"
    )))
}

/// Transformation applied to the observable before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformTag {
    /// `y = ln(−raw)`; the slope is the stretched-exponential exponent.
    LogLogNegLog,
    /// `y = ((ln n)² / n)(raw + 2 n I₀)`.
    LnLnSqOverN,
    /// `y = raw`.
    Raw,
}

impl TransformTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransformTag::LogLogNegLog => "loglog_neglog",
            TransformTag::LnLnSqOverN => "lnln_sq_over_n",
            TransformTag::Raw => "raw",
        }
    }
}

/// Ordinary least-squares fit of a transformed series against `ln n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub ns: Vec<f64>,
    pub raw: Vec<f64>,
    /// `ln n`, strictly increasing.
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    pub transform_tag: TransformTag,
    /// Theoretical slope or constant to compare with, when one exists.
    pub target: Option<f64>,
}

impl ScalingFit {
    pub fn residual(&self, i: usize) -> f64 {
        self.ys[i] - (self.intercept + self.slope * self.xs[i])
    }

    pub fn last(&self) -> f64 {
        *self.ys.last().unwrap()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,raw,transformed,target,residual\n");
        let target = self.target.map(fmt_g17).unwrap_or_else(|| "nan".into());
        for i in 0..self.ns.len() {
            writeln!(
                s,
                "{},{},{},{},{}",
                fmt_g17(self.ns[i]),
                fmt_g17(self.raw[i]),
                fmt_g17(self.ys[i]),
                target,
                fmt_g17(self.residual(i))
            )
            .unwrap();
        }
        s
    }
}

/// `(slope, intercept)` of the least-squares line through `(xs, ys)`.
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn build_fit(
    series: &[(f64, f64)],
    tag: TransformTag,
    transform: impl Fn(f64, f64) -> f64,
    target: Option<f64>,
) -> Result<ScalingFit> {
    if series.len() < 4 {
        return Err(Error::Domain(format!(
            "need at least 4 points, got {}",
            series.len()
        )));
    }
    if series
        .windows(2)
        .any(|w| w[1].0.partial_cmp(&w[0].0) != Some(std::cmp::Ordering::Greater))
        || series[0].0 <= 0.0
    {
        return Err(Error::Domain(
            "n values must be positive and strictly increasing".into(),
        ));
    }
    let ns: Vec<f64> = series.iter().map(|p| p.0).collect();
    let raw: Vec<f64> = series.iter().map(|p| p.1).collect();
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = series.iter().map(|&(n, v)| transform(n, v)).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Domain(
            "transformed series has non-finite values".into(),
        ));
    }
    let (slope, intercept) = ols(&xs, &ys);
    let mut fit = ScalingFit {
        ns,
        raw,
        xs,
        ys,
        slope,
        intercept,
        max_residual: 0.0,
        transform_tag: tag,
        target,
    };
    fit.max_residual = (0..fit.ns.len())
        .map(|i| fit.residual(i).abs())
        .fold(0.0, f64::max);
    Ok(fit)
}

/// Fits `y = ln(−ln P)` (or the raw values) against `ln n`.
///
/// For [`TransformTag::LogLogNegLog`] every `ln P` must be negative.
pub fn fit_exponent(
    series: &[(f64, f64)],
    tag: TransformTag,
    target: Option<f64>,
) -> Result<ScalingFit> {
    match tag {
        TransformTag::LogLogNegLog => {
            if let Some(&(n, v)) = series.iter().find(|p| p.1.is_nan() || p.1 >= 0.0) {
                return Err(Error::Domain(format!(
                    "ln P = {v} at n = {n} is not negative"
                )));
            }
            build_fit(series, tag, |_, v| (-v).ln(), target)
        }
        TransformTag::Raw => build_fit(series, tag, |_, v| v, target),
        TransformTag::LnLnSqOverN => Err(Error::Domain(
            "use fit_constant_lnln for the (ln n)^2/n normalisation".into(),
        )),
    }
}

/// Limit of `((ln n)² / n)(ln P + 2 n I₀)`: `−|π ln α|²/(4γ²)` for marginally
/// nestling laws (`γ = 1` for the unconstrained bridge) and `−|π ln α|²/γ²`
/// for non-nestling ones.
pub fn lnln_target(alpha: f64, gamma: Option<f64>, non_nestling: bool) -> f64 {
    let g = gamma.unwrap_or(1.0);
    let base = (PI * alpha.ln()).powi(2) / (g * g);
    if non_nestling {
        -base
    } else {
        -base / 4.0
    }
}

/// Per-point constants `c_n = ((ln n)²/n)(ln P_n + 2 n I₀)` with an OLS
/// trend against `ln n` and the theoretical limit. No extrapolation.
pub fn fit_constant_lnln(
    series: &[(f64, f64)],
    alpha: f64,
    gamma: Option<f64>,
    rate_i0: f64,
) -> Result<ScalingFit> {
    if let Some(&(n, v)) = series.iter().find(|p| p.1.is_nan() || p.1 >= 0.0) {
        return Err(Error::Domain(format!(
            "ln P = {v} at n = {n} is not negative"
        )));
    }
    let target = lnln_target(alpha, gamma, rate_i0 > 0.0);
    build_fit(
        series,
        TransformTag::LnLnSqOverN,
        |n, v| n.ln().powi(2) / n * (v + 2.0 * n * rate_i0),
        Some(target),
    )
}
