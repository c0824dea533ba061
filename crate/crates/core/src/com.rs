//! Change of measure between a non-nestling environment `ω` and its
//! marginally nestling transform `ω̃`.
//!
//! On bridge paths the likelihood ratio collapses to
//! `ρ_max^{-n} Π_{k<2n} ω_{X_k}(ρ_{X_k} + ρ_max)`, and each factor is either
//! `2(1 − ω_min)` (at sites with `ω = ω_min`) or a fixed fraction of it, which
//! sandwiches `P_ω(A)` between `e^{-2 I(0) n} E_ω̃[c^{B_n} 1_A]` for two
//! constants `c₁ ≤ c₂ < 1`.

use std::fmt::Write as _;

use crate::env_model::{Environment, RegimeTag, SiteDistribution};
use crate::error::{Error, Result};
use crate::format::fmt_g17;

/// Maximum half-length accepted by [`verify_com_identity`].
pub const MAX_ENUMERATION_N: usize = 10;

fn check_bridge(env: &Environment, sites: &[i64]) -> Result<usize> {
    if sites.len().is_multiple_of(2) || sites[0] != 0 || *sites.last().unwrap() != 0 {
        return Err(Error::NotABridge(
            "expected 2n + 1 sites starting and ending at 0".into(),
        ));
    }
    if sites.windows(2).any(|w| (w[1] - w[0]).abs() != 1) {
        return Err(Error::NotABridge("non-unit step".into()));
    }
    let lo = *sites.iter().min().unwrap();
    let hi = *sites.iter().max().unwrap();
    env.require(lo, hi)?;
    Ok((sites.len() - 1) / 2)
}

fn require_non_nestling(dist: &SiteDistribution) -> Result<()> {
    let tag = dist.classify().tag;
    if tag != RegimeTag::NonNestling {
        return Err(Error::Regime {
            required: "non-nestling",
            actual: tag,
        });
    }
    Ok(())
}

/// `g(ω) = ω(ρ + ρ_max) = (1 − ω) + ω ρ_max`.
fn tilt_factor(omega: f64, rho_max: f64) -> f64 {
    (1.0 - omega) + omega * rho_max
}

/// `ln dP_ω/dP_ω̃` along a bridge path, in product form.
pub fn rn_log_derivative(dist: &SiteDistribution, env: &Environment, sites: &[i64]) -> Result<f64> {
    require_non_nestling(dist)?;
    let n = check_bridge(env, sites)?;
    let rho_max = dist.rho_max();
    let sum: f64 = sites[..2 * n]
        .iter()
        .map(|&x| tilt_factor(env.at(x), rho_max).ln())
        .sum();
    Ok(sum - n as f64 * rho_max.ln())
}

/// `ln Π_k P_ω(step_k) / P_ω̃(step_k)`, the likelihood ratio computed
/// step by step. Valid for any nearest-neighbour path from the origin.
pub fn step_ratio_log(dist: &SiteDistribution, env: &Environment, sites: &[i64]) -> Result<f64> {
    require_non_nestling(dist)?;
    let tilted = dist.mn_transform(env)?;
    let mut acc = 0.0;
    for w in sites.windows(2) {
        let (x, up) = (w[0], w[1] > w[0]);
        let (a, b) = (env.omega(x)?, tilted.omega(x)?);
        acc += if up {
            a.ln() - b.ln()
        } else {
            (1.0 - a).ln() - (1.0 - b).ln()
        };
    }
    Ok(acc)
}

/// Number of `k < 2n` with `ω_{X_k} > ω_min`.
pub fn b_count(env: &Environment, sites: &[i64], omega_min: f64) -> Result<usize> {
    if sites.is_empty() {
        return Ok(0);
    }
    let lo = *sites.iter().min().unwrap();
    let hi = *sites.iter().max().unwrap();
    env.require(lo, hi)?;
    Ok(crate::bridge_sampler::count_biased_visits(
        env, sites, omega_min,
    ))
}

/// The sandwich constants `(c₁, c₂)`: the extreme values of
/// `g(ω) / (2(1 − ω_min))` over support points above `ω_min`.
pub fn com_constants(dist: &SiteDistribution) -> Result<(f64, f64)> {
    require_non_nestling(dist)?;
    if dist.classify().eta <= 0.0 {
        return Err(Error::Gap);
    }
    let rho_max = dist.rho_max();
    let base = 2.0 * (1.0 - dist.omega_min());
    let ratios = dist.support()[1..]
        .iter()
        .map(|&(w, _)| tilt_factor(w, rho_max) / base);
    let (c1, c2) = ratios.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r), hi.max(r))
    });
    Ok((c1, c2))
}

type PathPredicate = Box<dyn Fn(&[i64]) -> bool + Send + Sync>;

/// A named event on bridge paths of a fixed length.
pub struct BridgeEvent {
    pub name: String,
    predicate: PathPredicate,
}

impl BridgeEvent {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&[i64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            predicate: Box::new(f),
        }
    }

    /// `{X_{2n} = 0}` itself.
    pub fn bridge() -> Self {
        Self::new("bridge", |_| true)
    }

    /// `{X_{2n} = 0, max |X_k| < m}`.
    pub fn max_below(m: u64) -> Self {
        Self::new(format!("bridge_max_lt_{m}"), move |p| {
            p.iter().all(|x| x.unsigned_abs() < m)
        })
    }

    pub fn empty() -> Self {
        Self::new("empty", |_| false)
    }

    pub fn contains(&self, path: &[i64]) -> bool {
        (self.predicate)(path)
    }
}

/// Result of the exhaustive change-of-measure check for one event.
#[derive(Debug, Clone, PartialEq)]
pub struct ComRow {
    pub event: String,
    /// `P_ω(A)`.
    pub lhs: f64,
    /// `E_ω̃[dP_ω/dP_ω̃ 1_A]`.
    pub rhs: f64,
    /// `e^{-2 I(0) n} E_ω̃[c₁^{B_n} 1_A]`.
    pub lower: f64,
    pub upper: f64,
    /// Largest violation of the identity or either side of the sandwich,
    /// in probability units.
    pub max_abs_violation: f64,
    /// `|lhs − rhs| / lhs`, zero for an empty event.
    pub identity_rel_err: f64,
    /// Largest per-path excursion of `ln dP_ω/dP_ω̃ + 2 n I(0)` outside
    /// `[B_n ln c₁, B_n ln c₂]`.
    pub pathwise_violation: f64,
}

impl ComRow {
    /// Identity within `tol` relative error and both sandwich sides within
    /// `tol` relative slack.
    pub fn holds(&self, tol: f64) -> bool {
        let slack = tol * self.lhs.abs().max(f64::MIN_POSITIVE);
        self.identity_rel_err <= tol
            && self.lower <= self.lhs + slack
            && self.lhs <= self.upper + slack
            && self.pathwise_violation <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComReport {
    pub n: usize,
    pub c1: f64,
    pub c2: f64,
    pub rate_i0: f64,
    pub rows: Vec<ComRow>,
}

impl ComReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.rows.iter().all(|r| r.holds(tol))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("event,lhs,rhs,lower,upper,max_abs_violation\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                r.event,
                fmt_g17(r.lhs),
                fmt_g17(r.rhs),
                fmt_g17(r.lower),
                fmt_g17(r.upper),
                fmt_g17(r.max_abs_violation)
            )
            .unwrap();
        }
        s
    }
}

/// Calls `visit` on every nearest-neighbour path of `2n` steps from the
/// origin that returns to it.
pub fn for_each_bridge_path(n: usize, mut visit: impl FnMut(&[i64])) {
    fn rec(path: &mut Vec<i64>, ups_left: usize, downs_left: usize, visit: &mut dyn FnMut(&[i64])) {
        if ups_left == 0 && downs_left == 0 {
            visit(path);
            return;
        }
        let x = *path.last().unwrap();
        if ups_left > 0 {
            path.push(x + 1);
            rec(path, ups_left - 1, downs_left, visit);
            path.pop();
        }
        if downs_left > 0 {
            path.push(x - 1);
            rec(path, ups_left, downs_left - 1, visit);
            path.pop();
        }
    }
    let mut path = Vec::with_capacity(2 * n + 1);
    path.push(0);
    rec(&mut path, n, n, &mut visit);
}

fn path_log_prob(env: &Environment, sites: &[i64]) -> f64 {
    sites
        .windows(2)
        .map(|w| {
            let omega = env.at(w[0]);
            if w[1] > w[0] {
                omega.ln()
            } else {
                (1.0 - omega).ln()
            }
        })
        .sum()
}

/// Exhaustively checks `P_ω(A) = E_ω̃[dP_ω/dP_ω̃ 1_A]` and the `c₁/c₂`
/// sandwich for each event over all bridge paths of length `2n`.
pub fn verify_com_identity(
    dist: &SiteDistribution,
    env: &Environment,
    n: usize,
    events: &[BridgeEvent],
) -> Result<ComReport> {
    if n == 0 || n > MAX_ENUMERATION_N {
        return Err(Error::Domain(format!(
            "enumeration needs 1 <= n <= {MAX_ENUMERATION_N}, got {n}"
        )));
    }
    let (c1, c2) = com_constants(dist)?;
    let rate_i0 = dist.rate_i0()?;
    env.require(-(n as i64), n as i64)?;
    let tilted = dist.mn_transform(env)?;
    let shift = 2.0 * n as f64 * rate_i0;
    let omega_min = dist.omega_min();

    struct Acc {
        lhs: f64,
        rhs: f64,
        lower: f64,
        upper: f64,
        pathwise: f64,
    }
    let mut acc: Vec<Acc> = events
        .iter()
        .map(|_| Acc {
            lhs: 0.0,
            rhs: 0.0,
            lower: 0.0,
            upper: 0.0,
            pathwise: 0.0,
        })
        .collect();
    let mut failure = None;

    for_each_bridge_path(n, |path| {
        if failure.is_some() {
            return;
        }
        let lp = path_log_prob(env, path);
        let lq = path_log_prob(&tilted, path);
        let rn = match rn_log_derivative(dist, env, path) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        let b = crate::bridge_sampler::count_biased_visits(env, path, omega_min) as f64;
        let centred = rn + shift;
        let excursion = (b * c1.ln() - centred).max(centred - b * c2.ln()).max(0.0);
        for (ev, a) in events.iter().zip(acc.iter_mut()) {
            if !ev.contains(path) {
                continue;
            }
            let q = lq.exp();
            a.lhs += lp.exp();
            a.rhs += (lq + rn).exp();
            a.lower += (-shift + b * c1.ln()).exp() * q;
            a.upper += (-shift + b * c2.ln()).exp() * q;
            a.pathwise = a.pathwise.max(excursion);
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }

    let rows = events
        .iter()
        .zip(acc)
        .map(|(ev, a)| {
            let identity = (a.lhs - a.rhs).abs();
            let violation = identity.max(a.lower - a.lhs).max(a.lhs - a.upper).max(0.0);
            ComRow {
                event: ev.name.clone(),
                lhs: a.lhs,
                rhs: a.rhs,
                lower: a.lower,
                upper: a.upper,
                max_abs_violation: violation,
                identity_rel_err: if a.lhs > 0.0 {
                    identity / a.lhs
                } else {
                    identity
                },
                pathwise_violation: a.pathwise,
            }
        })
        .collect();
    Ok(ComReport {
        n,
        c1,
        c2,
        rate_i0,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dist() -> SiteDistribution {
        SiteDistribution::new(vec![(0.6, 0.5), (0.8, 0.5)]).unwrap()
    }

    #[test]
    fn constants_for_two_point_law() {
        let (c1, c2) = com_constants(&dist()).unwrap();
        assert_abs_diff_eq!(c1, 11.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c2, 11.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tilt_factor(0.8, 2.0 / 3.0), 11.0 / 15.0, epsilon = 1e-15);
    }

    #[test]
    fn constants_bracket_every_tilt_factor() {
        let d =
            SiteDistribution::new(vec![(0.55, 0.2), (0.7, 0.3), (0.8, 0.1), (0.9, 0.4)]).unwrap();
        let (c1, c2) = com_constants(&d).unwrap();
        assert!(0.0 < c1 && c1 < c2 && c2 < 1.0);
        let base = 2.0 * (1.0 - d.omega_min());
        for &(w, _) in &d.support()[1..] {
            let g = tilt_factor(w, d.rho_max());
            assert!(c1 * base <= g + 1e-15 && g <= c2 * base + 1e-15);
        }
        assert_abs_diff_eq!(tilt_factor(0.55, d.rho_max()), base, epsilon = 1e-15);
    }

    #[test]
    fn constants_errors() {
        let marginal = SiteDistribution::new(vec![(0.5, 0.5), (0.75, 0.5)]).unwrap();
        assert!(matches!(
            com_constants(&marginal),
            Err(Error::Regime { .. })
        ));
        let point = SiteDistribution::point(0.7).unwrap();
        assert_eq!(com_constants(&point), Err(Error::Gap));
    }

    #[test]
    fn all_min_path_gives_minus_two_n_i0() {
        let d = dist();
        let env = Environment::homogeneous(0.6, -5, 5).unwrap();
        let path = [0, 1, 2, 1, 0, -1, 0];
        let rn = rn_log_derivative(&d, &env, &path).unwrap();
        assert_abs_diff_eq!(rn, 3.0 * (4.0f64 * 0.6 * 0.4).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(rn, -6.0 * d.rate_i0().unwrap(), epsilon = 1e-14);
        assert_eq!(b_count(&env, &path, 0.6).unwrap(), 0);
    }

    #[test]
    fn product_form_equals_step_ratio() {
        let d = dist();
        let env = Environment::explicit(-2, vec![0.8, 0.6, 0.8, 0.6, 0.8]).unwrap();
        let path = [0, 1, 0, -1, 0];
        let a = rn_log_derivative(&d, &env, &path).unwrap();
        let b = step_ratio_log(&d, &env, &path).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        assert_eq!(b_count(&env, &path, 0.6).unwrap(), 2);
    }

    #[test]
    fn b_count_extremes() {
        let env = Environment::homogeneous(0.8, -3, 3).unwrap();
        let path = [0, 1, 2, 1, 0, -1, 0];
        assert_eq!(b_count(&env, &path, 0.6).unwrap(), 6);
        assert_eq!(b_count(&env, &path, 0.8).unwrap(), 0);
    }

    #[test]
    fn not_a_bridge() {
        let env = Environment::homogeneous(0.6, -3, 3).unwrap();
        assert!(matches!(
            rn_log_derivative(&dist(), &env, &[0, 1, 2]),
            Err(Error::NotABridge(_))
        ));
        assert!(matches!(
            rn_log_derivative(&dist(), &env, &[0, 1]),
            Err(Error::NotABridge(_))
        ));
    }

    #[test]
    fn enumeration_counts() {
        let mut count = 0;
        for_each_bridge_path(4, |p| {
            assert_eq!(p.len(), 9);
            count += 1;
        });
        assert_eq!(count, 70);
    }

    #[test]
    fn identity_and_sandwich_small_n() {
        let d = dist();
        let env = d.sample_environment(-10, 10, 5).unwrap();
        let events = [
            BridgeEvent::bridge(),
            BridgeEvent::max_below(2),
            BridgeEvent::empty(),
        ];
        let report = verify_com_identity(&d, &env, 3, &events).unwrap();
        assert!(report.holds(1e-12), "{report:?}");
        let empty = &report.rows[2];
        assert_eq!(
            (empty.lhs, empty.rhs, empty.lower, empty.upper),
            (0.0, 0.0, 0.0, 0.0)
        );
        let csv = report.to_csv();
        assert!(csv.starts_with("event,lhs,rhs,lower,upper,max_abs_violation\nbridge,"));
        assert_eq!(csv.lines().count(), 4);
    }
}
