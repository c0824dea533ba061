use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Tolerance on the total weight of a distribution.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Default tolerance for [`SiteDistribution::solve_kappa`].
pub const KAPPA_TOL: f64 = 1e-12;

/// Finite-support law of a single site's right-step probability.
///
/// Support points are sorted ascending and distinct, weights are positive
/// and sum to one, and every support point lies in `[c, 1 - c]` where `c`
/// is the ellipticity constant.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteDistribution {
    support: Vec<(f64, f64)>,
    ellipticity_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeTag {
    Nestling,
    MarginallyNestling,
    NonNestling,
    NotTransient,
}

impl RegimeTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeTag::Nestling => "nestling",
            RegimeTag::MarginallyNestling => "marginally-nestling",
            RegimeTag::NonNestling => "non-nestling",
            RegimeTag::NotTransient => "not-transient",
        }
    }
}

impl fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegimeTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "nestling" => Ok(RegimeTag::Nestling),
            "marginally-nestling" | "marginal" => Ok(RegimeTag::MarginallyNestling),
            "non-nestling" | "nonnestling" => Ok(RegimeTag::NonNestling),
            "not-transient" => Ok(RegimeTag::NotTransient),
            other => Err(Error::Domain(format!("unknown regime '{other}'"))),
        }
    }
}

/// Regime of a distribution together with the weight at the smallest support
/// point (`alpha`) and the gap above it (`eta`, non-nestling only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeClass {
    pub tag: RegimeTag,
    pub alpha: f64,
    pub eta: f64,
}

impl SiteDistribution {
    /// Builds a distribution with the ellipticity constant inferred as
    /// `min(ω, 1 − ω)` over the support.
    pub fn new(support: Vec<(f64, f64)>) -> Result<Self> {
        let c = support
            .iter()
            .map(|&(w, _)| w.min(1.0 - w))
            .fold(0.5, f64::min);
        Self::with_ellipticity(support, c)
    }

    pub fn with_ellipticity(mut support: Vec<(f64, f64)>, ellipticity_c: f64) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if !(ellipticity_c > 0.0 && ellipticity_c <= 0.5) {
            return Err(Error::InvalidDistribution(format!(
                "ellipticity constant {ellipticity_c} not in (0, 1/2]"
            )));
        }
        support.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in support.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::InvalidDistribution(format!(
                    "duplicate support value {}",
                    pair[0].0
                )));
            }
        }
        for &(omega, weight) in &support {
            if weight.is_nan() || weight <= 0.0 || !weight.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "weight {weight} at omega = {omega} is not positive"
                )));
            }
            if !(omega >= ellipticity_c && omega <= 1.0 - ellipticity_c) {
                return Err(Error::InvalidDistribution(format!(
                    "omega = {omega} outside [{ellipticity_c}, {}]",
                    1.0 - ellipticity_c
                )));
            }
        }
        let total: f64 = support.iter().map(|&(_, w)| w).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            support,
            ellipticity_c,
        })
    }

    /// Point mass at `omega`.
    pub fn point(omega: f64) -> Result<Self> {
        Self::new(vec![(omega, 1.0)])
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    pub fn ellipticity_c(&self) -> f64 {
        self.ellipticity_c
    }

    pub fn omega_min(&self) -> f64 {
        self.support[0].0
    }

    /// `(1 − ω_min) / ω_min`, the largest odds ratio in the support.
    pub fn rho_max(&self) -> f64 {
        let w = self.omega_min();
        (1.0 - w) / w
    }

    pub fn mean_rho(&self) -> f64 {
        self.support.iter().map(|&(w, p)| p * (1.0 - w) / w).sum()
    }

    pub fn mean_log_rho(&self) -> f64 {
        self.support
            .iter()
            .map(|&(w, p)| p * ((1.0 - w) / w).ln())
            .sum()
    }

    /// `E_P ρ₀^s`.
    pub fn rho_moment(&self, s: f64) -> f64 {
        self.support
            .iter()
            .map(|&(w, p)| p * (s * ((1.0 - w) / w).ln()).exp())
            .sum()
    }

    /// Stable 64-bit fingerprint of the support, used to tag sampled
    /// environments (FNV-1a over the IEEE bit patterns).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for &(w, p) in &self.support {
            eat(w);
            eat(p);
        }
        eat(self.ellipticity_c);
        h
    }

    pub fn classify(&self) -> RegimeClass {
        let alpha = self.support[0].1;
        let w_min = self.omega_min();
        let tag = if self.mean_log_rho() >= 0.0 {
            RegimeTag::NotTransient
        } else if w_min < 0.5 {
            RegimeTag::Nestling
        } else if w_min == 0.5 {
            RegimeTag::MarginallyNestling
        } else {
            RegimeTag::NonNestling
        };
        let eta = if tag == RegimeTag::NonNestling && self.support.len() > 1 {
            self.support[1].0 - w_min
        } else {
            0.0
        };
        RegimeClass { tag, alpha, eta }
    }

    fn require(&self, tag: RegimeTag, required: &'static str) -> Result<RegimeClass> {
        let class = self.classify();
        if class.tag != tag {
            return Err(Error::Regime {
                required,
                actual: class.tag,
            });
        }
        Ok(class)
    }

    /// Positive root of `E_P ρ₀^κ = 1` for a nestling distribution.
    ///
    /// `f(κ) = E_P ρ₀^κ` is convex with `f(0) = 1` and `f'(0) < 0`, so the
    /// upper bracket is doubled until `f > 1` and the root is then bisected.
    pub fn solve_kappa(&self, tol: f64) -> Result<f64> {
        self.require(RegimeTag::Nestling, "nestling")?;
        let excess = |k: f64| self.rho_moment(k) - 1.0;

        let mut hi = 1.0;
        while excess(hi) <= 0.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::Domain("kappa bracket did not close".into()));
            }
        }
        let mut lo = 0.0;
        let mut best = (hi, excess(hi).abs());
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = excess(mid);
            if v.abs() < best.1 {
                best = (mid, v.abs());
            }
            if v.abs() <= tol && hi - lo <= tol {
                break;
            }
            if v > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if best.1 > tol {
            return Err(Error::Domain(format!(
                "kappa bisection stalled at |f - 1| = {}",
                best.1
            )));
        }
        Ok(best.0)
    }

    /// Asymptotic speed `(1 − E ρ)/(1 + E ρ)` when `E ρ < 1`, else zero.
    pub fn speed(&self) -> Result<f64> {
        if self.mean_log_rho() >= 0.0 {
            return Err(Error::Regime {
                required: "transient",
                actual: RegimeTag::NotTransient,
            });
        }
        let m = self.mean_rho();
        Ok(if m < 1.0 { (1.0 - m) / (1.0 + m) } else { 0.0 })
    }

    /// Zero-velocity quenched rate `−½ ln(4 ω_min (1 − ω_min))`.
    ///
    /// Zero for nestling and marginally nestling laws; an error for
    /// recurrent ones.
    pub fn rate_i0(&self) -> Result<f64> {
        match self.classify().tag {
            RegimeTag::NonNestling => {
                let d = 2.0 * self.omega_min() - 1.0;
                Ok(-0.5 * (-d * d).ln_1p())
            }
            RegimeTag::Nestling | RegimeTag::MarginallyNestling => Ok(0.0),
            RegimeTag::NotTransient => Err(Error::Regime {
                required: "transient",
                actual: RegimeTag::NotTransient,
            }),
        }
    }

    /// `min(1, (E ρ)^x / (1 − E ρ))`, an upper bound on the annealed
    /// probability of ever backtracking to `−x`.
    pub fn annealed_backtrack_bound(&self, x: u32) -> Result<f64> {
        let m = self.mean_rho();
        if m >= 1.0 {
            return Err(Error::MeanRhoNotBelowOne(m));
        }
        Ok((m.powi(x as i32) / (1.0 - m)).min(1.0))
    }
}

/// Cramér rate function of a Bernoulli(`p`) variable at `x`.
pub fn bernoulli_rate(p: f64, x: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p = {p} not in (0, 1)")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} not in [0, 1]")));
    }
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    Ok(term(x, p) + term(1.0 - x, 1.0 - p))
}

impl FromStr for SiteDistribution {
    type Err = Error;

    /// Parses lines of `omega weight`; blank lines and lines starting
    /// with `#` are skipped.
    fn from_str(text: &str) -> Result<Self> {
        let mut support = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected 'omega weight', got '{line}'"),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: format!("'{s}': {e}"),
                })
            };
            support.push((parse(fields[0])?, parse(fields[1])?));
        }
        SiteDistribution::new(support)
    }
}
