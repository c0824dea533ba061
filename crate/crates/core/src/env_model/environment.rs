use std::fmt::Write as _;
use std::str::FromStr;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::distribution::{RegimeTag, SiteDistribution};
use crate::error::{Error, Result};
use crate::format::fmt_g17;

/// Where an environment's values came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Sampled {
        seed: u64,
        fingerprint: u64,
    },
    Explicit,
    /// Obtained from another environment by reflection or transform.
    Derived(&'static str),
}

/// A realized environment on the integer window `[offset, offset + len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    offset: i64,
    omegas: Vec<f64>,
    provenance: Provenance,
    omega_min: Option<f64>,
}

/// Maps a site to the word position of its draw in the ChaCha stream, so
/// consecutive sites read consecutive 64-bit words.
fn word_pos(site: i64) -> u128 {
    (((site as u64) ^ (1 << 63)) as u128) * 2
}

fn unit_uniform(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl SiteDistribution {
    fn draw(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for &(omega, weight) in self.support() {
            acc += weight;
            if u < acc {
                return omega;
            }
        }
        self.support().last().unwrap().0
    }

    /// The value at site `x` of the environment keyed by `seed`.
    pub fn site_value(&self, seed: u64, x: i64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(word_pos(x));
        self.draw(unit_uniform(rng.next_u64()))
    }

    /// Samples sites `a..=b`. The value at a site depends only on
    /// `(seed, site)`, so overlapping windows agree.
    pub fn sample_environment(&self, a: i64, b: i64, seed: u64) -> Result<Environment> {
        if a > b {
            return Err(Error::Domain(format!("empty range [{a}, {b}]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(word_pos(a));
        let omegas = (a..=b)
            .map(|_| self.draw(unit_uniform(rng.next_u64())))
            .collect();
        Ok(Environment {
            offset: a,
            omegas,
            provenance: Provenance::Sampled {
                seed,
                fingerprint: self.fingerprint(),
            },
            omega_min: Some(self.omega_min()),
        })
    }

    /// Pointwise `ω̃ = ρ_max / (ρ + ρ_max)`, mapping a non-nestling
    /// environment to a marginally nestling one.
    pub fn mn_transform(&self, env: &Environment) -> Result<Environment> {
        let tag = self.classify().tag;
        if tag != RegimeTag::NonNestling {
            return Err(Error::Regime {
                required: "non-nestling",
                actual: tag,
            });
        }
        let rho_max = self.rho_max();
        let omegas = env
            .omegas
            .iter()
            .map(|&w| {
                let rho = (1.0 - w) / w;
                rho_max / (rho + rho_max)
            })
            .collect();
        Ok(Environment {
            offset: env.offset,
            omegas,
            provenance: Provenance::Derived("mn-transform"),
            omega_min: Some(0.5),
        })
    }

    /// Distribution of `ω̃` under the transform above. Weights carry over
    /// unchanged because the map is strictly increasing.
    pub fn mn_transformed(&self) -> Result<SiteDistribution> {
        let rho_max = self.rho_max();
        let support = self
            .support()
            .iter()
            .map(|&(w, p)| (rho_max / ((1.0 - w) / w + rho_max), p))
            .collect();
        SiteDistribution::new(support)
    }
}

impl Environment {
    /// Environment with explicit values on `offset..offset + omegas.len()`.
    pub fn explicit(offset: i64, omegas: Vec<f64>) -> Result<Self> {
        if omegas.is_empty() {
            return Err(Error::Domain("empty environment".into()));
        }
        if let Some(bad) = omegas.iter().find(|w| !(**w > 0.0 && **w < 1.0)) {
            return Err(Error::Domain(format!("omega = {bad} not in (0, 1)")));
        }
        Ok(Self {
            offset,
            omegas,
            provenance: Provenance::Explicit,
            omega_min: None,
        })
    }

    /// Constant environment `p` on `[a, b]`.
    pub fn homogeneous(p: f64, a: i64, b: i64) -> Result<Self> {
        if a > b {
            return Err(Error::Domain(format!("empty range [{a}, {b}]")));
        }
        let mut env = Self::explicit(a, vec![p; (b - a + 1) as usize])?;
        env.omega_min = Some(p);
        Ok(env)
    }

    pub fn lo(&self) -> i64 {
        self.offset
    }

    pub fn hi(&self) -> i64 {
        self.offset + self.omegas.len() as i64 - 1
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Smallest support value of the generating law, or the window minimum
    /// for explicit environments.
    pub fn omega_min(&self) -> f64 {
        self.omega_min
            .unwrap_or_else(|| self.omegas.iter().copied().fold(1.0, f64::min))
    }

    pub fn contains(&self, x: i64) -> bool {
        x >= self.lo() && x <= self.hi()
    }

    /// Errors unless `[lo, hi]` lies inside the window.
    pub fn require(&self, lo: i64, hi: i64) -> Result<()> {
        if lo > hi || (self.contains(lo) && self.contains(hi)) {
            Ok(())
        } else {
            Err(Error::WindowTooSmall {
                need_lo: lo,
                need_hi: hi,
                have_lo: self.lo(),
                have_hi: self.hi(),
            })
        }
    }

    pub fn omega(&self, x: i64) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::OutOfWindow {
                site: x,
                lo: self.lo(),
                hi: self.hi(),
            });
        }
        Ok(self.omegas[(x - self.offset) as usize])
    }

    /// Unchecked lookup for callers that validated the window up front.
    #[inline]
    pub(crate) fn at(&self, x: i64) -> f64 {
        self.omegas[(x - self.offset) as usize]
    }

    pub fn rho(&self, x: i64) -> Result<f64> {
        let w = self.omega(x)?;
        Ok((1.0 - w) / w)
    }

    fn with_origin(&self, value: f64, tag: &'static str) -> Result<Self> {
        if !self.contains(0) {
            return Err(Error::OutOfWindow {
                site: 0,
                lo: self.lo(),
                hi: self.hi(),
            });
        }
        let mut out = self.clone();
        out.omegas[(0 - self.offset) as usize] = value;
        out.provenance = Provenance::Derived(tag);
        Ok(out)
    }

    /// `ω⁻`: the origin always steps left.
    pub fn reflect_minus(&self) -> Result<Self> {
        self.with_origin(0.0, "reflect-minus")
    }

    /// `ω⁺`: the origin always steps right.
    pub fn reflect_plus(&self) -> Result<Self> {
        self.with_origin(1.0, "reflect-plus")
    }

    /// `θ^x ω`, i.e. the environment seen from site `x`.
    pub fn shift(&self, x: i64) -> Self {
        let mut out = self.clone();
        out.offset -= x;
        out
    }

    /// Text export: an `offset=<a>` header followed by one value per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(24 * self.omegas.len() + 16);
        writeln!(s, "offset={}", self.offset).unwrap();
        for &w in &self.omegas {
            s.push_str(&fmt_g17(w));
            s.push('\n');
        }
        s
    }
}

impl FromStr for Environment {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let offset = match lines.next() {
            Some((_, header)) => header
                .trim()
                .strip_prefix("offset=")
                .and_then(|v| v.parse::<i64>().ok())
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    msg: format!("expected 'offset=<int>', got '{header}'"),
                })?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "empty input".into(),
                })
            }
        };
        let mut omegas = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            omegas.push(line.parse::<f64>().map_err(|e| Error::Parse {
                line: i + 1,
                msg: format!("'{line}': {e}"),
            })?);
        }
        Environment::explicit(offset, omegas)
    }
}
