//! The two competing tail models: a power law and a log-normal, both
//! normalized on `[s_min, ∞)`.
//!
//! Sizes are carried as plain `f64` in millions of currency units. Both
//! models implement [`TailDistribution`], which is what the fitting, QQ,
//! and bootstrap layers program against.

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::special::{erfc, erfc_inv, ln_erfc};
use std::f64::consts::{PI, SQRT_2};

/// Common surface of a tail model on `[s_min, ∞)`.
pub trait TailDistribution {
    /// Lower edge of the support (0 for an untruncated log-normal).
    fn s_min(&self) -> f64;

    /// Density at `s`; domain error below the support.
    fn pdf(&self, s: f64) -> Result<f64>;

    /// Natural log of the density, stable far into the tail.
    fn ln_pdf(&self, s: f64) -> Result<f64>;

    /// Survival function P(S > s); equals 1 at `s = s_min`.
    fn ccdf(&self, s: f64) -> Result<f64>;

    /// Inverse CDF: the `s` with `ccdf(s) = 1 - u`, for `u` in `[0, 1)`.
    fn quantile(&self, u: f64) -> Result<f64>;

    /// `n` independent inverse-transform draws from `stream`.
    ///
    /// Output depends only on `(self, n, stream)`, never on thread layout.
    fn sample(&self, n: usize, stream: &mut RandomStream) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut u = stream.next_unit();
            if u == 0.0 {
                // u = 0 sits outside the support of an untruncated model;
                // nudge onto the smallest representable probability.
                u = f64::MIN_POSITIVE;
            }
            out.push(self.quantile(u)?);
        }
        Ok(out)
    }
}

/// Power-law tail: density (ζ/s_min)(s/s_min)^-(ζ+1) on `[s_min, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoTail {
    zeta: f64,
    s_min: f64,
}

impl ParetoTail {
    pub fn new(zeta: f64, s_min: f64) -> Result<Self> {
        if !zeta.is_finite() || zeta <= 0.0 {
            return Err(Error::Parameter {
                name: "zeta",
                value: zeta,
                reason: "tail exponent must be positive and finite",
            });
        }
        if !s_min.is_finite() || s_min <= 0.0 {
            return Err(Error::Parameter {
                name: "s_min",
                value: s_min,
                reason: "cutoff must be positive and finite",
            });
        }
        Ok(ParetoTail { zeta, s_min })
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    fn check_support(&self, s: f64) -> Result<()> {
        if !s.is_finite() || s < self.s_min {
            return Err(Error::Domain(format!(
                "s = {s} below the power-law support [{}, inf)",
                self.s_min
            )));
        }
        Ok(())
    }
}

impl TailDistribution for ParetoTail {
    fn s_min(&self) -> f64 {
        self.s_min
    }

    fn pdf(&self, s: f64) -> Result<f64> {
        self.check_support(s)?;
        Ok(self.zeta / self.s_min * (s / self.s_min).powf(-(self.zeta + 1.0)))
    }

    fn ln_pdf(&self, s: f64) -> Result<f64> {
        self.check_support(s)?;
        Ok(self.zeta.ln() - self.s_min.ln() - (self.zeta + 1.0) * (s / self.s_min).ln())
    }

    fn ccdf(&self, s: f64) -> Result<f64> {
        self.check_support(s)?;
        Ok((s / self.s_min).powf(-self.zeta))
    }

    fn quantile(&self, u: f64) -> Result<f64> {
        check_unit_interval(u)?;
        Ok(self.s_min * (1.0 - u).powf(-1.0 / self.zeta))
    }
}

/// Log-normal tail: the log-normal density restricted and renormalized to
/// `[s_min, ∞)`. `s_min = 0` gives back the plain log-normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalTail {
    mu: f64,
    sigma: f64,
    s_min: f64,
    /// erfc((ln s_min - μ)/(√2 σ)): survival mass above the cutoff, times 2.
    norm: f64,
    /// ln of `norm`, kept separately so deep truncations stay finite.
    ln_norm: f64,
}

impl LogNormalTail {
    pub fn new(mu: f64, sigma: f64, s_min: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::Parameter {
                name: "mu",
                value: mu,
                reason: "location must be finite",
            });
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::Parameter {
                name: "sigma",
                value: sigma,
                reason: "scale must be positive and finite",
            });
        }
        if !s_min.is_finite() || s_min < 0.0 {
            return Err(Error::Parameter {
                name: "s_min",
                value: s_min,
                reason: "truncation point must be non-negative and finite",
            });
        }
        // For very deep truncations erfc underflows to zero; ln_norm stays
        // finite and the evaluation paths below switch to log space, so any
        // non-negative s_min is usable.
        let (norm, ln_norm) = if s_min == 0.0 {
            (2.0, std::f64::consts::LN_2)
        } else {
            let z_min = (s_min.ln() - mu) / (SQRT_2 * sigma);
            (erfc(z_min), ln_erfc(z_min))
        };
        Ok(LogNormalTail {
            mu,
            sigma,
            s_min,
            norm,
            ln_norm,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn standardize(&self, s: f64) -> f64 {
        (s.ln() - self.mu) / (SQRT_2 * self.sigma)
    }

    fn check_support(&self, s: f64) -> Result<()> {
        if !s.is_finite() || s <= 0.0 || s < self.s_min {
            return Err(Error::Domain(format!(
                "s = {s} below the log-normal tail support [{}, inf)",
                self.s_min
            )));
        }
        Ok(())
    }
}

impl TailDistribution for LogNormalTail {
    fn s_min(&self) -> f64 {
        self.s_min
    }

    fn pdf(&self, s: f64) -> Result<f64> {
        self.check_support(s)?;
        let z = self.standardize(s);
        if self.norm > 0.0 {
            Ok(SQRT_2 / (s * PI.sqrt() * self.sigma) * (-z * z).exp() / self.norm)
        } else {
            Ok(self.ln_pdf(s)?.exp())
        }
    }

    fn ln_pdf(&self, s: f64) -> Result<f64> {
        self.check_support(s)?;
        let z = self.standardize(s);
        Ok(0.5 * (2.0 / PI).ln() - s.ln() - self.sigma.ln() - z * z - self.ln_norm)
    }

    fn ccdf(&self, s: f64) -> Result<f64> {
        self.check_support(s)?;
        let z = self.standardize(s);
        if self.norm > 0.0 {
            Ok((erfc(z) / self.norm).min(1.0))
        } else {
            Ok((ln_erfc(z) - self.ln_norm).exp().min(1.0))
        }
    }

    fn quantile(&self, u: f64) -> Result<f64> {
        check_unit_interval(u)?;
        if u == 0.0 {
            if self.s_min == 0.0 {
                return Err(Error::Domain(
                    "quantile at u = 0 of an untruncated log-normal (support infimum is 0)".into(),
                ));
            }
            return Ok(self.s_min);
        }
        let target = (1.0 - u) * self.norm;
        let z = if target > 0.0 {
            erfc_inv(target)
        } else {
            // Survival mass underflowed; solve ln_erfc(z) = ln(1-u) + ln_norm
            // by bisection, which stays finite at any depth.
            let target_ln = (1.0 - u).ln() + self.ln_norm;
            let mut lo = (self.s_min.ln() - self.mu) / (SQRT_2 * self.sigma);
            let mut hi = lo.abs() + 1.0;
            while ln_erfc(hi) > target_ln {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if ln_erfc(mid) > target_ln {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
                    break;
                }
            }
            0.5 * (lo + hi)
        };
        let s = (self.mu + SQRT_2 * self.sigma * z).exp();
        Ok(s.max(self.s_min))
    }
}

fn check_unit_interval(u: f64) -> Result<()> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::Domain(format!("probability u = {u} outside [0, 1)")));
    }
    Ok(())
}
