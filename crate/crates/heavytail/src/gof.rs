//! Monte Carlo goodness-of-fit testing and power-law vs log-normal
//! comparison.
//!
//! The p-value machinery follows the usual parametric-bootstrap recipe:
//! draw synthetic datasets from the fitted power law, re-run the entire
//! cutoff scan and MLE on each, and report the fraction whose KS distance
//! to their own best fit is at least the empirical one. Replicates are
//! indexed substreams of a master seed, so any worker count produces the
//! identical result.

use crate::dist::TailDistribution;
use crate::error::{Error, Result};
use crate::fit::{
    neumaier_sum, scan_smin_with_floor, LogNormalTailFit, ParetoTailFit,
    DEFAULT_MIN_TAIL,
};
use crate::panel::SizeSample;
use crate::rng::RandomStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// How synthetic replicates treat the sample body below the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicateMode {
    /// Full-size replicates: each point is a fresh power-law tail draw with
    /// probability n_tail/n, otherwise a uniform resample of the empirical
    /// body below the cutoff.
    Semiparametric,
    /// Replicates of size n_tail drawn entirely from the fitted power law.
    TailOnly,
}

impl fmt::Display for ReplicateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplicateMode::Semiparametric => write!(f, "semiparametric"),
            ReplicateMode::TailOnly => write!(f, "tail_only"),
        }
    }
}

impl FromStr for ReplicateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semiparametric" => Ok(ReplicateMode::Semiparametric),
            "tail_only" => Ok(ReplicateMode::TailOnly),
            other => Err(Error::Config(format!(
                "replicate mode '{other}' is neither 'semiparametric' nor 'tail_only'"
            ))),
        }
    }
}

/// Bootstrap goodness-of-fit result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofResult {
    pub p_value: f64,
    pub n_replicates: usize,
    /// Replicates whose own-fit KS distance was ≥ the empirical one.
    pub n_exceeding: usize,
    /// Replicates that failed to refit and were excluded from the count.
    pub n_failed: usize,
    pub d_empirical: f64,
    pub master_seed: u64,
    pub mode: ReplicateMode,
    /// (min, median, max) of the successful replicates' KS distances.
    pub replicate_d_summary: Option<(f64, f64, f64)>,
}

/// Log likelihood ratio of the power-law fit relative to the log-normal
/// fit over the shared tail. Negative values favor the log-normal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikelihoodRatioResult {
    /// ln(L_PL / L_LN).
    pub r_natural: f64,
    /// r_natural / ln 10.
    pub r_base10: f64,
    pub n_tail: usize,
    pub pl_loglik: f64,
    pub ln_loglik: f64,
}

/// One synthetic replicate of `sample` under the fitted power-law tail.
///
/// The draw sequence depends only on `(sample, fit, mode, stream)`; callers
/// hand each replicate its own indexed substream.
pub fn synth_dataset(
    sample: &SizeSample,
    fit: &ParetoTailFit,
    mode: ReplicateMode,
    stream: &mut RandomStream,
) -> Result<SizeSample> {
    let model = fit.model()?;
    let sizes = match mode {
        ReplicateMode::TailOnly => model.sample(fit.n_tail, stream)?,
        ReplicateMode::Semiparametric => {
            let n = sample.len();
            let body_len = n - sample.tail(fit.s_min).len();
            let body = &sample.sizes()[..body_len];
            let p_tail = fit.n_tail as f64 / n as f64;
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                if stream.next_unit() < p_tail {
                    out.push(model.quantile(stream.next_unit())?);
                } else {
                    out.push(body[stream.next_index(body.len())]);
                }
            }
            out
        }
    };
    let n = sizes.len();
    SizeSample::new(sample.as_of(), sizes, n)
}

/// Configuration for [`bootstrap_pvalue_with`].
#[derive(Debug, Clone, Copy)]
pub struct GofConfig {
    pub n_replicates: usize,
    pub master_seed: u64,
    pub mode: ReplicateMode,
    /// Candidate floor used when refitting replicates, matching the floor
    /// used for the empirical fit.
    pub min_tail: usize,
}

impl Default for GofConfig {
    fn default() -> Self {
        GofConfig {
            n_replicates: 10_000,
            master_seed: 0,
            mode: ReplicateMode::Semiparametric,
            min_tail: DEFAULT_MIN_TAIL,
        }
    }
}

/// Bootstrap p-value with default mode and floor.
pub fn bootstrap_pvalue(
    sample: &SizeSample,
    fit: &ParetoTailFit,
    n_replicates: usize,
    master_seed: u64,
) -> Result<GofResult> {
    bootstrap_pvalue_with(
        sample,
        fit,
        &GofConfig {
            n_replicates,
            master_seed,
            ..GofConfig::default()
        },
    )
}

/// Monte Carlo p-value: the fraction of synthetic datasets whose KS
/// statistic to their own best fit is at least the empirical KS statistic.
///
/// Every replicate is refit with the same cutoff-scan rules as the
/// empirical sample. Replicates that fail to refit are excluded from the
/// exceedance count but still appear in the denominator, and their number
/// is reported.
pub fn bootstrap_pvalue_with(
    sample: &SizeSample,
    fit: &ParetoTailFit,
    config: &GofConfig,
) -> Result<GofResult> {
    if config.n_replicates == 0 {
        return Err(Error::Parameter {
            name: "n_replicates",
            value: 0.0,
            reason: "at least one replicate is required",
        });
    }
    let d_empirical = fit.ks_distance;
    let replicate_ds: Vec<Option<f64>> = (0..config.n_replicates)
        .into_par_iter()
        .map(|i| {
            let mut stream = RandomStream::from_master(config.master_seed, i as u64);
            let replicate = synth_dataset(sample, fit, config.mode, &mut stream).ok()?;
            let refit = scan_smin_with_floor(&replicate, None, config.min_tail).ok()?;
            Some(refit.ks_distance)
        })
        .collect();

    let mut successes: Vec<f64> = replicate_ds.iter().flatten().copied().collect();
    let n_failed = config.n_replicates - successes.len();
    let n_exceeding = successes.iter().filter(|&&d| d >= d_empirical).count();
    successes.sort_by(f64::total_cmp);
    let replicate_d_summary = if successes.is_empty() {
        None
    } else {
        let k = successes.len();
        let median = if k % 2 == 1 {
            successes[k / 2]
        } else {
            0.5 * (successes[k / 2 - 1] + successes[k / 2])
        };
        Some((successes[0], median, successes[k - 1]))
    };
    Ok(GofResult {
        p_value: n_exceeding as f64 / config.n_replicates as f64,
        n_replicates: config.n_replicates,
        n_exceeding,
        n_failed,
        d_empirical,
        master_seed: config.master_seed,
        mode: config.mode,
        replicate_d_summary,
    })
}

/// ln(L_PL / L_LN) over exactly the sample points at or above the shared
/// cutoff, accumulated in log space with compensated summation.
pub fn log_likelihood_ratio(
    sample: &SizeSample,
    pl: &ParetoTailFit,
    ln_fit: &LogNormalTailFit,
) -> Result<LikelihoodRatioResult> {
    if pl.s_min != ln_fit.s_min {
        return Err(Error::CutoffMismatch {
            pl: pl.s_min,
            ln: ln_fit.s_min,
        });
    }
    let tail = sample.tail(pl.s_min);
    if tail.is_empty() {
        return Err(Error::EmptyTail);
    }
    let pl_model = pl.model()?;
    let ln_model = ln_fit.model()?;
    let pl_loglik = neumaier_sum(
        tail.iter()
            .map(|&s| pl_model.ln_pdf(s).unwrap_or(f64::NAN)),
    );
    let ln_loglik = neumaier_sum(
        tail.iter()
            .map(|&s| ln_model.ln_pdf(s).unwrap_or(f64::NAN)),
    );
    if !pl_loglik.is_finite() || !ln_loglik.is_finite() {
        return Err(Error::Numerical(format!(
            "log-likelihood sums are not finite (power law {pl_loglik}, log-normal {ln_loglik})"
        )));
    }
    let r_natural = pl_loglik - ln_loglik;
    Ok(LikelihoodRatioResult {
        r_natural,
        r_base10: r_natural / std::f64::consts::LN_10,
        n_tail: tail.len(),
        pl_loglik,
        ln_loglik,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{LogNormalTail, ParetoTail};
    use crate::fit::{fit_pareto_given_smin, scan_smin};
    use crate::panel::YearMonth;

    fn sample(values: Vec<f64>) -> SizeSample {
        let n = values.len();
        SizeSample::new(YearMonth::new(1998, 12).unwrap(), values, n).unwrap()
    }

    fn pareto_sample(n: usize, zeta: f64, s_min: f64, seed: u64) -> SizeSample {
        let model = ParetoTail::new(zeta, s_min).unwrap();
        let mut stream = RandomStream::from_master(seed, 0);
        sample(model.sample(n, &mut stream).unwrap())
    }

    #[test]
    fn replicate_with_no_body_is_all_tail_draws() {
        let s = pareto_sample(50, 1.0, 10.0, 3);
        let fit = fit_pareto_given_smin(&s, 10.0).unwrap();
        assert_eq!(fit.n_tail, 50);
        let mut stream = RandomStream::from_master(7, 0);
        let rep = synth_dataset(&s, &fit, ReplicateMode::Semiparametric, &mut stream).unwrap();
        assert_eq!(rep.len(), 50);
        assert!(rep.sizes().iter().all(|&v| v >= 10.0));
    }

    #[test]
    fn replicates_are_stream_deterministic() {
        let s = pareto_sample(80, 1.1, 5.0, 11);
        let fit = scan_smin(&s, None).unwrap();
        for mode in [ReplicateMode::Semiparametric, ReplicateMode::TailOnly] {
            let a = synth_dataset(&s, &fit, mode, &mut RandomStream::from_master(5, 9)).unwrap();
            let b = synth_dataset(&s, &fit, mode, &mut RandomStream::from_master(5, 9)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn tail_only_replicates_have_tail_size() {
        let s = pareto_sample(200, 1.0, 1.0, 13);
        let fit = scan_smin(&s, None).unwrap();
        let mut stream = RandomStream::from_master(1, 0);
        let rep = synth_dataset(&s, &fit, ReplicateMode::TailOnly, &mut stream).unwrap();
        assert_eq!(rep.len(), fit.n_tail);
        assert!(rep.sizes().iter().all(|&v| v >= fit.s_min));
    }

    #[test]
    fn single_replicate_pvalue_is_zero_or_one() {
        let s = pareto_sample(60, 1.0, 1.0, 21);
        let fit = scan_smin(&s, None).unwrap();
        let gof = bootstrap_pvalue(&s, &fit, 1, 7).unwrap();
        assert!(gof.p_value == 0.0 || gof.p_value == 1.0);
        assert_eq!(gof.n_replicates, 1);
    }

    #[test]
    fn pvalue_counts_are_recomputable() {
        let s = pareto_sample(60, 1.0, 1.0, 22);
        let fit = scan_smin(&s, None).unwrap();
        let gof = bootstrap_pvalue(&s, &fit, 40, 3).unwrap();
        assert_eq!(
            gof.p_value,
            gof.n_exceeding as f64 / gof.n_replicates as f64
        );
        assert!(gof.n_exceeding + gof.n_failed <= gof.n_replicates);
        // Same seed reproduces the result bit for bit.
        let again = bootstrap_pvalue(&s, &fit, 40, 3).unwrap();
        assert_eq!(gof, again);
    }

    #[test]
    fn zero_replicates_is_a_parameter_error() {
        let s = pareto_sample(60, 1.0, 1.0, 23);
        let fit = scan_smin(&s, None).unwrap();
        assert!(bootstrap_pvalue(&s, &fit, 0, 1).is_err());
    }

    #[test]
    fn likelihood_ratio_identity_is_exact() {
        let s = pareto_sample(120, 1.2, 2.0, 31);
        let pl = scan_smin(&s, None).unwrap();
        let ln_fit = crate::fit::fit_lognormal_tail(&s, pl.s_min).unwrap();
        let r = log_likelihood_ratio(&s, &pl, &ln_fit).unwrap();
        assert_eq!(r.r_natural, r.pl_loglik - r.ln_loglik);
        assert_eq!(r.r_base10, r.r_natural / std::f64::consts::LN_10);
        assert_eq!(r.n_tail, s.tail(pl.s_min).len());
    }

    #[test]
    fn likelihood_ratio_rejects_mismatched_cutoffs() {
        let s = pareto_sample(120, 1.2, 2.0, 32);
        let pl = scan_smin(&s, None).unwrap();
        let ln_fit = crate::fit::fit_lognormal_tail(&s, pl.s_min * 2.0).unwrap();
        assert!(matches!(
            log_likelihood_ratio(&s, &pl, &ln_fit),
            Err(Error::CutoffMismatch { .. })
        ));
    }

    #[test]
    fn likelihood_ratio_is_zero_when_densities_coincide() {
        // One tail point; pick the power-law exponent so both densities
        // match there. R must then vanish identically.
        let s_min = 2.0;
        let point = s_min * std::f64::consts::E;
        let ln_model = LogNormalTail::new(-3.0, 1.0, s_min).unwrap();
        let target = ln_model.ln_pdf(point).unwrap();
        // ln p_PL(point) = ln ζ - ln s_min - (ζ+1); concave in ζ, max at ζ=1.
        let g = |zeta: f64| zeta.ln() - s_min.ln() - (zeta + 1.0) - target;
        assert!(g(1.0) > 0.0, "target density too high to intersect");
        let (mut lo, mut hi) = (1.0f64, 60.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let zeta = 0.5 * (lo + hi);
        let s = sample(vec![s_min / 2.0, point]);
        let pl = ParetoTailFit {
            zeta_hat: zeta,
            s_min,
            n_tail: 1,
            ks_distance: 0.0,
        };
        let ln_fit = LogNormalTailFit {
            mu_hat: -3.0,
            sigma_hat: 1.0,
            s_min,
            log_likelihood: target,
            converged: true,
            iterations: 0,
        };
        let r = log_likelihood_ratio(&s, &pl, &ln_fit).unwrap();
        assert!(r.r_natural.abs() < 1e-10, "R = {}", r.r_natural);
    }

    #[test]
    fn replicate_mode_round_trips_through_strings() {
        for mode in [ReplicateMode::Semiparametric, ReplicateMode::TailOnly] {
            let s = mode.to_string();
            assert_eq!(s.parse::<ReplicateMode>().unwrap(), mode);
        }
        assert!("bogus".parse::<ReplicateMode>().is_err());
    }
}
