//! Shared oracles for the integration suites. Everything here is
//! deliberately independent of the library's own evaluation paths:
//! quadrature instead of closed forms, double loops instead of the
//! single-pass KS, block sign counts instead of fitted trends.
//!
//! Each test binary compiles this module and uses its own subset.
#![allow(dead_code)]

use heavytail::dist::TailDistribution;
use heavytail::panel::{SizeSample, YearMonth};
use heavytail::rng::RandomStream;

pub fn sample_of(values: Vec<f64>) -> SizeSample {
    let n = values.len();
    SizeSample::new(YearMonth::new(1998, 12).unwrap(), values, n).unwrap()
}

pub fn draw(model: &dyn TailDistribution, n: usize, master: u64, stream: u64) -> SizeSample {
    let mut rng = RandomStream::from_master(master, stream);
    sample_of(model.sample(n, &mut rng).unwrap())
}

/// Adaptive Simpson quadrature.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 40)
}

/// ∫ pdf(s) ds over [lo, hi], integrated in log space (t = ln s) where the
/// integrand is smooth for both models.
pub fn integrate_pdf(model: &dyn TailDistribution, lo: f64, hi: f64, tol: f64) -> f64 {
    let g = |t: f64| {
        let s = t.exp();
        model.pdf(s).unwrap_or(0.0) * s
    };
    adaptive_simpson(&g, lo.ln(), hi.ln(), tol)
}

/// Double-loop KS oracle: both one-sided gaps at every point, with the
/// counts of smaller/not-larger points recomputed per point.
pub fn brute_force_ks(tail: &[f64], model_cdf: &dyn Fn(f64) -> f64) -> f64 {
    let m = tail.len() as f64;
    let mut d = 0.0f64;
    for &t in tail {
        let below = tail.iter().filter(|&&x| x < t).count() as f64 / m;
        let at_or_below = tail.iter().filter(|&&x| x <= t).count() as f64 / m;
        let cdf = model_cdf(t);
        d = d.max((cdf - below).abs()).max((cdf - at_or_below).abs());
    }
    d
}

/// Sign-pattern oracle for QQ residual trends.
///
/// Takes the QQ points ordered by x, keeps the top decile, splits it into
/// ten blocks, and counts the sign of consecutive block-mean differences
/// of y - x. Block-mean differences of a trendless residual walk are
/// independent fair coin flips, so "at least 8 of 9 increasing" is a
/// one-sided sign test at level 10/512 < 0.05.
pub fn qq_top_decile_monotone(points: &[(f64, f64)]) -> bool {
    let k = points.len();
    let top = &points[k - k / 10..];
    let blocks = 10usize.min(top.len());
    if blocks < 2 {
        return false;
    }
    let per = top.len() / blocks;
    let means: Vec<f64> = (0..blocks)
        .map(|b| {
            let chunk = &top[b * per..(b + 1) * per];
            chunk.iter().map(|(x, y)| y - x).sum::<f64>() / chunk.len() as f64
        })
        .collect();
    let positives = means.windows(2).filter(|w| w[1] > w[0]).count();
    // 8 of 9 positive differences: one-sided binomial p = 10/512 < 0.05.
    positives >= blocks - 2
}

/// KS statistic of sorted values against the uniform CDF on [0, 1].
pub fn ks_against_uniform(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in values.iter().enumerate() {
        d = d.max((v - i as f64 / n).abs()).max((v - (i + 1) as f64 / n).abs());
    }
    d
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
