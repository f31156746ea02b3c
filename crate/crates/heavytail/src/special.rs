//! Complementary error function plumbing.
//!
//! Every log-normal tail quantity in this crate is expressed through erfc,
//! so the accuracy of these three functions bounds the accuracy of every
//! fit downstream. `erfc` itself comes from libm (< 2 ulp); the inverse is
//! a rational initial guess polished by Newton steps on the forward
//! function, with a bisection fallback that is guaranteed to bracket.

use std::f64::consts::PI;

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// `ln(erfc(x))`, stable for arbitrarily large positive `x`.
///
/// `erfc` underflows near x ≈ 27.2; beyond x = 25 the asymptotic expansion
/// erfc(x) = exp(-x²)/(x√π) · (1 - 1/(2x²) + 3/(2x²)² - ...) is used, which
/// has converged to full f64 precision well before that point.
pub fn ln_erfc(x: f64) -> f64 {
    if x <= 25.0 {
        erfc(x).ln()
    } else {
        let inv2x2 = 1.0 / (2.0 * x * x);
        let mut term = 1.0;
        let mut series = 1.0;
        for n in 1..=12 {
            term *= -((2 * n - 1) as f64) * inv2x2;
            series += term;
            if term.abs() < 1e-17 * series {
                break;
            }
        }
        -x * x - x.ln() - 0.5 * PI.ln() + series.ln()
    }
}

/// Inverse of `erfc` on (0, 2).
///
/// Returns the `z` with `erfc(z) = y`, accurate to a few ulps. Panics if
/// `y` is outside the open interval; callers validate their probability
/// arguments before reaching this point.
pub fn erfc_inv(y: f64) -> f64 {
    assert!(y > 0.0 && y < 2.0, "erfc_inv argument {y} outside (0, 2)");
    if y == 1.0 {
        return 0.0;
    }
    // erfc(z) = 2 Φ(-z√2)  ⇒  z = -Φ⁻¹(y/2) / √2
    let mut z = -inv_norm_cdf(0.5 * y) / std::f64::consts::SQRT_2;
    let two_over_sqrt_pi = 2.0 / PI.sqrt();
    let mut converged = false;
    for _ in 0..20 {
        let deriv = two_over_sqrt_pi * (-z * z).exp();
        if deriv == 0.0 || !deriv.is_finite() {
            break;
        }
        let step = (erfc(z) - y) / deriv;
        z += step;
        if !z.is_finite() {
            break;
        }
        if step.abs() <= 1e-15 * (1.0 + z.abs()) {
            converged = true;
            break;
        }
    }
    if converged && z.is_finite() {
        return z;
    }
    bisect_erfc(y)
}

/// Bisection fallback for `erfc_inv`. erfc is strictly decreasing and the
/// interval [-28, 28] brackets every representable target in (0, 2).
fn bisect_erfc(y: f64) -> f64 {
    let (mut lo, mut hi) = (-28.0_f64, 28.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if erfc(mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Acklam's rational approximation to the inverse normal CDF
/// (relative error < 1.2e-9, refined by the Newton loop above).
#[allow(clippy::excessive_precision)]
fn inv_norm_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    debug_assert!(p > 0.0 && p < 1.0);
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    // Reference values computed with 50-digit arithmetic (mpmath).
    const ERFC_REFS: [(f64, f64); 7] = [
        (-2.0, 1.9953222650189527341620692563672529286109),
        (-0.5, 1.5204998778130465376827466538919645287365),
        (0.0, 1.0),
        (0.5, 0.47950012218695346231725334610803547126354),
        (1.0, 0.15729920705028513065877936491739074070393),
        (2.0, 0.0046777349810472658379307436327470713891082),
        (5.0, 1.5374597944280348501883434853833788901180e-12),
    ];

    #[test]
    fn erfc_matches_reference_to_1e14() {
        for &(x, want) in &ERFC_REFS {
            let got = erfc(x);
            let rel = ((got - want) / want).abs();
            assert!(rel < 1e-14, "erfc({x}) = {got}, want {want}, rel {rel}");
        }
    }

    #[test]
    fn ln_erfc_agrees_with_direct_log_below_switchover() {
        for &(x, want) in &ERFC_REFS {
            let got = ln_erfc(x);
            assert!((got - want.ln()).abs() < 1e-13 * (1.0 + want.ln().abs()));
        }
    }

    #[test]
    fn ln_erfc_continuous_at_switchover() {
        // mpmath: log(erfc(25)) and log(erfc(30))
        let want_25 = -628.792039174071685368696059463; // direct branch
        let want_30 = -903.974117110643878079600243618; // series branch
        assert!((ln_erfc(25.0) - want_25).abs() < 1e-9);
        assert!((ln_erfc(30.0) - want_30).abs() < 1e-9);
        // No jump across the branch boundary.
        let below = ln_erfc(25.0 - 1e-9);
        let above = ln_erfc(25.0 + 1e-9);
        assert!((below - above).abs() < 1e-6);
    }

    #[test]
    fn ln_erfc_of_negative_infinity_is_ln_two() {
        assert_eq!(ln_erfc(f64::NEG_INFINITY), 2.0_f64.ln());
    }

    #[test]
    fn erfc_inv_round_trips() {
        let mut y = 1e-12;
        while y < 2.0 {
            let z = erfc_inv(y);
            let back = erfc(z);
            assert!(
                ((back - y) / y).abs() < 1e-12,
                "erfc(erfc_inv({y})) = {back}",
            );
            y *= 1.37;
        }
        // And near the upper endpoint.
        for &y in &[1.9, 1.99, 1.999999, 2.0 - 1e-12] {
            let z = erfc_inv(y);
            assert!(((erfc(z) - y) / y).abs() < 1e-12);
        }
    }

    #[test]
    fn erfc_inv_of_one_is_zero() {
        assert_eq!(erfc_inv(1.0), 0.0);
    }

    #[test]
    fn bisection_fallback_agrees_with_newton() {
        for &y in &[1e-10, 0.3, 1.0 + 1e-3, 1.9999] {
            let z = bisect_erfc(y);
            assert!((erfc(z) - y).abs() < 1e-12 * y.max(1e-3));
        }
    }

    #[test]
    #[should_panic]
    fn erfc_inv_rejects_zero() {
        erfc_inv(0.0);
    }
}
