//! Scalar special functions used by the closed-form throughput model.

use crate::error::{Error, Result};

/// `1/e`, the magnitude of the Lambert W branch point.
pub const INV_E: f64 = 0.367_879_441_171_442_33;

/// Arguments this far below `-1/e` are treated as rounding noise and clamped.
pub const BRANCH_CLAMP: f64 = 1e-12;

const HALLEY_MAX_ITER: usize = 50;
const HALLEY_REL_STEP: f64 = 1e-14;

/// Principal branch `W0` of the Lambert W function, the inverse of `w * exp(w)`
/// on `w >= -1`.
///
/// Arguments in `[-1/e - 1e-12, -1/e)` are clamped to the branch point.
/// Anything lower has no real solution and yields [`Error::LambertDomain`].
pub fn lambert_w0(y: f64) -> Result<f64> {
    if y.is_nan() {
        return Err(Error::LambertDomain(y));
    }
    if y < -INV_E - BRANCH_CLAMP {
        return Err(Error::LambertDomain(y));
    }
    if y <= -INV_E {
        return Ok(-1.0);
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    if y == f64::INFINITY {
        return Ok(f64::INFINITY);
    }

    let mut w = initial_guess(y);
    for _ in 0..HALLEY_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - y;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        // Keep the iterate on the principal branch.
        let next = (w - step).max(-1.0);
        let moved = (next - w).abs();
        w = next;
        if moved <= HALLEY_REL_STEP * w.abs().max(1e-300) {
            break;
        }
    }
    Ok(w)
}

fn initial_guess(y: f64) -> f64 {
    if y < -0.25 {
        // Puiseux series around the branch point.
        let p = (2.0 * (std::f64::consts::E * y + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if y < 3.0 {
        // Exact at 0, adequate up to a few units.
        y.ln_1p() * (1.0 - 0.25 * y.ln_1p() / (1.0 + y.ln_1p()))
    } else {
        let l1 = y.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

/// `Pr(V <= n)` for `V ~ Poisson(mu)`.
///
/// Sums whichever side of `n` has geometrically decaying terms, starting from
/// the term nearest the mode: the lower sum directly when `n < mu`, otherwise
/// `1 -` the upper tail. This keeps full relative accuracy near both 0 and 1
/// and works for means well past `1e4`.
pub fn poisson_cdf(n: u64, mu: f64) -> f64 {
    debug_assert!(mu >= 0.0, "Poisson mean must be nonnegative");
    if mu <= 0.0 {
        return 1.0;
    }
    if mu.is_infinite() {
        return 0.0;
    }
    let log_pmf = |k: f64| k * mu.ln() - mu - libm::lgamma(k + 1.0);

    if (n as f64) < mu {
        // p(n) (1 + n/mu + n(n-1)/mu^2 + ...)
        let mut sum = 1.0;
        let mut ratio = 1.0;
        let mut k = n as f64;
        while k > 0.0 {
            ratio *= k / mu;
            sum += ratio;
            if ratio < 1e-17 * sum {
                break;
            }
            k -= 1.0;
        }
        (log_pmf(n as f64).exp() * sum).min(1.0)
    } else {
        // 1 - p(n+1) (1 + mu/(n+2) + ...)
        let mut sum = 1.0;
        let mut ratio = 1.0;
        let mut k = n as f64 + 2.0;
        loop {
            ratio *= mu / k;
            sum += ratio;
            if ratio < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        let tail = log_pmf(n as f64 + 1.0).exp() * sum;
        (1.0 - tail).max(0.0)
    }
}

/// Gaussian tail probability `Q(x) = Pr(Z > x)` for a standard normal `Z`.
pub fn qfunc(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Bisection on `w * exp(w) = y`, independent of the Halley path.
    fn lambert_bisect(y: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Composite Simpson integration of the standard normal density on `[x, x + 40]`.
    fn q_quadrature(x: f64) -> f64 {
        let n = 200_000;
        let (a, b) = (x, x + 40.0);
        let h = (b - a) / n as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(a) + pdf(b);
        for i in 1..n {
            let t = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(t);
        }
        s * h / 3.0
    }

    fn poisson_cdf_direct(n: u64, mu: f64) -> f64 {
        let mut term = (-mu).exp();
        let mut sum = term;
        for k in 1..=n {
            term *= mu / k as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn lambert_fixed_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert_eq!(lambert_w0(-INV_E).unwrap(), -1.0);
        let oracle = lambert_bisect(1.0, 0.0, 1.0);
        assert!((oracle - 0.567_143_290_4).abs() < 1e-10);
        assert!((lambert_w0(1.0).unwrap() - oracle).abs() < 1e-13);
    }

    #[test]
    fn lambert_matches_bisection_across_range() {
        for &y in &[
            -0.36, -0.3, -0.1, -1e-8, 1e-8, 0.5, 2.0, 10.0, 1e3, 1e10, 1e300,
        ] {
            let w = lambert_w0(y).unwrap();
            let oracle = lambert_bisect(y, -1.0, 710.0);
            assert!(
                (w - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
                "y={y}: {w} vs {oracle}"
            );
        }
    }

    #[test]
    fn lambert_clamps_and_rejects_below_branch_point() {
        assert_eq!(lambert_w0(-INV_E - 5e-13).unwrap(), -1.0);
        assert!(matches!(
            lambert_w0(-INV_E - 1e-9),
            Err(Error::LambertDomain(_))
        ));
        assert!(matches!(lambert_w0(-1.0), Err(Error::LambertDomain(_))));
        assert!(lambert_w0(f64::NAN).is_err());
    }

    #[test]
    fn lambert_near_branch_point_is_accurate() {
        for d in [1e-15, 1e-12, 1e-9, 1e-6, 1e-3] {
            let y = -INV_E + d;
            let w = lambert_w0(y).unwrap();
            assert!(w >= -1.0);
            assert!((w * w.exp() - y).abs() <= 1e-12, "d={d}");
        }
    }

    #[test]
    fn lambert_roundtrip_dense_sweep() {
        // Deterministic 10^4-point sweep over [-1/e, 1e3].
        let n = 10_000;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let y = -INV_E + t * t * (1e3 + INV_E);
            let w = lambert_w0(y).unwrap();
            assert!((w * w.exp() - y).abs() <= 1e-12 * y.abs().max(1.0), "y={y}");
            assert!(w >= prev, "not monotone at y={y}");
            prev = w;
        }
    }

    #[test]
    fn poisson_cdf_examples() {
        assert_eq!(poisson_cdf(5, 0.0), 1.0);
        assert!((poisson_cdf(0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        let oracle = poisson_cdf_direct(29, 27.68);
        assert!((oracle - 0.645_688).abs() < 1e-5);
        assert!((poisson_cdf(29, 27.68) - oracle).abs() < 1e-10);
    }

    #[test]
    fn poisson_cdf_large_mean_is_stable() {
        // Direct summation underflows at mu = 1e4; compare against the normal
        // approximation with continuity correction instead.
        let mu = 1e4;
        let c = poisson_cdf(10_000, mu);
        let approx = 1.0 - qfunc((10_000.5 - mu) / mu.sqrt());
        assert!((c - approx).abs() < 5e-3, "{c} vs {approx}");
        assert!(poisson_cdf(9_000, mu) < 1e-20);
        assert!(1.0 - poisson_cdf(11_000, mu) < 1e-20);
        assert!(poisson_cdf(9_000, mu) > 0.0);
    }

    #[test]
    fn poisson_cdf_matches_direct_sum_moderate() {
        for &mu in &[0.1, 1.0, 5.0, 27.77, 100.0, 300.0] {
            for n in [0u64, 1, 3, 10, 29, 60, 200, 400] {
                let a = poisson_cdf(n, mu);
                let b = poisson_cdf_direct(n, mu);
                assert!(
                    (a - b).abs() <= 1e-12 * b.max(1e-300) + 1e-300,
                    "n={n} mu={mu}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn qfunc_examples() {
        assert_eq!(qfunc(0.0), 0.5);
        assert!(qfunc(40.0) < 1e-300);
        assert!(qfunc(f64::INFINITY) == 0.0);
        let oracle = q_quadrature(1.0);
        assert!((oracle - 0.158_655).abs() < 1e-6);
        assert!((qfunc(1.0) - oracle).abs() < 1e-10);
        let oracle = q_quadrature(8f64.sqrt());
        assert!((qfunc(8f64.sqrt()) - oracle).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn lambert_roundtrip(y in -INV_E..1e3f64) {
            let w = lambert_w0(y).unwrap();
            prop_assert!(w >= -1.0);
            prop_assert!((w * w.exp() - y).abs() <= 1e-12 * y.abs().max(1.0));
        }

        #[test]
        fn lambert_monotone(a in -INV_E..50.0f64, b in -INV_E..50.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(lambert_w0(lo).unwrap() <= lambert_w0(hi).unwrap());
        }

        #[test]
        fn poisson_cdf_monotone(n in 0u64..200, mu in 0.0f64..150.0, dmu in 0.0f64..10.0) {
            let c = poisson_cdf(n, mu);
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(poisson_cdf(n + 1, mu) >= c);
            prop_assert!(poisson_cdf(n, mu + dmu) <= c + 1e-15);
        }

        #[test]
        fn qfunc_symmetry(x in -30.0f64..30.0) {
            prop_assert!((qfunc(x) + qfunc(-x) - 1.0).abs() <= 1e-14);
        }

        #[test]
        fn qfunc_decreasing(x in -30.0f64..30.0, dx in 1e-6f64..1.0) {
            prop_assert!(qfunc(x + dx) <= qfunc(x));
        }
    }

    #[test]
    fn poisson_cdf_tends_to_one() {
        for &mu in &[0.5, 20.0, 1e3] {
            assert!((poisson_cdf(10_000_000, mu) - 1.0).abs() < 1e-14);
        }
    }
}
