//! Modified Bessel functions in log domain.
//!
//! `I_nu(x)` for real `nu >= 0`: power series (all terms positive) for
//! `x <= SERIES_SWITCH`, Hankel large-argument expansion above it, and the
//! series again when the expansion does not converge (large `nu` relative
//! to `x`).
//!
//! `K_nu(x)`: trapezoidal rule on `K_nu(x) = int_0^inf exp(-x cosh u) cosh(nu u) du`,
//! which converges geometrically for this analytic, doubly-decaying integrand.

use statrs::function::gamma::ln_gamma;

use super::LogValue;
use crate::error::{Error, Result};

/// Argument above which the asymptotic expansion is tried first.
pub const SERIES_SWITCH: f64 = 25.0;

pub fn bessel_i(nu: f64, x: f64) -> Result<LogValue> {
    if !(nu >= 0.0) || !(x >= 0.0) || !nu.is_finite() {
        return Err(Error::domain(format!("bessel_i needs nu >= 0, x >= 0 (got {nu}, {x})")));
    }
    if x == 0.0 {
        return Ok(if nu == 0.0 { LogValue::ONE } else { LogValue::ZERO });
    }
    if x.is_infinite() {
        return Ok(LogValue::positive(f64::INFINITY));
    }
    if x > SERIES_SWITCH {
        if let Some(l) = log_i_hankel(nu, x) {
            return Ok(LogValue::positive(l));
        }
    }
    Ok(LogValue::positive(log_i_series(nu, x)))
}

/// `ln I_nu(x) - x`, the exponentially scaled logarithm.
pub fn log_bessel_i_scaled(nu: f64, x: f64) -> Result<f64> {
    Ok(bessel_i(nu, x)?.ln() - x)
}

pub(crate) fn log_i_series(nu: f64, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    let log_t0 = nu * half.ln() - ln_gamma(nu + 1.0);
    // terms relative to the first, rescaled to stay in range
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut log_scale = 0.0f64;
    let mut k = 0.0f64;
    loop {
        k += 1.0;
        term *= q / (k * (k + nu));
        sum += term;
        if sum > 1e250 {
            sum *= 1e-250;
            term *= 1e-250;
            log_scale += 250.0 * std::f64::consts::LN_10;
        }
        // past the peak of the terms and negligible
        if k > half && term < 1e-17 * sum {
            break;
        }
    }
    log_t0 + log_scale + sum.ln()
}

/// Returns `None` when the expansion stalls before reaching full precision.
fn log_i_hankel(nu: f64, x: f64) -> Option<f64> {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        let next = -term * (mu - odd * odd) / (8.0 * kf * x);
        if next == 0.0 {
            // half-integer order: the expansion terminates and is exact
            return (sum > 0.0).then(|| x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln());
        }
        if next.abs() > term.abs() {
            return None;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            return (sum > 0.0).then(|| x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln());
        }
    }
    (term.abs() < 1e-15 * sum.abs() && sum > 0.0).then(|| x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln())
}

/// `e^x K_nu(x)` by the trapezoidal rule in the integral representation.
fn bessel_k_scaled(nu: f64, x: f64) -> f64 {
    let h = (0.5 / x.sqrt()).min(0.25);
    // cosh(u) - 1 = 2 sinh^2(u/2) keeps precision for small u
    let f = |u: f64| {
        let s = (0.5 * u).sinh();
        (-2.0 * x * s * s).exp() * (nu * u).cosh()
    };
    let mut sum = 0.5 * f(0.0);
    let mut prev = sum * 2.0;
    let mut k = 1.0;
    loop {
        let v = f(k * h);
        sum += v;
        if v < prev && v < 1e-18 * sum {
            break;
        }
        prev = v;
        k += 1.0;
        if k > 1e6 {
            break;
        }
    }
    h * sum
}

/// `K_nu(x)` for real `nu` and `x > 0`.
pub fn bessel_k(nu: f64, x: f64) -> Result<LogValue> {
    if !(x > 0.0) || !nu.is_finite() {
        return Err(Error::domain(format!("bessel_k needs x > 0 (got {x})")));
    }
    if x.is_infinite() {
        return Ok(LogValue::ZERO);
    }
    Ok(LogValue::positive(bessel_k_scaled(nu.abs(), x).ln() - x))
}

pub fn bessel_k2(x: f64) -> Result<LogValue> {
    bessel_k(2.0, x)
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn zero_argument() {
        assert_eq!(bessel_i(1.0, 0.0).unwrap(), LogValue::ZERO);
        assert_eq!(bessel_i(1.0, 0.0).unwrap().to_f64(), 0.0);
        assert_eq!(bessel_i(0.0, 0.0).unwrap().to_f64(), 1.0);
        assert!(bessel_i(-1.0, 1.0).is_err());
        assert!(bessel_i(1.0, -1.0).is_err());
    }

    #[test]
    fn irrational_order_matches_truncated_series() {
        let nu = 2f64.sqrt();
        let x: f64 = 0.5;
        // 30 terms with exact ratio recursion, Gamma evaluated directly
        let mut term = (x / 2.0).powf(nu) / gamma(nu + 1.0);
        let mut oracle = term;
        for k in 1..30 {
            let k = k as f64;
            term *= (x / 2.0).powi(2) / (k * (k + nu));
            oracle += term;
        }
        let v = bessel_i(nu, x).unwrap().to_f64();
        assert!(rel(v, oracle) < 1e-12, "{v} {oracle}");
    }

    #[test]
    fn reference_values() {
        // ln I_nu(x) at 30 digits (mpmath)
        let cases = [
            (1.0, 0.5, -1.35520544702533446448799482633),
            (1.0, 25.0, 22.4563124724753485992901728534),
            (2.5, 30.0, 27.278799122187749411178693834),
            (7.3, 40.0, 36.5670768495500425532736545324),
            (1.5, 100.0, 96.7684260379477801330181299514),
            (30.0, 60.0, 49.6250299959271460818441331283),
            (0.0, 3.0, 1.58530762181342091550662404161),
            (1.0, 500.0, 495.973006666268344463845973712),
        ];
        for (nu, x, want) in cases {
            let got = bessel_i(nu, x).unwrap().ln();
            assert!(
                (got - want).abs() < 1e-10 * want.abs().max(1.0),
                "nu={nu} x={x}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn large_argument_leading_term() {
        // the gap is ln(1 - (4 nu^2 - 1)/(8x) + ...): 7.5e-4 for nu = 1, 3.75e-3 for nu = 2
        let x: f64 = 500.0;
        let lead = x - 0.5 * (2.0 * std::f64::consts::PI * x).ln();
        for (nu, tol) in [(1.0, 1e-3), (2.0, 4e-3)] {
            let l = bessel_i(nu, x).unwrap().ln();
            assert!((l - lead).abs() < tol);
            let mu = 4.0 * nu * nu;
            let next = (1.0 - (mu - 1.0) / (8.0 * x) + (mu - 1.0) * (mu - 9.0) / (2.0 * (8.0 * x).powi(2))).ln();
            assert!((l - lead - next).abs() < 1e-7);
        }
    }

    #[test]
    fn switchover_overlap_agrees() {
        for nu in [0.0, 0.5, 1.0, 1.7, 2.236, 3.0, 4.5] {
            for x in [25.0, 26.0, 30.0, 40.0] {
                let series = log_i_series(nu, x);
                let hankel = log_i_hankel(nu, x).expect("expansion converges here");
                assert!((series - hankel).abs() < 1e-10, "nu={nu} x={x}: {series} {hankel}");
            }
        }
    }

    #[test]
    fn monotone_in_argument_and_order() {
        let xs: Vec<f64> = (1..60).map(|i| 0.7 * i as f64).collect();
        let nus = [0.0, 0.5, 1.0, 1.5, 2.0, 3.3, 5.0];
        for &nu in &nus {
            let vals: Vec<f64> = xs.iter().map(|&x| bessel_i(nu, x).unwrap().ln()).collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]), "nu={nu}");
        }
        for &x in &xs {
            let vals: Vec<f64> = nus.iter().map(|&nu| bessel_i(nu, x).unwrap().ln()).collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]), "x={x}");
        }
    }

    #[test]
    fn three_term_recurrence() {
        for nu in [1.0, 1.25, 1.5, 2.0, 2.7, 4.0] {
            for x in [0.1, 0.9, 3.0, 10.0, 24.9, 25.1, 60.0, 150.0] {
                let lo = bessel_i(nu - 1.0, x).unwrap().to_f64_scaled(-x);
                let hi = bessel_i(nu + 1.0, x).unwrap().to_f64_scaled(-x);
                let mid = bessel_i(nu, x).unwrap().to_f64_scaled(-x);
                let lhs = lo - hi;
                let rhs = 2.0 * nu / x * mid;
                assert!(rel(lhs, rhs) < 1e-8, "nu={nu} x={x}: {lhs} {rhs}");
            }
        }
    }

    #[test]
    fn k2_reference_values() {
        let cases = [
            (0.1, 199.503964642114117105400106202),
            (1.0, 1.62483889863517748281070738228),
            (2.5, 0.121460206278563836948364361949),
            (10.0, 0.000021509817006932768730664564424),
            (50.0, 3.54793183885819773842434963379e-23),
        ];
        for (x, want) in cases {
            let got = bessel_k2(x).unwrap().to_f64();
            assert!(rel(got, want) < 1e-10, "x={x}: {got} vs {want}");
        }
        let got = bessel_k2(300.0).unwrap().ln();
        assert!((got - 3.74856082727802574790939284716e-132f64.ln()).abs() < 1e-10);
        let k3 = bessel_k(3.0, 2.5).unwrap().to_f64();
        assert!(rel(k3, 0.26822714639344920276637651971) < 1e-10);
        assert!(bessel_k2(0.0).is_err());
    }

    #[test]
    fn k2_small_argument() {
        let x = 1e-4;
        let v = x * x * bessel_k2(x).unwrap().to_f64();
        assert!(rel(v, 2.0) < 1e-6);
    }

    #[test]
    fn k2_large_argument_expansion() {
        let x = 50.0;
        let lead = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp();
        let k = bessel_k2(x).unwrap().to_f64();
        // the first correction is (mu - 1)/(8x) = 3.75%, so the bare leading term sits ~3.9% low
        assert!(rel(k, lead) < 0.04);
        // K_nu(x) ~ sqrt(pi/2x) e^{-x} (1 + (mu-1)/(8x) + (mu-1)(mu-9)/(2(8x)^2)), mu = 16
        let mu = 16.0;
        let corrected = lead * (1.0 + (mu - 1.0) / (8.0 * x) + (mu - 1.0) * (mu - 9.0) / (2.0 * (8.0 * x).powi(2)));
        assert!(rel(k, corrected) < 1e-4);
    }
}
