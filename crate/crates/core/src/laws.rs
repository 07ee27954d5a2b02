//! Closed-form characteristic functions, Girsanov identities, and limit laws.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::WindingVector;
use crate::radial::{radial_implicit_end, RadialSpec, StepPolicy};
use crate::rng::{map_paths, substreams, StreamKey};
use crate::specfun::{bessel_k, log_bessel_i_scaled, Quadrature, Upper};
use crate::stats::{mean_stderr, rao_blackwell_cf};
use crate::winding::WindingSample;

/// Characteristic function value at one frequency. Closed forms carry zero errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfEstimate {
    pub lambda: WindingVector,
    pub value: Complex64,
    /// Standard error of the real part.
    pub stderr: f64,
    /// Standard error of the imaginary part.
    pub stderr_im: f64,
    pub n_paths: usize,
}

impl CfEstimate {
    pub fn exact(lambda: WindingVector, value: f64) -> Self {
        CfEstimate {
            lambda,
            value: Complex64::new(value, 0.0),
            stderr: 0.0,
            stderr_im: 0.0,
            n_paths: 0,
        }
    }

    fn real_mc(lambda: WindingVector, value: f64, stderr: f64, n_paths: usize) -> Self {
        CfEstimate {
            lambda,
            value: Complex64::new(value, 0.0),
            stderr,
            stderr_im: 0.0,
            n_paths,
        }
    }

    /// `sqrt(se_a^2 + se_b^2)` for the real parts.
    pub fn combined_stderr(&self, other: &CfEstimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

/// `sqrt(1 + |lambda|^2) - 1`, computed without cancellation.
pub fn tilt_exponent(lambda_norm: f64) -> f64 {
    let l2 = lambda_norm * lambda_norm;
    l2 / ((1.0 + l2).sqrt() + 1.0)
}

fn ln_cosh(r: f64) -> f64 {
    let a = r.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `ln tanh r` for `r > 0`, accurate for large `r`.
fn ln_tanh(r: f64) -> f64 {
    (-2.0 / ((2.0 * r).exp() + 1.0)).ln_1p()
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::domain(format!("{name} = {v} must be positive and finite")));
    }
    Ok(())
}

/// Flat characteristic function by quadrature of the Bessel semigroup:
/// `E[e^{-|lambda|^2 A_t / 2}] = (e^{-rho^2/2t}/(t rho)) int_0^inf I_nu(r rho/t) e^{-r^2/2t} r^2 dr`,
/// `nu = sqrt(1 + |lambda|^2)`.
pub fn cf_flat_exact_norm(lambda_norm: f64, t: f64, rho: f64) -> Result<f64> {
    check_positive("t", t)?;
    check_positive("rho", rho)?;
    if !(lambda_norm >= 0.0) || !lambda_norm.is_finite() {
        return Err(Error::domain("frequency norm must be finite and nonnegative"));
    }
    let nu = (1.0 + lambda_norm * lambda_norm).sqrt();
    let sd = t.sqrt();
    let log_norm = (t * rho).ln();
    // ln I_nu(x) - x absorbs e^{x}, leaving the Gaussian factor centred at rho
    let f = |r: f64| {
        if r <= 0.0 {
            return 0.0;
        }
        let ls = log_bessel_i_scaled(nu, r * rho / t).unwrap_or(f64::NEG_INFINITY);
        let d = r - rho;
        (ls - d * d / (2.0 * t) + 2.0 * r.ln() - log_norm).exp()
    };
    let mut pts = vec![0.0, rho];
    for k in [1.0, 2.0, 4.0, 8.0, 12.0] {
        pts.push(rho + k * sd);
        if rho - k * sd > 0.0 {
            pts.push(rho - k * sd);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let q = Quadrature::new(1e-12).abs_tol(1e-16).max_panels(20_000);
    Ok(q.integrate_with_breaks(f, &pts)?.value)
}

pub fn cf_flat_exact(lambda: WindingVector, t: f64, rho: f64) -> Result<CfEstimate> {
    Ok(CfEstimate::exact(lambda, cf_flat_exact_norm(lambda.norm(), t, rho)?))
}

/// `c / sqrt(ln t)`: scale under which the flat winding has a Gaussian limit.
///
/// `A_t ~ ln(t) / 2`, so `c = sqrt(2)` gives the standard normal limit and the
/// exact characteristic function tends to `e^{-|lambda|^2/2}`.
pub fn flat_log_scale(t: f64, c: f64) -> Result<f64> {
    if !(t > 1.0) {
        return Err(Error::domain("logarithmic scaling needs t > 1"));
    }
    Ok(c / t.ln().sqrt())
}

/// Girsanov route on the flat space: `rho^mu E^{(mu)}[R_t^{-mu}]` with `R`
/// a Bessel process of dimension `2 mu + 4` started at `rho`.
pub fn cf_flat_girsanov(
    lambda: WindingVector,
    t: f64,
    rho: f64,
    n_paths: usize,
    policy: &StepPolicy,
    key: StreamKey,
) -> Result<CfEstimate> {
    check_positive("t", t)?;
    let mu = tilt_exponent(lambda.norm());
    if mu == 0.0 {
        return Ok(CfEstimate::exact(lambda, 1.0));
    }
    let spec = RadialSpec::bessel(2.0 * mu + 4.0, rho)?;
    let times = policy.times(t)?;
    let key = key.substream(substreams::GIRSANOV);
    let v = map_paths(key, n_paths, |_, rng| {
        let e = radial_implicit_end(&spec, &times, policy.refinement, None, rng)?;
        Ok((mu * (rho / e.value).ln()).exp())
    })?;
    let m = mean_stderr(&v)?;
    Ok(CfEstimate::real_mc(lambda, m.mean, m.stderr, n_paths))
}

/// Girsanov route on the projective line:
/// `(sin 2r_0)^mu e^{-2(|lambda|^2 + mu)t} E^{(mu)}[(sin 2r_t)^{-mu}]`
/// with tilted drift `(2 mu + 3) cot(2r)`.
pub fn cf_hp1_identity(
    lambda: WindingVector,
    t: f64,
    r0: f64,
    n_paths: usize,
    policy: &StepPolicy,
    key: StreamKey,
) -> Result<CfEstimate> {
    check_positive("t", t)?;
    let mu = tilt_exponent(lambda.norm());
    let spec = RadialSpec::jacobi_trig(2.0 * mu + 3.0, r0)?;
    if mu == 0.0 {
        return Ok(CfEstimate::exact(lambda, 1.0));
    }
    let log_pre = mu * (2.0 * r0).sin().ln() - 2.0 * (lambda.norm_sqr() + mu) * t;
    let times = policy.times(t)?;
    let key = key.substream(substreams::GIRSANOV);
    let v = map_paths(key, n_paths, |_, rng| {
        let e = radial_implicit_end(&spec, &times, policy.refinement, None, rng)?;
        Ok((log_pre - mu * (2.0 * e.value).sin().ln()).exp())
    })?;
    let m = mean_stderr(&v)?;
    Ok(CfEstimate::real_mc(lambda, m.mean, m.stderr, n_paths))
}

/// Normalisation of `zeta(t)` for the long-time law on the projective line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hp1Scaling {
    /// `zeta(t) / sqrt(t)`, Gaussian in the limit with covariance `6 I` (`A_t / t -> 6`).
    SqrtT,
    /// `zeta(t) / t`, which collapses to the point mass at the origin.
    T,
}

impl Hp1Scaling {
    pub fn divisor(self, t: f64) -> f64 {
        match self {
            Hp1Scaling::SqrtT => t.sqrt(),
            Hp1Scaling::T => t,
        }
    }
}

/// `E exp(i lambda . zeta(t) / s(t))` from time-change samples sharing one horizon.
pub fn cf_hp1_scaled(samples: &[WindingSample], lambda: WindingVector, scaling: Hp1Scaling) -> Result<CfEstimate> {
    let t = samples.first().ok_or_else(|| Error::domain("no samples"))?.horizon;
    check_positive("t", t)?;
    if samples.iter().any(|s| s.horizon != t) {
        return Err(Error::domain("samples have different horizons"));
    }
    let mut e = rao_blackwell_cf(samples, lambda * (1.0 / scaling.divisor(t)))?;
    e.lambda = lambda;
    Ok(e)
}

/// Long-time limit on hyperbolic space:
/// `tanh(r_0)^nu (1 + nu / (2 cosh^2 r_0))`, `nu = sqrt(1 + |lambda|^2) - 1`.
pub fn cf_hh1_limit(lambda: WindingVector, r0: f64) -> Result<CfEstimate> {
    check_positive("r0", r0)?;
    let nu = tilt_exponent(lambda.norm());
    let c2 = (2.0 * ln_cosh(r0)).exp();
    let v = (nu * ln_tanh(r0)).exp() * (1.0 + nu / (2.0 * c2));
    Ok(CfEstimate::exact(lambda, v))
}

/// Estimator used by [`cf_hh1_identity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hh1Estimator {
    /// Mean of `tanh(r_t)^{-nu} cosh^2(r_t)` as it stands. Its relative
    /// variance grows like `e^{4t}`.
    Plain,
    /// Splits off `E[cosh^2 r_t]`, known exactly, and averages only the
    /// bounded remainder `cosh^2(r_t) (tanh(r_t)^{-nu} - 1)`.
    ControlVariate,
}

/// Girsanov route on hyperbolic space:
/// `e^{-4t} tanh(r_0)^nu cosh(r_0)^{-2} E^{(nu)}[tanh(r_t)^{-nu} cosh^2 r_t]`
/// with tilted drift `(3/2 + nu) coth r - (1/2 + nu) tanh r`.
#[allow(clippy::too_many_arguments)]
pub fn cf_hh1_identity(
    lambda: WindingVector,
    t: f64,
    r0: f64,
    n_paths: usize,
    policy: &StepPolicy,
    key: StreamKey,
    estimator: Hh1Estimator,
) -> Result<CfEstimate> {
    check_positive("t", t)?;
    let nu = tilt_exponent(lambda.norm());
    let (alpha, beta) = (1.5 + nu, -0.5 - nu);
    let spec = RadialSpec::jacobi_hyp(alpha, beta, r0)?;
    let log_pre = -4.0 * t + nu * ln_tanh(r0) - 2.0 * ln_cosh(r0);
    let times = policy.times(t)?;
    let key = key.substream(substreams::GIRSANOV);
    match estimator {
        Hh1Estimator::Plain => {
            let v = map_paths(key, n_paths, |_, rng| {
                let r = radial_implicit_end(&spec, &times, policy.refinement, None, rng)?.value;
                Ok((log_pre - nu * ln_tanh(r) + 2.0 * ln_cosh(r)).exp())
            })?;
            let m = mean_stderr(&v)?;
            Ok(CfEstimate::real_mc(lambda, m.mean, m.stderr, n_paths))
        }
        Hh1Estimator::ControlVariate => {
            let base = cosh2_moment(alpha, beta, r0, t)?;
            if nu == 0.0 {
                return Ok(CfEstimate::exact(lambda, (log_pre + base.ln()).exp()));
            }
            let v = map_paths(key, n_paths, |_, rng| {
                let r = radial_implicit_end(&spec, &times, policy.refinement, None, rng)?.value;
                let c2 = (2.0 * ln_cosh(r)).exp();
                Ok(c2 * (-nu * ln_tanh(r)).exp_m1())
            })?;
            let m = mean_stderr(&v)?;
            let scale = log_pre.exp();
            Ok(CfEstimate::real_mc(
                lambda,
                scale * (base + m.mean),
                scale * m.stderr,
                n_paths,
            ))
        }
    }
}

/// `E[cosh^2 r_t]` for the hyperbolic Jacobi diffusion with drift
/// `alpha coth r + beta tanh r`: `c + e^{2(1+alpha+beta)t}(cosh^2 r_0 - c)`,
/// `c = (1 + 2 beta) / (2 (1 + alpha + beta))`.
pub fn cosh2_moment(alpha: f64, beta: f64, r0: f64, t: f64) -> Result<f64> {
    let k = 1.0 + alpha + beta;
    if k == 0.0 {
        return Err(Error::domain("1 + alpha + beta = 0 is outside the closed form"));
    }
    if !(t >= 0.0) {
        return Err(Error::domain("t must be nonnegative"));
    }
    let c = (1.0 + 2.0 * beta) / (2.0 * k);
    let c0 = r0.cosh().powi(2);
    if t == 0.0 {
        return Ok(c0);
    }
    Ok(c + (2.0 * k * t).exp() * (c0 - c))
}

/// Relativistic Cauchy density as a function of `|x|`:
/// `(y e^y / 2 pi^2) K_2(s) / s^2`, `s = sqrt(|x|^2 + y^2)`.
pub fn relativistic_cauchy_radial(rho: f64, y: f64) -> Result<f64> {
    check_positive("y", y)?;
    let s2 = rho * rho + y * y;
    let s = s2.sqrt();
    let lk = bessel_k(2.0, s)?.ln();
    Ok((y.ln() + y + lk - (2.0 * PI * PI).ln() - s2.ln()).exp())
}

pub fn relativistic_cauchy_density(x: WindingVector, y: f64) -> Result<f64> {
    relativistic_cauchy_radial(x.norm(), y)
}

/// `G(u) = (-ln tanh u)/(2 pi^2 tanh u) K_2(s)/s^2` with `s^2 = |x|^2 + ln^2 tanh u`:
/// the relativistic Cauchy density at `y = -ln tanh u`.
pub fn hh1_limit_kernel(rho: f64, u: f64) -> Result<f64> {
    check_positive("u", u)?;
    relativistic_cauchy_radial(rho, -ln_tanh(u))
}

/// `dG/du` in closed form, using `d/ds (K_2(s)/s^2) = -K_3(s)/s^2` and `dy/du = -2/sinh 2u`.
pub fn hh1_limit_kernel_du(rho: f64, u: f64) -> Result<f64> {
    check_positive("u", u)?;
    let y = -ln_tanh(u);
    let s2 = rho * rho + y * y;
    let s = s2.sqrt();
    let k2 = bessel_k(2.0, s)?.ln();
    let k3 = bessel_k(3.0, s)?.ln();
    let c = y - (2.0 * PI * PI).ln();
    // dG/dy = e^y/(2 pi^2) [(1 + y) K_2/s^2 - y^2 K_3/s^3]
    let dg_dy = (1.0 + y) * (c + k2 - s2.ln()).exp() - y * y * (c + k3 - 3.0 * s.ln()).exp();
    Ok(dg_dy * (-2.0 / (2.0 * u).sinh()))
}

/// Density of the long-time hyperbolic winding as a function of `|x|`:
/// `G(r_0) + (tanh r_0 / 2) G'(r_0)`.
pub fn hh1_limit_density_radial(rho: f64, r0: f64) -> Result<f64> {
    Ok(hh1_limit_kernel(rho, r0)? + 0.5 * r0.tanh() * hh1_limit_kernel_du(rho, r0)?)
}

pub fn hh1_limit_density(x: WindingVector, r0: f64) -> Result<f64> {
    hh1_limit_density_radial(x.norm(), r0)
}

/// An isotropic density on R^3 sampled along the radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    radii: Vec<f64>,
    values: Vec<f64>,
    start_radius: f64,
}

impl DensityGrid {
    pub fn new(radii: Vec<f64>, values: Vec<f64>, start_radius: f64) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 3 {
            return Err(Error::domain("density grid needs at least 3 radii, one value each"));
        }
        if radii[0] < 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("radii must be nonnegative and strictly increasing"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain("density values must be finite and nonnegative"));
        }
        Ok(DensityGrid {
            radii,
            values,
            start_radius,
        })
    }

    /// Samples `f` at `a sinh(s)` for equally spaced `s`, dense near 0.
    pub fn sample<F: Fn(f64) -> Result<f64>>(
        f: F,
        scale: f64,
        rmax: f64,
        points: usize,
        start_radius: f64,
    ) -> Result<Self> {
        check_positive("scale", scale)?;
        check_positive("rmax", rmax)?;
        if points < 3 {
            return Err(Error::domain("need at least 3 grid points"));
        }
        let smax = (rmax / scale).asinh();
        let radii: Vec<f64> = (0..points)
            .map(|i| {
                if i + 1 == points {
                    rmax
                } else {
                    scale * (smax * i as f64 / (points - 1) as f64).sinh()
                }
            })
            .collect();
        let values = radii.iter().map(|&r| f(r)).collect::<Result<Vec<_>>>()?;
        Self::new(radii, values, start_radius)
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start_radius(&self) -> f64 {
        self.start_radius
    }

    /// `4 pi int f rho^2 d rho`.
    pub fn total_mass(&self) -> f64 {
        radial_cf(self, 0.0)
    }
}

/// Limit density of the hyperbolic winding on a radial grid up to `rmax`.
pub fn hh1_limit_density_grid(r0: f64, rmax: f64, points: usize) -> Result<DensityGrid> {
    check_positive("r0", r0)?;
    let y = -ln_tanh(r0);
    DensityGrid::sample(|r| hh1_limit_density_radial(r, r0), 0.5 * y.min(1.0), rmax, points, r0)
}

fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 - z * z / 6.0
    } else {
        z.sin() / z
    }
}

/// Composite Simpson rule on an uneven grid.
fn simpson_uneven(x: &[f64], f: &[f64]) -> f64 {
    let n = x.len() - 1;
    let mut s = 0.0;
    let mut i = 0;
    while i + 2 <= n {
        let h0 = x[i + 1] - x[i];
        let h1 = x[i + 2] - x[i + 1];
        let hs = h0 + h1;
        s += hs / 6.0 * ((2.0 - h1 / h0) * f[i] + hs * hs / (h0 * h1) * f[i + 1] + (2.0 - h0 / h1) * f[i + 2]);
        i += 2;
    }
    if n % 2 == 1 {
        // last interval from the parabola through the final three points
        let h = x[n] - x[n - 1];
        let hp = x[n - 1] - x[n - 2];
        let a = (2.0 * h * h + 3.0 * h * hp) / (6.0 * (hp + h));
        let b = (h * h + 3.0 * h * hp) / (6.0 * hp);
        let c = h * h * h / (6.0 * hp * (hp + h));
        s += a * f[n] + b * f[n - 1] - c * f[n - 2];
    }
    s
}

/// `4 pi int_0^inf f(rho) sin(|lambda| rho)/(|lambda| rho) rho^2 d rho` on the grid.
pub fn radial_cf(density: &DensityGrid, lambda_norm: f64) -> f64 {
    let g: Vec<f64> = density
        .radii
        .iter()
        .zip(&density.values)
        .map(|(&r, &v)| v * sinc(lambda_norm * r) * r * r)
        .collect();
    4.0 * PI * simpson_uneven(&density.radii, &g)
}

/// Same transform for a density given as a function, by adaptive quadrature
/// over `breaks` and an exponentially decaying tail beyond the last break.
pub fn radial_transform<F: Fn(f64) -> f64>(f: F, lambda_norm: f64, breaks: &[f64], tail_scale: f64) -> Result<f64> {
    let g = |r: f64| f(r) * sinc(lambda_norm * r) * r * r;
    let q = Quadrature::new(1e-12).abs_tol(1e-15).max_panels(20_000);
    let body = q.integrate_with_breaks(g, breaks)?.value;
    let last = *breaks.last().ok_or_else(|| Error::domain("no breakpoints"))?;
    let tail = q.integrate(g, last, Upper::Infinite { scale: tail_scale })?.value;
    Ok(4.0 * PI * (body + tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::bessel_i;
    use crate::winding::{simulate_timechange, Geometry};
    use std::f64::consts::FRAC_PI_4;

    fn rk4<F: Fn(f64) -> f64>(f: F, y0: f64, t: f64, n: usize) -> f64 {
        let h = t / n as f64;
        let mut y = y0;
        for _ in 0..n {
            let k1 = f(y);
            let k2 = f(y + 0.5 * h * k1);
            let k3 = f(y + 0.5 * h * k2);
            let k4 = f(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        y
    }

    #[test]
    fn flat_exact_zero_frequency() {
        for (t, rho) in [(1.0, 1.0), (0.1, 2.0), (10.0, 0.5), (1e4, 1.0), (1e8, 1.0), (3.0, 7.0)] {
            let v = cf_flat_exact_norm(0.0, t, rho).unwrap();
            assert!((v - 1.0).abs() < 1e-8, "t={t} rho={rho}: {v}");
        }
    }

    #[test]
    fn flat_exact_reference_value() {
        // independent double-precision quadrature (scipy.integrate.quad with scipy.special.ive)
        let v = cf_flat_exact_norm(1.0, 1.0, 1.0).unwrap();
        assert!((v - 0.7341002686570476).abs() < 1e-9, "{v}");
    }

    #[test]
    fn flat_exact_decreasing_and_bounded() {
        for (t, rho) in [(1.0, 1.0), (5.0, 0.3), (0.2, 2.0)] {
            let vals: Vec<f64> = (0..12)
                .map(|k| cf_flat_exact_norm(0.4 * k as f64, t, rho).unwrap())
                .collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]));
            assert!(vals.iter().all(|v| *v <= 1.0 + 1e-12 && *v > 0.0));
        }
    }

    #[test]
    fn bessel_semigroup_mass_matches_simpson() {
        let f = |r: f64| bessel_i(1.0, r).unwrap().to_f64_scaled(-r * r / 2.0) * r * r;
        let q = Quadrature::new(1e-13)
            .integrate(f, 0.0, Upper::Infinite { scale: 3.0 })
            .unwrap()
            .value;
        let n = 40_000;
        let h = 40.0 / n as f64;
        let simpson: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * f(i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!((q * (-0.5f64).exp() - 1.0).abs() < 1e-8);
        assert!((simpson * (-0.5f64).exp() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn flat_log_scaling_targets() {
        // A_t ~ ln(t)/2: at sqrt(2)/sqrt(ln t) the limit is e^{-1/2}; at 2/sqrt(ln t) it is e^{-1}
        let mut prev = f64::INFINITY;
        for t in [1e4, 1e6, 1e8] {
            let v = cf_flat_exact_norm(flat_log_scale(t, 2f64.sqrt()).unwrap(), t, 1.0).unwrap();
            let gap = (v - (-0.5f64).exp()).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 0.05);
        let v = cf_flat_exact_norm(flat_log_scale(1e8, 2.0).unwrap(), 1e8, 1.0).unwrap();
        assert!((v - 0.36384).abs() < 1e-4, "{v}");
        assert!(flat_log_scale(1.0, 1.0).is_err());
    }

    #[test]
    fn flat_exact_matches_time_change() {
        let g = Geometry::flat(1.0).unwrap();
        let s = simulate_timechange(&g, 1.0, 40_000, &StepPolicy::uniform(1e-3), StreamKey::new(21)).unwrap();
        let lam = WindingVector::along_i(1.0);
        let mc = rao_blackwell_cf(&s, lam).unwrap();
        let exact = cf_flat_exact(lam, 1.0, 1.0).unwrap();
        assert!(
            (mc.value.re - exact.value.re).abs() < 3.0 * mc.stderr,
            "{mc:?} {exact:?}"
        );
    }

    #[test]
    fn flat_girsanov_agrees() {
        let lam = WindingVector::along_i(1.0);
        let policy = StepPolicy::uniform(1e-3);
        let g = cf_flat_girsanov(lam, 1.0, 1.0, 40_000, &policy, StreamKey::new(22)).unwrap();
        let exact = cf_flat_exact(lam, 1.0, 1.0).unwrap();
        assert!((g.value.re - exact.value.re).abs() < 3.0 * g.stderr, "{g:?} {exact:?}");
        let zero = cf_flat_girsanov(WindingVector::ZERO, 1.0, 1.0, 10, &policy, StreamKey::new(22)).unwrap();
        assert_eq!(zero.value.re, 1.0);
        assert_eq!(zero.stderr, 0.0);
    }

    #[test]
    fn flat_girsanov_matches_clock_estimator_at_t10() {
        let lam = WindingVector::new(0.0, 2.0, 0.0);
        let policy = StepPolicy::uniform(1e-2);
        let key = StreamKey::new(23);
        let g = cf_flat_girsanov(lam, 10.0, 1.0, 20_000, &policy, key).unwrap();
        let s = simulate_timechange(&Geometry::flat(1.0).unwrap(), 10.0, 20_000, &policy, key).unwrap();
        let d = rao_blackwell_cf(&s, lam).unwrap();
        assert!(
            (g.value.re - d.value.re).abs() < 3.0 * g.combined_stderr(&d),
            "{g:?} {d:?}"
        );
    }

    #[test]
    fn hp1_identity_matches_time_change() {
        let lam = WindingVector::along_i(1.0);
        let policy = StepPolicy::uniform(1e-3);
        let key = StreamKey::new(24);
        let g = cf_hp1_identity(lam, 1.0, FRAC_PI_4, 20_000, &policy, key).unwrap();
        let s = simulate_timechange(&Geometry::hp1(FRAC_PI_4).unwrap(), 1.0, 20_000, &policy, key).unwrap();
        let d = rao_blackwell_cf(&s, lam).unwrap();
        assert!(
            (g.value.re - d.value.re).abs() < 3.0 * g.combined_stderr(&d),
            "{g:?} {d:?}"
        );
        let zero = cf_hp1_identity(WindingVector::ZERO, 1.0, FRAC_PI_4, 10, &policy, key).unwrap();
        assert_eq!(zero.value.re, 1.0);
    }

    #[test]
    fn hp1_scalings() {
        let policy = StepPolicy::uniform(1e-2);
        let g = Geometry::hp1(FRAC_PI_4).unwrap();
        let lam = WindingVector::along_i(1.0);
        let short = simulate_timechange(&g, 10.0, 2_000, &policy, StreamKey::new(25)).unwrap();
        let long = simulate_timechange(&g, 40.0, 2_000, &policy, StreamKey::new(25)).unwrap();
        let e = cf_hp1_scaled(&long, lam, Hp1Scaling::SqrtT).unwrap();
        assert!((e.value.re - (-3.0f64).exp()).abs() < 0.01 + 3.0 * e.stderr, "{e:?}");
        assert_eq!(e.lambda, lam);
        // dividing by t sends the law to a point mass
        let a = cf_hp1_scaled(&short, lam, Hp1Scaling::T).unwrap().value.re;
        let b = cf_hp1_scaled(&long, lam, Hp1Scaling::T).unwrap().value.re;
        assert!(b > 0.9 && 1.0 - b < 1.0 - a, "{a} {b}");
        assert!(cf_hp1_scaled(&[], lam, Hp1Scaling::T).is_err());
    }

    #[test]
    fn hh1_limit_examples() {
        assert_eq!(cf_hh1_limit(WindingVector::ZERO, 0.7).unwrap().value.re, 1.0);
        let v = cf_hh1_limit(WindingVector::along_i(3f64.sqrt()), 1.0).unwrap().value.re;
        let want = 1f64.tanh() * (1.0 + 1.0 / (2.0 * 1f64.cosh().powi(2)));
        assert!((v - want).abs() < 1e-15);
        for l in [0.5, 1.0, 4.0, 100.0] {
            let v = cf_hh1_limit(WindingVector::along_i(l), 30.0).unwrap().value.re;
            assert!((v - 1.0).abs() < 1e-10);
        }
        assert!(cf_hh1_limit(WindingVector::ZERO, 0.0).is_err());
    }

    #[test]
    fn hh1_identity_zero_frequency() {
        let policy = StepPolicy::uniform(1e-2);
        let e = cf_hh1_identity(
            WindingVector::ZERO,
            3.0,
            1.0,
            10,
            &policy,
            StreamKey::new(25),
            Hh1Estimator::ControlVariate,
        )
        .unwrap();
        assert!((e.value.re - 1.0).abs() < 1e-12);
        // the plain estimator has the same mean; at t = 1 its variance is still moderate
        let p = cf_hh1_identity(
            WindingVector::ZERO,
            1.0,
            1.0,
            40_000,
            &StepPolicy::uniform(1e-3),
            StreamKey::new(25),
            Hh1Estimator::Plain,
        )
        .unwrap();
        assert!((p.value.re - 1.0).abs() < 3.0 * p.stderr, "{p:?}");
    }

    #[test]
    fn hh1_identity_estimators_agree_with_time_change() {
        let lam = WindingVector::along_i(1.0);
        let policy = StepPolicy::uniform(1e-3);
        let key = StreamKey::new(26);
        let s = simulate_timechange(&Geometry::hh1(1.0).unwrap(), 1.0, 20_000, &policy, key).unwrap();
        let d = rao_blackwell_cf(&s, lam).unwrap();
        for est in [Hh1Estimator::Plain, Hh1Estimator::ControlVariate] {
            let g = cf_hh1_identity(lam, 1.0, 1.0, 20_000, &policy, key, est).unwrap();
            assert!(
                (g.value.re - d.value.re).abs() < 3.0 * g.combined_stderr(&d),
                "{est:?} {g:?} {d:?}"
            );
        }
    }

    #[test]
    fn hh1_identity_approaches_limit() {
        let lam = WindingVector::along_i(1.0);
        let limit = cf_hh1_limit(lam, 1.0).unwrap().value.re;
        let gaps: Vec<f64> = [1.0, 3.0, 5.0]
            .iter()
            .map(|&t| {
                let e = cf_hh1_identity(
                    lam,
                    t,
                    1.0,
                    4_000,
                    &StepPolicy::uniform(2e-3),
                    StreamKey::new(27),
                    Hh1Estimator::ControlVariate,
                )
                .unwrap();
                (e.value.re - limit).abs()
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[2] < 0.02);
    }

    #[test]
    fn cosh2_moment_examples() {
        assert_eq!(cosh2_moment(1.5, 1.5, 1.0, 0.0).unwrap(), 1f64.cosh().powi(2));
        let v = cosh2_moment(1.5, 1.5, 1.0, 0.5).unwrap();
        let want = 0.5 + 4f64.exp() * (1f64.cosh().powi(2) - 0.5);
        assert!((v - want).abs() < 1e-12 * want);
        assert!(cosh2_moment(-0.5, -0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn cosh2_moment_solves_its_ode() {
        for (a, b, r0, t) in [
            (1.5, 1.5, 1.0f64, 0.5),
            (2.5, -1.5, 1.0, 0.5),
            (0.7, 0.2, 0.3, 1.3),
            (3.0, -3.5, 2.0, 2.0),
        ] {
            let k = 1.0 + a + b;
            let ode = rk4(|phi| 2.0 * k * phi - (1.0 + 2.0 * b), r0.cosh().powi(2), t, 20_000);
            let v = cosh2_moment(a, b, r0, t).unwrap();
            assert!(((v - ode) / v).abs() < 1e-10, "{a} {b}: {v} {ode}");
        }
    }

    #[test]
    fn relativistic_cauchy_identity() {
        for y in [0.5, 1.0, 2.0] {
            let breaks = [0.0, y, 2.0, 5.0, 10.0, 20.0, 40.0];
            let f = |r: f64| relativistic_cauchy_radial(r, y).unwrap();
            let mass = radial_transform(f, 0.0, &breaks, 1.0).unwrap();
            assert!((mass - 1.0).abs() < 1e-6, "y={y}: {mass}");
            for l in [0.5, 1.0, 2.0, 4.0] {
                let v = radial_transform(f, l, &breaks, 1.0).unwrap();
                let want = (-y * tilt_exponent(l)).exp();
                assert!((v - want).abs() < 1e-5, "y={y} l={l}: {v} {want}");
            }
        }
        // K_2 normalization at y = 1 through the radial reduction
        let k = |r: f64| {
            let s2 = r * r + 1.0;
            bessel_k(2.0, s2.sqrt()).unwrap().to_f64() / s2
        };
        let v = radial_transform(k, 0.0, &[0.0, 1.0, 5.0, 20.0], 1.0).unwrap();
        assert!((v - 2.0 * PI * PI * (-1f64).exp()).abs() < 1e-6);
        let a = relativistic_cauchy_density(WindingVector::new(0.3, -0.4, 1.2), 1.0).unwrap();
        let b = relativistic_cauchy_density(WindingVector::new(1.3, 0.0, 0.0), 1.0).unwrap();
        assert!((a - b).abs() < 1e-15 * a);
    }

    #[test]
    fn kernel_derivative_matches_finite_differences() {
        for u in [0.3, 0.5, 1.0, 2.0] {
            for rho in [0.0, 0.05, 0.5, 2.0, 7.0] {
                let d = 1e-5;
                let fd = (hh1_limit_kernel(rho, u + d).unwrap() - hh1_limit_kernel(rho, u - d).unwrap()) / (2.0 * d);
                let an = hh1_limit_kernel_du(rho, u).unwrap();
                assert!(((fd - an) / an).abs() < 1e-6, "u={u} rho={rho}: {fd} {an}");
            }
        }
    }

    #[test]
    fn limit_density_mass_and_transform() {
        for r0 in [0.5, 1.0, 2.0] {
            let grid = hh1_limit_density_grid(r0, 60.0, 20_001).unwrap();
            assert!((grid.total_mass() - 1.0).abs() < 1e-4, "r0={r0}: {}", grid.total_mass());
            for l in [0.5, 1.0, 2.0, 4.0] {
                let v = radial_cf(&grid, l);
                let want = cf_hh1_limit(WindingVector::along_i(l), r0).unwrap().value.re;
                assert!((v - want).abs() < 1e-4, "r0={r0} l={l}: {v} {want}");
            }
        }
    }

    #[test]
    fn grid_transform_of_gaussian() {
        let c = (2.0 * PI).powf(-1.5);
        let grid = DensityGrid::sample(|r| Ok(c * (-r * r / 2.0).exp()), 1.0, 14.0, 4001, 0.0).unwrap();
        assert!((grid.total_mass() - 1.0).abs() < 1e-8);
        for l in [0.5, 1.0, 2.0, 3.0] {
            assert!((radial_cf(&grid, l) - (-l * l / 2.0).exp()).abs() < 1e-8);
        }
        assert!(DensityGrid::new(vec![0.0, 1.0, 0.5], vec![1.0; 3], 1.0).is_err());
        assert!(DensityGrid::new(vec![0.0, 1.0, 2.0], vec![1.0, -1.0, 0.0], 1.0).is_err());
    }
}
