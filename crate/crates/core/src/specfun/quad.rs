//! Adaptive 7/15-point Gauss–Kronrod quadrature with global subdivision.

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for the odd Kronrod nodes 1, 3, 5 and the centre.
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Upper integration limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Upper {
    Finite(f64),
    /// `+inf`; `scale` is the length over which the integrand decays.
    Infinite {
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEstimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    // roundoff floor of `error`
    floor: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(c);
    let mut res_k = WGK[7] * fc;
    let mut res_g = WG[3] * fc;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * res_abs;
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(floor);
    }
    Panel {
        a,
        b,
        value,
        error: err,
        floor,
    }
}

/// Adaptive integrator. Panels are bisected in order of largest error
/// until the summed error meets `max(abs_tol, rel_tol * |I|)`, or the
/// roundoff floor when cancellation makes that unreachable.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Quadrature {
    pub fn new(rel_tol: f64) -> Self {
        Quadrature {
            rel_tol,
            abs_tol: 0.0,
            max_panels: 4000,
        }
    }

    pub fn abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn max_panels(mut self, n: usize) -> Self {
        self.max_panels = n;
        self
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, upper: Upper) -> Result<QuadEstimate> {
        match upper {
            Upper::Finite(b) => self.run(&f, &[a, b]),
            Upper::Infinite { scale } => {
                if !(scale > 0.0) {
                    return Err(Error::domain("decay scale must be positive"));
                }
                // r = a + scale * s / (1 - s), s in [0, 1)
                let g = |s: f64| {
                    let one_minus = 1.0 - s;
                    let r = a + scale * s / one_minus;
                    let v = f(r);
                    if v == 0.0 {
                        0.0
                    } else {
                        v * scale / (one_minus * one_minus)
                    }
                };
                self.run(&g, &[0.0, 1.0])
            }
        }
    }

    /// Integrate over `[points[0], points[last]]`, starting from the given breakpoints.
    pub fn integrate_with_breaks<F: Fn(f64) -> f64>(&self, f: F, points: &[f64]) -> Result<QuadEstimate> {
        self.run(&f, points)
    }

    fn run<F: Fn(f64) -> f64>(&self, f: &F, points: &[f64]) -> Result<QuadEstimate> {
        if points.len() < 2 || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain("integration limits must be finite"));
        }
        let mut panels: Vec<Panel> = points
            .windows(2)
            .filter(|w| w[1] != w[0])
            .map(|w| gk15(f, w[0], w[1]))
            .collect();
        if panels.is_empty() {
            return Ok(QuadEstimate { value: 0.0, error: 0.0 });
        }
        loop {
            let value: f64 = panels.iter().map(|p| p.value).sum();
            let error: f64 = panels.iter().map(|p| p.error).sum();
            if !value.is_finite() {
                return Err(Error::Accuracy {
                    estimate: value,
                    error_bound: f64::INFINITY,
                });
            }
            let floor: f64 = panels.iter().map(|p| p.floor).sum();
            // cancellation can put rel_tol * |I| below what rounding allows
            let target = self.abs_tol.max(self.rel_tol * value.abs()).max(2.0 * floor);
            if error <= target {
                return Ok(QuadEstimate { value, error });
            }
            let (idx, worst) = panels
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
                .map(|(i, p)| (i, *p))
                .expect("non-empty");
            let mid = 0.5 * (worst.a + worst.b);
            let too_narrow = (worst.b - worst.a).abs()
                <= 1e3 * f64::EPSILON * worst.a.abs().max(worst.b.abs()).max(f64::MIN_POSITIVE);
            if panels.len() >= self.max_panels || too_narrow {
                return Err(Error::Accuracy {
                    estimate: value,
                    error_bound: error,
                });
            }
            panels[idx] = gk15(f, worst.a, mid);
            panels.push(gk15(f, mid, worst.b));
        }
    }
}

/// Convenience wrapper returning only the value.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, upper: Upper, rel_tol: f64) -> Result<f64> {
    Quadrature::new(rel_tol).integrate(f, a, upper).map(|e| e.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Romberg table on a finite interval, used as the independent reference.
    fn romberg<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, levels: usize) -> f64 {
        let mut r = vec![vec![0.0; levels]; levels];
        let mut h = b - a;
        r[0][0] = 0.5 * h * (f(a) + f(b));
        for i in 1..levels {
            h *= 0.5;
            let n = 1usize << (i - 1);
            let s: f64 = (0..n).map(|k| f(a + (2 * k + 1) as f64 * h)).sum();
            r[i][0] = 0.5 * r[i - 1][0] + h * s;
            let mut p = 4.0;
            for j in 1..=i {
                r[i][j] = r[i][j - 1] + (r[i][j - 1] - r[i - 1][j - 1]) / (p - 1.0);
                p *= 4.0;
            }
        }
        r[levels - 1][levels - 1]
    }

    #[test]
    fn gaussian_moment_on_half_line() {
        let v = integrate(
            |r| (-r * r / 2.0).exp() * r * r,
            0.0,
            Upper::Infinite { scale: 1.0 },
            1e-12,
        )
        .unwrap();
        assert!((v - (PI / 2.0).sqrt()).abs() < 1e-10, "{v}");
    }

    #[test]
    fn sine_over_half_period() {
        let v = integrate(f64::sin, 0.0, Upper::Finite(PI), 1e-13).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_romberg_reference() {
        let f = |x: f64| (x.cos() * 3.0).exp() / (1.0 + x * x);
        let reference = romberg(f, 0.0, 4.0, 18);
        let v = integrate(f, 0.0, Upper::Finite(4.0), 1e-11).unwrap();
        assert!(((v - reference) / reference).abs() < 1e-11, "{v} {reference}");
    }

    #[test]
    fn budget_exhaustion_reports_best_estimate() {
        let q = Quadrature::new(1e-14).max_panels(3);
        let err = q
            .integrate(|x: f64| (1.0 / x).sin(), 1e-4, Upper::Finite(1.0))
            .unwrap_err();
        match err {
            Error::Accuracy { estimate, error_bound } => assert!(estimate.is_finite() && error_bound > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_integral_with_absolute_floor() {
        let q = Quadrature::new(1e-10).abs_tol(1e-13);
        let v = q.integrate(|x: f64| x.sin(), -1.0, Upper::Finite(1.0)).unwrap();
        assert!(v.value.abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn integration_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, w1 in 0.1f64..3.0, w2 in 0.1f64..3.0) {
            let f = move |x: f64| (w1 * x).cos() * (-x * x).exp();
            let g = move |x: f64| 1.0 / (1.0 + w2 * x * x);
            let tol = 1e-12;
            let lhs = integrate(|x| a * f(x) + b * g(x), -3.0, Upper::Finite(3.0), tol).unwrap();
            let fi = integrate(f, -3.0, Upper::Finite(3.0), tol).unwrap();
            let gi = integrate(g, -3.0, Upper::Finite(3.0), tol).unwrap();
            let rhs = a * fi + b * gi;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }
}
