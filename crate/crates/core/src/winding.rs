//! Monte Carlo samples of the winding `zeta(t)` on the three geometries.
//!
//! Two independent routes:
//!
//! * time change: simulate the radial diffusion and its clock `A_t`, then
//!   `zeta = sqrt(A_t) g` with `g` standard Gaussian in R^3;
//! * direct: integrate the ambient process in inhomogeneous coordinates and
//!   accumulate the winding as a midpoint-rule Stratonovich sum.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::{chord_winding, NeumaierVec, Quaternion, WindingVector, MIDPOINT_DEGENERACY};
use crate::radial::{
    bessel4_exact_end, radial_implicit_end, walk, ClockKind, Dynamics, FreeWalk, RadialSpec, StepPolicy,
};
use crate::rng::{map_paths, substreams, GaussianSource, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    /// Flat quaternionic space.
    Flat,
    /// Quaternionic projective line.
    Hp1,
    /// Quaternionic hyperbolic space.
    Hh1,
}

impl std::fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GeometryKind::Flat => "flat",
            GeometryKind::Hp1 => "hp1",
            GeometryKind::Hh1 => "hh1",
        })
    }
}

impl std::str::FromStr for GeometryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(GeometryKind::Flat),
            "hp1" => Ok(GeometryKind::Hp1),
            "hh1" => Ok(GeometryKind::Hh1),
            other => Err(Error::Config(format!("unknown geometry {other:?} (flat, hp1, hh1)"))),
        }
    }
}

/// A geometry with the radial coordinate of the starting point
/// (`|W_0|` on the flat space, `r(0)` on the curved ones).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    kind: GeometryKind,
    start_radius: f64,
}

impl Geometry {
    pub fn new(kind: GeometryKind, start_radius: f64) -> Result<Self> {
        if !(start_radius > 0.0) || !start_radius.is_finite() {
            return Err(Error::domain(format!("start radius {start_radius} must be positive")));
        }
        if kind == GeometryKind::Hp1 && start_radius >= FRAC_PI_2 {
            return Err(Error::domain(format!("start radius {start_radius} must be below pi/2")));
        }
        Ok(Geometry { kind, start_radius })
    }

    pub fn flat(rho: f64) -> Result<Self> {
        Self::new(GeometryKind::Flat, rho)
    }

    pub fn hp1(r0: f64) -> Result<Self> {
        Self::new(GeometryKind::Hp1, r0)
    }

    pub fn hh1(r0: f64) -> Result<Self> {
        Self::new(GeometryKind::Hh1, r0)
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn start_radius(&self) -> f64 {
        self.start_radius
    }

    /// Radial diffusion of the skew product.
    pub fn radial_spec(&self) -> RadialSpec {
        let r = self.start_radius;
        match self.kind {
            GeometryKind::Flat => RadialSpec::bessel(4.0, r),
            GeometryKind::Hp1 => RadialSpec::jacobi_trig(3.0, r),
            GeometryKind::Hh1 => RadialSpec::jacobi_hyp(1.5, 1.5, r),
        }
        .expect("validated at construction")
    }

    pub fn clock_kind(&self) -> ClockKind {
        match self.kind {
            GeometryKind::Flat => ClockKind::InvRSquared,
            GeometryKind::Hp1 => ClockKind::FourOverSinSq2r,
            GeometryKind::Hh1 => ClockKind::FourOverSinhSq2r,
        }
    }

    /// Norm of the starting point in the ambient (inhomogeneous) coordinate.
    pub fn start_norm(&self) -> f64 {
        let r = self.start_radius;
        match self.kind {
            GeometryKind::Flat => r,
            GeometryKind::Hp1 => r.tan(),
            GeometryKind::Hh1 => r.tanh(),
        }
    }
}

/// One Monte Carlo draw of `zeta(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindingSample {
    pub zeta: WindingVector,
    /// `A_t`, present only for the time-change route.
    pub clock: Option<f64>,
    pub horizon: f64,
}

/// Time-change sample on a precomputed grid, drawing from `src`.
pub fn timechange_path<S: GaussianSource>(
    geom: &Geometry,
    times: &[f64],
    policy: &StepPolicy,
    src: &mut S,
) -> Result<WindingSample> {
    let end = match geom.kind {
        GeometryKind::Flat => bessel4_exact_end(geom.start_radius, times, policy.refinement, src)?,
        _ => radial_implicit_end(
            &geom.radial_spec(),
            times,
            policy.refinement,
            Some(geom.clock_kind()),
            src,
        )?,
    };
    let g = WindingVector::new(src.normal(), src.normal(), src.normal());
    Ok(WindingSample {
        zeta: g * end.clock.sqrt(),
        clock: Some(end.clock),
        horizon: *times.last().expect("non-empty grid"),
    })
}

/// Time-change samples, path `i` on stream `i` of the time-change substream of `key`.
pub fn simulate_timechange(
    geom: &Geometry,
    t: f64,
    n_paths: usize,
    policy: &StepPolicy,
    key: StreamKey,
) -> Result<Vec<WindingSample>> {
    let times = policy.times(t)?;
    let key = key.substream(substreams::TIMECHANGE);
    map_paths(key, n_paths, |_, rng| timechange_path(geom, &times, policy, rng))
}

/// `dw = (1 + |w|^2)(dW - 2 w dt)`, the projective chart.
struct ProjectiveWalk;

impl Dynamics for ProjectiveWalk {
    type State = Quaternion;
    type Noise = Quaternion;

    fn draw<S: GaussianSource>(&self, src: &mut S) -> Quaternion {
        src.quaternion()
    }

    fn step(&self, w: Quaternion, dw: Quaternion, h: f64) -> std::result::Result<Quaternion, &'static str> {
        let next = w + (dw - w * (2.0 * h)) * (1.0 + w.norm_sqr());
        let n = next.norm_sqr();
        if n > 0.0 && n.is_finite() {
            Ok(next)
        } else {
            Err("left the chart; reduce the step")
        }
    }

    fn distance(&self, w: Quaternion) -> f64 {
        let r = w.norm().atan();
        r.min(FRAC_PI_2 - r)
    }

    fn scalar(&self, w: Quaternion) -> f64 {
        w.norm().atan()
    }
}

/// Ball chart state: the point and `eps = 1 - |w|^2`, tracked multiplicatively.
#[derive(Debug, Clone, Copy)]
struct BallPoint {
    w: Quaternion,
    eps: f64,
}

/// `dw = (1 - |w|^2)(dW + 2 w dt)`, the ball chart.
struct HyperbolicWalk;

impl HyperbolicWalk {
    /// Increment `D = dW + 2 w h` so that `w' = w + eps D`.
    fn drive(p: BallPoint, dw: Quaternion, h: f64) -> Quaternion {
        dw + p.w * (2.0 * h)
    }
}

impl Dynamics for HyperbolicWalk {
    type State = BallPoint;
    type Noise = Quaternion;

    fn draw<S: GaussianSource>(&self, src: &mut S) -> Quaternion {
        src.quaternion()
    }

    fn step(&self, p: BallPoint, dw: Quaternion, h: f64) -> std::result::Result<BallPoint, &'static str> {
        let d = Self::drive(p, dw, h);
        // 1 - |w + eps D|^2 = eps (1 - 2 Re(w* D) - eps |D|^2)
        let factor = 1.0 - 2.0 * p.w.dot(d) - p.eps * d.norm_sqr();
        if !(factor > 0.0) {
            return Err("left the unit ball; reduce the step");
        }
        let w = p.w + d * p.eps;
        if !(w.norm_sqr() > 0.0) {
            return Err("hit the origin");
        }
        Ok(BallPoint { w, eps: p.eps * factor })
    }

    fn distance(&self, p: BallPoint) -> f64 {
        p.w.norm().atanh()
    }

    fn scalar(&self, p: BallPoint) -> f64 {
        // artanh|w| = ln((1 + |w|)^2 / eps) / 2 stays finite as eps -> 0
        let n = p.w.norm();
        0.5 * ((1.0 + n) * (1.0 + n) / p.eps).ln()
    }
}

fn midpoint_check(a: Quaternion, b: Quaternion, m: Quaternion, step: usize) -> Result<()> {
    if m.norm() < MIDPOINT_DEGENERACY * a.norm().max(b.norm()) {
        return Err(Error::PathThroughOrigin { step });
    }
    Ok(())
}

/// Direct-route sample from a given ambient start point.
///
/// `start` must have norm [`Geometry::start_norm`]; rotating `start` and every
/// noise increment by the same unit quaternion leaves `zeta` unchanged.
pub fn direct_path_from<S: GaussianSource>(
    geom: &Geometry,
    start: Quaternion,
    times: &[f64],
    policy: &StepPolicy,
    src: &mut S,
) -> Result<WindingSample> {
    let want = geom.start_norm();
    if (start.norm() - want).abs() > 1e-12 * want.max(1.0) {
        return Err(Error::domain(format!(
            "start point has norm {}, geometry expects {want}",
            start.norm()
        )));
    }
    let mut acc = NeumaierVec::default();
    let mut step = 0usize;
    let refinement = policy.refinement;
    match geom.kind {
        GeometryKind::Flat => {
            walk(
                &FreeWalk,
                start,
                times,
                refinement,
                src,
                |a, b, _, _| {
                    acc.add(chord_winding(a, b, step)?);
                    step += 1;
                    Ok(())
                },
                |_, _| {},
            )?;
        }
        GeometryKind::Hp1 => {
            walk(
                &ProjectiveWalk,
                start,
                times,
                refinement,
                src,
                |a, b, dw, _| {
                    let m = (a + b) * 0.5;
                    midpoint_check(a, b, m, step)?;
                    // Im(m* dW) / sin^2 r, sin^2 r = |m|^2 / (1 + |m|^2)
                    let n = m.norm_sqr();
                    acc.add((m.conj() * dw).imag() * ((1.0 + n) / n));
                    step += 1;
                    Ok(())
                },
                |_, _| {},
            )?;
        }
        GeometryKind::Hh1 => {
            let p0 = BallPoint {
                w: start,
                eps: 1.0 - start.norm_sqr(),
            };
            walk(
                &HyperbolicWalk,
                p0,
                times,
                refinement,
                src,
                |a, b, dw, h| {
                    let d = HyperbolicWalk::drive(a, dw, h);
                    let m = a.w + d * (0.5 * a.eps);
                    midpoint_check(a.w, b.w, m, step)?;
                    // 1 - |m|^2 without cancellation
                    let eps_mid = a.eps * (1.0 - a.w.dot(d) - 0.25 * a.eps * d.norm_sqr());
                    // Im(m* dW) / sinh^2 r, sinh^2 r = |m|^2 / (1 - |m|^2)
                    acc.add((m.conj() * dw).imag() * (eps_mid / m.norm_sqr()));
                    step += 1;
                    Ok(())
                },
                |_, _| {},
            )?;
        }
    }
    Ok(WindingSample {
        zeta: acc.sum(),
        clock: None,
        horizon: *times.last().expect("non-empty grid"),
    })
}

/// Direct-route sample started on the positive real axis.
pub fn direct_path<S: GaussianSource>(
    geom: &Geometry,
    times: &[f64],
    policy: &StepPolicy,
    src: &mut S,
) -> Result<WindingSample> {
    direct_path_from(geom, Quaternion::real(geom.start_norm()), times, policy, src)
}

/// Direct-route samples, path `i` on stream `i` of the direct substream of `key`.
pub fn simulate_direct(
    geom: &Geometry,
    t: f64,
    policy: &StepPolicy,
    n_paths: usize,
    key: StreamKey,
) -> Result<Vec<WindingSample>> {
    let times = policy.times(t)?;
    let key = key.substream(substreams::DIRECT);
    map_paths(key, n_paths, |_, rng| direct_path(geom, &times, policy, rng))
}
