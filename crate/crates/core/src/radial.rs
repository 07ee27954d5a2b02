//! Radial diffusions (Bessel, trigonometric and hyperbolic Jacobi) and their
//! clock functionals `A_t`.
//!
//! Singular drifts are integrated with the drift-implicit Euler scheme
//!
//! ```text
//! r_{n+1} = r_n + h b(r_{n+1}) + dW
//! ```
//!
//! whose solution lies inside the state domain whenever the drift repels
//! every boundary. Near a boundary the step can additionally be split by
//! Brownian-bridge refinement, which keeps the driving noise exact in law.

use std::cell::Cell;
use std::f64::consts::FRAC_PI_2;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::Quaternion;
use crate::rng::GaussianSource;

/// Relative tolerance of the implicit-step root finder.
pub const ROOT_TOL: f64 = 1e-12;
/// Iteration cap of the implicit-step root finder.
pub const ROOT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialKind {
    /// Drift `(dimension - 1) / (2r)` on `(0, inf)`.
    Bessel { dimension: f64 },
    /// Drift `c cot(2r)` on `(0, pi/2)`.
    JacobiTrig { c: f64 },
    /// Drift `alpha coth(r) + beta tanh(r)` on `(0, inf)`.
    JacobiHyp { alpha: f64, beta: f64 },
}

/// A validated radial diffusion with its starting point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSpec {
    kind: RadialKind,
    r0: f64,
}

impl RadialSpec {
    /// Rejects parameter sets for which a boundary is attainable.
    pub fn new(kind: RadialKind, r0: f64) -> Result<Self> {
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(Error::domain(format!("start {r0} must be positive and finite")));
        }
        match kind {
            RadialKind::Bessel { dimension } => {
                if !(dimension >= 2.0) || !dimension.is_finite() {
                    return Err(Error::domain(format!(
                        "Bessel dimension {dimension} < 2 makes 0 attainable"
                    )));
                }
            }
            RadialKind::JacobiTrig { c } => {
                // c cot(2r) ~ (c/2)/r at 0 and -(c/2)/(pi/2 - r) at pi/2
                if !(c >= 1.0) || !c.is_finite() {
                    return Err(Error::domain(format!(
                        "trigonometric Jacobi coefficient {c} < 1 makes a boundary attainable"
                    )));
                }
                if r0 >= FRAC_PI_2 {
                    return Err(Error::domain(format!("start {r0} must be below pi/2")));
                }
            }
            RadialKind::JacobiHyp { alpha, beta } => {
                if !(alpha >= 0.5) || !alpha.is_finite() || !beta.is_finite() {
                    return Err(Error::domain(format!(
                        "hyperbolic Jacobi alpha {alpha} < 1/2 makes 0 attainable"
                    )));
                }
            }
        }
        Ok(RadialSpec { kind, r0 })
    }

    pub fn bessel(dimension: f64, r0: f64) -> Result<Self> {
        Self::new(RadialKind::Bessel { dimension }, r0)
    }

    pub fn jacobi_trig(c: f64, r0: f64) -> Result<Self> {
        Self::new(RadialKind::JacobiTrig { c }, r0)
    }

    pub fn jacobi_hyp(alpha: f64, beta: f64, r0: f64) -> Result<Self> {
        Self::new(RadialKind::JacobiHyp { alpha, beta }, r0)
    }

    pub fn kind(&self) -> RadialKind {
        self.kind
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn drift(&self, r: f64) -> f64 {
        match self.kind {
            RadialKind::Bessel { dimension } => 0.5 * (dimension - 1.0) / r,
            RadialKind::JacobiTrig { c } => c / (2.0 * r).tan(),
            RadialKind::JacobiHyp { alpha, beta } => alpha / r.tanh() + beta * r.tanh(),
        }
    }

    fn drift_derivative(&self, r: f64) -> f64 {
        match self.kind {
            RadialKind::Bessel { dimension } => -0.5 * (dimension - 1.0) / (r * r),
            RadialKind::JacobiTrig { c } => {
                let s = (2.0 * r).sin();
                -2.0 * c / (s * s)
            }
            RadialKind::JacobiHyp { alpha, beta } => {
                let s = r.sinh();
                let ch = r.cosh();
                -alpha / (s * s) + beta / (ch * ch)
            }
        }
    }

    /// Distance to the nearest singular boundary.
    pub fn boundary_distance(&self, r: f64) -> f64 {
        match self.kind {
            RadialKind::JacobiTrig { .. } => r.min(FRAC_PI_2 - r),
            _ => r,
        }
    }

    /// Largest step for which the implicit equation stays monotone.
    fn max_step(&self) -> f64 {
        match self.kind {
            RadialKind::JacobiHyp { beta, .. } if beta > 0.0 => 1.0 / beta,
            _ => f64::INFINITY,
        }
    }

    /// Solves `x - h b(x) = y` for the unique root inside the domain.
    pub fn implicit_step(&self, y: f64, h: f64) -> std::result::Result<f64, &'static str> {
        if let RadialKind::Bessel { dimension } = self.kind {
            // x^2 - y x - h (dimension - 1)/2 = 0, positive root without cancellation
            let c = h * (dimension - 1.0);
            let s = (y * y + 2.0 * c).sqrt();
            let x = if y >= 0.0 { 0.5 * (y + s) } else { c / (s - y) };
            return if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err("implicit Bessel root left the domain")
            };
        }
        let g = |x: f64| x - h * self.drift(x) - y;
        let mut lo = 0.0f64;
        let mut hi = match self.kind {
            RadialKind::JacobiTrig { .. } => FRAC_PI_2,
            _ => {
                let mut b = y.max(0.0) + 1.0;
                let mut k = 0;
                while g(b) <= 0.0 {
                    b *= 2.0;
                    k += 1;
                    if k > 1100 {
                        return Err("could not bracket the implicit root");
                    }
                }
                b
            }
        };
        let mut x = y + h * self.drift(y.clamp(1e-300, hi));
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        for _ in 0..ROOT_MAX_ITER {
            let gx = g(x);
            if gx == 0.0 {
                return Ok(x);
            }
            if gx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x - gx / (1.0 - h * self.drift_derivative(x));
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let tol = ROOT_TOL * self.boundary_distance(next).min(1.0);
            if (next - x).abs() <= tol || hi - lo <= tol {
                return if next > 0.0 && self.boundary_distance(next) > 0.0 {
                    Ok(next)
                } else {
                    Err("implicit root collapsed onto the boundary")
                };
            }
            x = next;
        }
        Err("implicit root finder did not converge")
    }
}

/// Weight whose time integral along the radial path is the clock `A_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    /// `1 / r^2`
    InvRSquared,
    /// `4 / sin^2(2r)`
    FourOverSinSq2r,
    /// `4 / sinh^2(2r)`
    FourOverSinhSq2r,
}

impl ClockKind {
    pub fn weight(self, r: f64) -> f64 {
        match self {
            ClockKind::InvRSquared => 1.0 / (r * r),
            ClockKind::FourOverSinSq2r => {
                let s = (2.0 * r).sin();
                4.0 / (s * s)
            }
            ClockKind::FourOverSinhSq2r => {
                let s = (2.0 * r).sinh();
                4.0 / (s * s)
            }
        }
    }
}

/// Time grid of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum TimeGrid {
    /// Equal steps no longer than `step`.
    Uniform { step: f64 },
    /// Cells `[t ratio^(k+1), t ratio^k]` for `k < cells`, then `[0, t ratio^cells]`,
    /// each split into `substeps` equal steps.
    Geometric { ratio: f64, cells: usize, substeps: usize },
}

impl TimeGrid {
    /// Grid times, starting at 0 and ending exactly at `t`.
    pub fn times(&self, t: f64) -> Result<Vec<f64>> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::domain(format!("horizon {t} must be positive and finite")));
        }
        match *self {
            TimeGrid::Uniform { step } => {
                if !(step > 0.0) {
                    return Err(Error::domain(format!("step {step} must be positive")));
                }
                let n = ((t / step) - 1e-9).ceil().max(1.0);
                if n > 1e9 {
                    return Err(Error::domain("too many steps"));
                }
                let n = n as usize;
                Ok((0..=n)
                    .map(|k| if k == n { t } else { k as f64 * t / n as f64 })
                    .collect())
            }
            TimeGrid::Geometric { ratio, cells, substeps } => {
                if !(ratio > 0.0 && ratio < 1.0) || substeps == 0 {
                    return Err(Error::domain("geometric grid needs 0 < ratio < 1 and substeps >= 1"));
                }
                let mut edges = vec![0.0];
                edges.extend((0..=cells).rev().map(|k| t * ratio.powi(k as i32)));
                let mut out = vec![0.0];
                for w in edges.windows(2) {
                    for j in 1..=substeps {
                        let v = if j == substeps {
                            w[1]
                        } else {
                            w[0] + (w[1] - w[0]) * j as f64 / substeps as f64
                        };
                        if v > *out.last().expect("non-empty") {
                            out.push(v);
                        }
                    }
                }
                *out.last_mut().expect("non-empty") = t;
                Ok(out)
            }
        }
    }
}

/// Adaptive Brownian-bridge splitting near singular boundaries.
///
/// A step of length `h` starting or ending at distance `d` from a boundary is
/// halved while `h > (kappa d)^2`, at most `max_depth` times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Refinement {
    pub kappa: f64,
    pub max_depth: u32,
}

impl Default for Refinement {
    fn default() -> Self {
        Refinement {
            kappa: 0.25,
            max_depth: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct StepPolicy {
    pub grid: TimeGrid,
    /// Absent means the default refinement; `null` disables it.
    #[serde(default = "default_refinement")]
    pub refinement: Option<Refinement>,
}

fn default_refinement() -> Option<Refinement> {
    Some(Refinement::default())
}

impl StepPolicy {
    pub fn uniform(step: f64) -> Self {
        StepPolicy {
            grid: TimeGrid::Uniform { step },
            refinement: Some(Refinement::default()),
        }
    }

    pub fn without_refinement(mut self) -> Self {
        self.refinement = None;
        self
    }

    /// Step 1e-3 up to t = 10, 1e-2 up to t = 100, geometric cells beyond.
    pub fn default_for(t: f64) -> Self {
        if t <= 10.0 {
            Self::uniform(1e-3)
        } else if t <= 100.0 {
            Self::uniform(1e-2)
        } else {
            let cells = (t.log2() + 4.0).ceil().max(1.0) as usize;
            StepPolicy {
                grid: TimeGrid::Geometric {
                    ratio: 0.5,
                    cells,
                    substeps: 64,
                },
                refinement: Some(Refinement::default()),
            }
        }
    }

    pub fn times(&self, t: f64) -> Result<Vec<f64>> {
        self.grid.times(t)
    }
}

/// Radial values and accumulated clock at the grid times.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub clock: Vec<f64>,
}

/// Terminal radial value and clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialEnd {
    pub value: f64,
    pub clock: f64,
}

/// Noise increments that can be split by a Brownian bridge.
pub(crate) trait Increment: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl Increment for f64 {}
impl Increment for Quaternion {}

/// One-step dynamics driven by Gaussian increments.
pub(crate) trait Dynamics {
    type State: Copy;
    type Noise: Increment;

    /// A standard (unit-variance) draw of the noise.
    fn draw<S: GaussianSource>(&self, src: &mut S) -> Self::Noise;
    fn step(&self, s: Self::State, dw: Self::Noise, h: f64) -> std::result::Result<Self::State, &'static str>;
    /// Distance to the nearest singularity, used by refinement.
    fn distance(&self, s: Self::State) -> f64;
    /// Scalar summary reported in step failures.
    fn scalar(&self, s: Self::State) -> f64;
}

/// Runs `dynamics` over `times`, calling `leaf` on every accepted sub-step and
/// `at_grid` at every grid time (including time 0).
pub(crate) fn walk<D, S, L, G>(
    dynamics: &D,
    start: D::State,
    times: &[f64],
    refinement: Option<Refinement>,
    src: &mut S,
    mut leaf: L,
    mut at_grid: G,
) -> Result<D::State>
where
    D: Dynamics,
    S: GaussianSource,
    L: FnMut(D::State, D::State, D::Noise, f64) -> Result<()>,
    G: FnMut(usize, D::State),
{
    if times.is_empty() || times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("time grid must start at 0 and increase strictly"));
    }
    let mut state = start;
    at_grid(0, state);
    for (i, w) in times.windows(2).enumerate() {
        let h = w[1] - w[0];
        let dw = dynamics.draw(src) * h.sqrt();
        state = refine(dynamics, state, dw, h, 0, i, refinement, src, &mut leaf)?;
        at_grid(i + 1, state);
    }
    Ok(state)
}

#[allow(clippy::too_many_arguments)]
fn refine<D, S, L>(
    dynamics: &D,
    state: D::State,
    dw: D::Noise,
    h: f64,
    depth: u32,
    index: usize,
    refinement: Option<Refinement>,
    src: &mut S,
    leaf: &mut L,
) -> Result<D::State>
where
    D: Dynamics,
    S: GaussianSource,
    L: FnMut(D::State, D::State, D::Noise, f64) -> Result<()>,
{
    let fail = |reason: &str| Error::StepFailure {
        step: index,
        state: dynamics.scalar(state),
        reason: reason.to_string(),
    };
    let end = dynamics.step(state, dw, h);
    if let Some(rf) = refinement {
        if depth < rf.max_depth {
            let d = match end {
                Ok(e) => dynamics.distance(state).min(dynamics.distance(e)),
                Err(_) => 0.0,
            };
            let scale = rf.kappa * d;
            if h > scale * scale {
                let first = dw * 0.5 + dynamics.draw(src) * (0.5 * h.sqrt());
                let mid = refine(dynamics, state, first, 0.5 * h, depth + 1, index, refinement, src, leaf)?;
                return refine(
                    dynamics,
                    mid,
                    dw - first,
                    0.5 * h,
                    depth + 1,
                    index,
                    refinement,
                    src,
                    leaf,
                );
            }
        }
    }
    let end = end.map_err(fail)?;
    leaf(state, end, dw, h)?;
    Ok(end)
}

/// Four-dimensional Brownian motion.
pub(crate) struct FreeWalk;

impl Dynamics for FreeWalk {
    type State = Quaternion;
    type Noise = Quaternion;

    fn draw<S: GaussianSource>(&self, src: &mut S) -> Quaternion {
        src.quaternion()
    }

    fn step(&self, s: Quaternion, dw: Quaternion, _h: f64) -> std::result::Result<Quaternion, &'static str> {
        Ok(s + dw)
    }

    fn distance(&self, s: Quaternion) -> f64 {
        s.norm()
    }

    fn scalar(&self, s: Quaternion) -> f64 {
        s.norm()
    }
}

struct Implicit<'a>(&'a RadialSpec);

impl Dynamics for Implicit<'_> {
    type State = f64;
    type Noise = f64;

    fn draw<S: GaussianSource>(&self, src: &mut S) -> f64 {
        src.normal()
    }

    fn step(&self, r: f64, dw: f64, h: f64) -> std::result::Result<f64, &'static str> {
        self.0.implicit_step(r + dw, h)
    }

    fn distance(&self, r: f64) -> f64 {
        self.0.boundary_distance(r)
    }

    fn scalar(&self, r: f64) -> f64 {
        r
    }
}

fn check_start(r0: f64) -> Result<()> {
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(Error::domain(format!("start {r0} must be positive and finite")));
    }
    Ok(())
}

/// `|r0 + B|` for a 4-dimensional Brownian motion `B`: exact in law at grid
/// times. The clock integrates `1/R^2` by the trapezoid rule on sub-steps.
pub fn simulate_bessel4_exact<S: GaussianSource>(
    r0: f64,
    times: &[f64],
    refinement: Option<Refinement>,
    src: &mut S,
) -> Result<RadialPath> {
    check_start(r0)?;
    let mut values = vec![0.0; times.len()];
    let mut clock = vec![0.0; times.len()];
    let acc = Cell::new(0.0);
    walk(
        &FreeWalk,
        Quaternion::real(r0),
        times,
        refinement,
        src,
        |a, b, _, h| {
            acc.set(acc.get() + 0.5 * h * (1.0 / a.norm_sqr() + 1.0 / b.norm_sqr()));
            Ok(())
        },
        |i, q| {
            values[i] = q.norm();
            clock[i] = acc.get();
        },
    )?;
    Ok(RadialPath {
        times: times.to_vec(),
        values,
        clock,
    })
}

/// Terminal value of [`simulate_bessel4_exact`] without storing the path.
pub fn bessel4_exact_end<S: GaussianSource>(
    r0: f64,
    times: &[f64],
    refinement: Option<Refinement>,
    src: &mut S,
) -> Result<RadialEnd> {
    check_start(r0)?;
    let mut acc = 0.0;
    let q = walk(
        &FreeWalk,
        Quaternion::real(r0),
        times,
        refinement,
        src,
        |a, b, _, h| {
            acc += 0.5 * h * (1.0 / a.norm_sqr() + 1.0 / b.norm_sqr());
            Ok(())
        },
        |_, _| {},
    )?;
    Ok(RadialEnd {
        value: q.norm(),
        clock: acc,
    })
}

fn check_step(spec: &RadialSpec, times: &[f64]) -> Result<()> {
    let hmax = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if hmax >= spec.max_step() {
        return Err(Error::domain(format!(
            "step {hmax} too large: the implicit equation needs h * beta < 1"
        )));
    }
    Ok(())
}

/// Drift-implicit Euler path with an optional clock (zero when `clock` is `None`).
pub fn simulate_radial_implicit<S: GaussianSource>(
    spec: &RadialSpec,
    t: f64,
    policy: &StepPolicy,
    clock: Option<ClockKind>,
    src: &mut S,
) -> Result<RadialPath> {
    let times = policy.times(t)?;
    check_step(spec, &times)?;
    let mut values = vec![0.0; times.len()];
    let mut clocks = vec![0.0; times.len()];
    let acc = Cell::new(0.0);
    walk(
        &Implicit(spec),
        spec.r0,
        &times,
        policy.refinement,
        src,
        |a, b, _, h| {
            if let Some(k) = clock {
                acc.set(acc.get() + 0.5 * h * (k.weight(a) + k.weight(b)));
            }
            Ok(())
        },
        |i, r| {
            values[i] = r;
            clocks[i] = acc.get();
        },
    )?;
    Ok(RadialPath {
        times,
        values,
        clock: clocks,
    })
}

/// Terminal value of the implicit scheme on a precomputed grid.
pub fn radial_implicit_end<S: GaussianSource>(
    spec: &RadialSpec,
    times: &[f64],
    refinement: Option<Refinement>,
    clock: Option<ClockKind>,
    src: &mut S,
) -> Result<RadialEnd> {
    check_step(spec, times)?;
    let mut acc = 0.0;
    let r = walk(
        &Implicit(spec),
        spec.r0,
        times,
        refinement,
        src,
        |a, b, _, h| {
            if let Some(k) = clock {
                acc += 0.5 * h * (k.weight(a) + k.weight(b));
            }
            Ok(())
        },
        |_, _| {},
    )?;
    Ok(RadialEnd { value: r, clock: acc })
}
