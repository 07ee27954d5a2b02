//! Quaternion algebra and the su(2)-valued winding form.
//!
//! Quaternions use the Hamilton convention `IJ = K`, which is the product of
//! the Pauli-type matrices `I = diag(i, -i)`, `J = [[0, 1], [-1, 0]]`,
//! `K = [[0, i], [i, 0]]`. Elements of su(2) are stored as 3-vectors in the
//! basis `(I, J, K)`.
//!
//! The winding form at `q != 0` evaluated on a tangent vector `dq` is
//! `Im(conj(q) dq) / |q|^2`; its line integral along a path is the
//! Maurer–Cartan integral of the spherical part `q / |q|`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(t: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { t, x, y, z }
    }

    pub fn real(t: f64) -> Self {
        Quaternion::new(t, 0.0, 0.0, 0.0)
    }

    /// Pure imaginary quaternion with the given su(2) coordinates.
    pub fn from_imag(v: WindingVector) -> Self {
        Quaternion::new(0.0, v.v1, v.v2, v.v3)
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.t, self.x, self.y, self.z]
    }

    pub fn conj(self) -> Self {
        Quaternion::new(self.t, -self.x, -self.y, -self.z)
    }

    pub fn norm_sqr(self) -> f64 {
        self.t * self.t + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(self) -> f64 {
        // hypot-style scaling is unnecessary for the magnitudes used here
        self.norm_sqr().sqrt()
    }

    pub fn dot(self, other: Quaternion) -> f64 {
        self.t * other.t + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn imag(self) -> WindingVector {
        WindingVector::new(self.x, self.y, self.z)
    }

    pub fn inverse(self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if n2 == 0.0 {
            return Err(Error::domain("inverse of the zero quaternion"));
        }
        Ok(self.conj() * (1.0 / n2))
    }

    /// Unit quaternion `exp(v) = cos|v| + sin|v| v/|v|` for imaginary `v`.
    pub fn exp_imag(v: WindingVector) -> Self {
        let a = v.norm();
        if a == 0.0 {
            return Quaternion::ONE;
        }
        let s = a.sin() / a;
        Quaternion::new(a.cos(), s * v.v1, s * v.v2, s * v.v3)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.t + o.t, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Quaternion {
    fn add_assign(&mut self, o: Quaternion) {
        *self = *self + o;
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.t - o.t, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion::new(-self.t, -self.x, -self.y, -self.z)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, o: Quaternion) -> Quaternion {
        Quaternion::new(
            self.t * o.t - self.x * o.x - self.y * o.y - self.z * o.z,
            self.t * o.x + self.x * o.t + self.y * o.z - self.z * o.y,
            self.t * o.y - self.x * o.z + self.y * o.t + self.z * o.x,
            self.t * o.z + self.x * o.y - self.y * o.x + self.z * o.t,
        )
    }
}

impl Mul<f64> for Quaternion {
    type Output = Quaternion;
    fn mul(self, s: f64) -> Quaternion {
        Quaternion::new(self.t * s, self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Quaternion> for f64 {
    type Output = Quaternion;
    fn mul(self, q: Quaternion) -> Quaternion {
        q * self
    }
}

/// Coordinates of an su(2) element in the basis `(I, J, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct WindingVector {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
}

impl From<[f64; 3]> for WindingVector {
    fn from(a: [f64; 3]) -> Self {
        WindingVector::new(a[0], a[1], a[2])
    }
}

impl From<WindingVector> for [f64; 3] {
    fn from(v: WindingVector) -> Self {
        v.to_array()
    }
}

impl WindingVector {
    pub const ZERO: WindingVector = WindingVector::new(0.0, 0.0, 0.0);

    pub const fn new(v1: f64, v2: f64, v3: f64) -> Self {
        WindingVector { v1, v2, v3 }
    }

    /// `(norm, 0, 0)`: the canonical frequency of a given magnitude.
    pub fn along_i(norm: f64) -> Self {
        WindingVector::new(norm, 0.0, 0.0)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.v1, self.v2, self.v3]
    }

    pub fn dot(self, o: WindingVector) -> f64 {
        self.v1 * o.v1 + self.v2 * o.v2 + self.v3 * o.v3
    }

    pub fn norm_sqr(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs_diff(self, o: WindingVector) -> f64 {
        (self.v1 - o.v1)
            .abs()
            .max((self.v2 - o.v2).abs())
            .max((self.v3 - o.v3).abs())
    }

    /// Adjoint action `u v u^{-1}` of a unit quaternion.
    pub fn adjoint(self, u: Quaternion) -> WindingVector {
        (u * Quaternion::from_imag(self) * u.conj()).imag() * (1.0 / u.norm_sqr())
    }
}

impl Add for WindingVector {
    type Output = WindingVector;
    fn add(self, o: WindingVector) -> WindingVector {
        WindingVector::new(self.v1 + o.v1, self.v2 + o.v2, self.v3 + o.v3)
    }
}

impl AddAssign for WindingVector {
    fn add_assign(&mut self, o: WindingVector) {
        *self = *self + o;
    }
}

impl Sub for WindingVector {
    type Output = WindingVector;
    fn sub(self, o: WindingVector) -> WindingVector {
        WindingVector::new(self.v1 - o.v1, self.v2 - o.v2, self.v3 - o.v3)
    }
}

impl Mul<f64> for WindingVector {
    type Output = WindingVector;
    fn mul(self, s: f64) -> WindingVector {
        WindingVector::new(self.v1 * s, self.v2 * s, self.v3 * s)
    }
}

/// Splits `q` into its radius and its unit-quaternion direction.
pub fn polar_decompose(q: Quaternion) -> Result<(f64, Quaternion)> {
    let r = q.norm();
    if r == 0.0 || !r.is_finite() {
        return Err(Error::domain("polar decomposition of a zero or non-finite quaternion"));
    }
    Ok((r, q * (1.0 / r)))
}

/// The winding form at `q`, evaluated on the tangent vector `dq`, using the
/// real-coordinate component formulas.
pub fn winding_form(q: Quaternion, dq: Quaternion) -> Result<WindingVector> {
    let n2 = q.norm_sqr();
    if n2 == 0.0 {
        return Err(Error::domain("winding form is singular at the origin"));
    }
    let Quaternion { t, x, y, z } = q;
    let Quaternion {
        t: dt,
        x: dx,
        y: dy,
        z: dz,
    } = dq;
    Ok(WindingVector::new(
        (t * dx - x * dt + z * dy - y * dz) / n2,
        (t * dy - y * dt + x * dz - z * dx) / n2,
        (t * dz - z * dt + y * dx - x * dy) / n2,
    ))
}

/// Same form computed as `Im(conj(q) dq) / |q|^2` through quaternion products.
pub fn winding_form_quaternionic(q: Quaternion, dq: Quaternion) -> Result<WindingVector> {
    let n2 = q.norm_sqr();
    if n2 == 0.0 {
        return Err(Error::domain("winding form is singular at the origin"));
    }
    Ok((q.conj() * dq).imag() * (1.0 / n2))
}

/// Relative midpoint norm below which a step is treated as crossing the origin.
pub const MIDPOINT_DEGENERACY: f64 = 1e-12;

/// Winding increment of the chord `a -> b` under the midpoint rule.
pub fn chord_winding(a: Quaternion, b: Quaternion, step: usize) -> Result<WindingVector> {
    let mid = (a + b) * 0.5;
    let scale = a.norm().max(b.norm());
    if !(mid.norm() >= MIDPOINT_DEGENERACY * scale) || scale == 0.0 {
        return Err(Error::PathThroughOrigin { step });
    }
    winding_form(mid, b - a)
}

/// A discretely sampled path in `H \ {0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    times: Vec<f64>,
    points: Vec<Quaternion>,
}

impl SampledPath {
    pub fn new(times: Vec<f64>, points: Vec<Quaternion>) -> Result<Self> {
        if times.len() != points.len() {
            return Err(Error::domain("times and points differ in length"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("times must be strictly increasing"));
        }
        if let Some(i) = points.iter().position(|p| !(p.norm() > 0.0)) {
            return Err(Error::domain(format!("point {i} is zero or non-finite")));
        }
        Ok(SampledPath { times, points })
    }

    /// Path with unit-spaced times, for callers that only care about geometry.
    pub fn from_points(points: Vec<Quaternion>) -> Result<Self> {
        let times = (0..points.len()).map(|i| i as f64).collect();
        SampledPath::new(times, points)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Quaternion] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Every point multiplied on the left by `u`.
    pub fn left_mul(&self, u: Quaternion) -> SampledPath {
        SampledPath {
            times: self.times.clone(),
            points: self.points.iter().map(|&p| u * p).collect(),
        }
    }

    /// Every point multiplied on the right by `u`.
    pub fn right_mul(&self, u: Quaternion) -> SampledPath {
        SampledPath {
            times: self.times.clone(),
            points: self.points.iter().map(|&p| p * u).collect(),
        }
    }
}

/// Discrete Stratonovich integral of the winding form along `path`.
pub fn stratonovich_winding(path: &SampledPath) -> Result<WindingVector> {
    winding_of_points(path.points())
}

pub(crate) fn winding_of_points(points: &[Quaternion]) -> Result<WindingVector> {
    if points.len() < 2 {
        return Err(Error::domain("winding needs at least two points"));
    }
    let mut acc = NeumaierVec::default();
    for (i, w) in points.windows(2).enumerate() {
        acc.add(chord_winding(w[0], w[1], i)?);
    }
    Ok(acc.sum())
}

/// Componentwise compensated accumulator for winding vectors.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct NeumaierVec {
    s: [crate::stats::Neumaier; 3],
}

impl NeumaierVec {
    pub(crate) fn add(&mut self, v: WindingVector) {
        self.s[0].add(v.v1);
        self.s[1].add(v.v2);
        self.s[2].add(v.v3);
    }

    pub(crate) fn sum(&self) -> WindingVector {
        WindingVector::new(self.s[0].sum(), self.s[1].sum(), self.s[2].sum())
    }
}
