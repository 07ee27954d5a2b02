//! Winding of Brownian motion on the flat quaternionic space, the
//! quaternionic projective line and quaternionic hyperbolic space.
//!
//! The crate simulates the su(2)-valued winding `zeta(t)` by two independent
//! routes (skew-product time change and direct integration), evaluates the
//! closed-form characteristic functions and limit laws, and compares the two.

// negated comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod laws;
pub mod quat;
pub mod radial;
pub mod rng;
pub mod specfun;
pub mod stats;
pub mod winding;

pub use error::{Error, Result};
pub use laws::CfEstimate;
pub use quat::{Quaternion, SampledPath, WindingVector};
pub use radial::{ClockKind, RadialPath, RadialSpec, StepPolicy};
pub use rng::StreamKey;
pub use winding::{Geometry, GeometryKind, WindingSample};
