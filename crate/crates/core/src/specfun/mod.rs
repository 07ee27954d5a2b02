//! Special functions and quadrature for the closed-form laws.

mod bessel;
mod quad;

pub use bessel::{bessel_i, bessel_k, bessel_k2, log_bessel_i_scaled, SERIES_SWITCH};
pub use quad::{integrate, QuadEstimate, Quadrature, Upper};

/// A real number stored as `sign * exp(log_magnitude)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue {
    pub log_magnitude: f64,
    /// `+1`, `-1`, or `0` (in which case `log_magnitude` is `-inf`).
    pub sign: i8,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue {
        log_magnitude: f64::NEG_INFINITY,
        sign: 0,
    };
    pub const ONE: LogValue = LogValue {
        log_magnitude: 0.0,
        sign: 1,
    };

    pub fn positive(log_magnitude: f64) -> Self {
        LogValue { log_magnitude, sign: 1 }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == 0.0 {
            LogValue::ZERO
        } else {
            LogValue {
                log_magnitude: v.abs().ln(),
                sign: if v > 0.0 { 1 } else { -1 },
            }
        }
    }

    pub fn to_f64(self) -> f64 {
        self.to_f64_scaled(0.0)
    }

    /// `value * exp(log_scale)`, without forming the unscaled value.
    pub fn to_f64_scaled(self, log_scale: f64) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            f64::from(self.sign) * (self.log_magnitude + log_scale).exp()
        }
    }

    /// Natural log of the magnitude.
    pub fn ln(self) -> f64 {
        self.log_magnitude
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, o: LogValue) -> LogValue {
        if self.sign == 0 || o.sign == 0 {
            LogValue::ZERO
        } else {
            LogValue {
                log_magnitude: self.log_magnitude + o.log_magnitude,
                sign: self.sign * o.sign,
            }
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(self, o: LogValue) -> LogValue {
        assert!(o.sign != 0, "division by zero LogValue");
        if self.sign == 0 {
            LogValue::ZERO
        } else {
            LogValue {
                log_magnitude: self.log_magnitude - o.log_magnitude,
                sign: self.sign * o.sign,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_and_one() {
        assert_eq!(LogValue::from_f64(0.0), LogValue::ZERO);
        assert_eq!(LogValue::ZERO.to_f64(), 0.0);
        assert_eq!(LogValue::ONE.to_f64(), 1.0);
        assert_eq!(LogValue::from_f64(-2.0).mul(LogValue::ZERO), LogValue::ZERO);
    }

    proptest! {
        #[test]
        fn round_trips(v in prop_oneof![-1e300f64..-1e-300, 1e-300f64..1e300]) {
            let back = LogValue::from_f64(v).to_f64();
            prop_assert!(((back - v) / v).abs() < 1e-12);
        }

        #[test]
        fn products_match(a in -1e10f64..1e10, b in 1e-5f64..1e10) {
            prop_assume!(a != 0.0);
            let p = LogValue::from_f64(a).mul(LogValue::from_f64(b)).to_f64();
            prop_assert!(((p - a * b) / (a * b)).abs() < 1e-12);
            let q = LogValue::from_f64(a).div(LogValue::from_f64(b)).to_f64();
            prop_assert!(((q - a / b) / (a / b)).abs() < 1e-12);
        }
    }
}
