use core::f64::consts::{PI, TAU};

use num_traits::Float;

/// Wraps an angle into `(-π, π]`.
///
/// Angles already inside the interval are returned bit-for-bit unchanged.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a - TAU * Float::floor((a + PI) / TAU);
    if w <= -PI {
        w += TAU;
    } else if w > PI {
        w -= TAU;
    }
    w
}
