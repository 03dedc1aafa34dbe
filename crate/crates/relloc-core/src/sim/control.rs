//! PID formation control on estimated relative positions.
use nalgebra::Vector2;

use super::truth::saturate;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PidGains {
    pub kp: f64,
    pub kd: f64,
    pub ki: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self { kp: 0.8, kd: 0.1, ki: 0.05 }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<(), &'static str> {
        if [self.kp, self.kd, self.ki].iter().all(|g| *g >= 0.0 && g.is_finite()) {
            Ok(())
        } else {
            Err("gains must be finite and non-negative")
        }
    }
}

/// `kp e + kd e_dot + ki e_int`, saturated to `v_max`.
pub fn formation_control(
    e: Vector2<f64>,
    e_dot: Vector2<f64>,
    e_int: Vector2<f64>,
    gains: &PidGains,
    v_max: f64,
) -> Vector2<f64> {
    saturate(e * gains.kp + e_dot * gains.kd + e_int * gains.ki, v_max)
}

/// Stateful PID with a per-axis integral clamp so `|ki * e_int| <= v_max`
/// and conditional integration against windup.
#[derive(Debug, Clone, PartialEq)]
pub struct Pid {
    gains: PidGains,
    v_max: f64,
    integral: Vector2<f64>,
    previous: Option<Vector2<f64>>,
}

impl Pid {
    pub fn new(gains: PidGains, v_max: f64) -> Self {
        Self { gains, v_max, integral: Vector2::zeros(), previous: None }
    }

    pub fn reset(&mut self) {
        self.integral = Vector2::zeros();
        self.previous = None;
    }

    pub fn integral(&self) -> Vector2<f64> {
        self.integral
    }

    pub fn update(&mut self, e: Vector2<f64>, dt: f64) -> Vector2<f64> {
        let e_dot = self.previous.map_or(Vector2::zeros(), |p| (e - p) / dt);
        self.previous = Some(e);
        let mut candidate = self.integral + e * dt;
        if self.gains.ki > 0.0 {
            let limit = self.v_max / self.gains.ki;
            candidate = candidate.map(|v| v.clamp(-limit, limit));
        }
        // conditional integration: hold the integral while the output saturates
        let raw = e * self.gains.kp + e_dot * self.gains.kd + candidate * self.gains.ki;
        if raw.norm() <= self.v_max {
            self.integral = candidate;
        }
        formation_control(e, e_dot, self.integral, &self.gains, self.v_max)
    }
}
