//! Randomized start-up maneuver.
//!
//! Every period a velocity is drawn uniformly from the disc of radius `v_max`
//! and a yaw rate uniformly from `[-r_max, r_max]`. The robot flies the
//! velocity for the first half of the period and its negation for the second
//! half, so the commanded displacement over each period is zero and the robot
//! never strays more than `v_max * period / 2` from where the period began.
use core::f64::consts::TAU;

use nalgebra::Vector2;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::truth::Command;

#[derive(Debug, Clone)]
pub struct StartupManeuver {
    rng: ChaCha8Rng,
    v_max: f64,
    yaw_rate_max: f64,
    period_steps: u64,
    velocity: Vector2<f64>,
    yaw_rate: f64,
}

impl StartupManeuver {
    /// `period_steps` must be even.
    pub fn new(seed: u64, stream: u64, v_max: f64, yaw_rate_max: f64, period_steps: u64) -> Self {
        debug_assert!(period_steps >= 2 && period_steps.is_multiple_of(2));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, v_max, yaw_rate_max, period_steps, velocity: Vector2::zeros(), yaw_rate: 0.0 }
    }

    /// Command for the `k`-th input step since the phase began. Must be called
    /// with consecutive `k`; a new draw happens at the start of each period.
    pub fn command(&mut self, k: u64) -> Command {
        let in_period = k % self.period_steps;
        if in_period == 0 {
            self.draw();
        }
        let v = if in_period < self.period_steps / 2 { self.velocity } else { -self.velocity };
        Command::world(v, self.yaw_rate)
    }

    fn draw(&mut self) {
        let radius = self.v_max * Float::sqrt(self.rng.gen::<f64>());
        let angle = TAU * self.rng.gen::<f64>();
        let (s, c) = Float::sin_cos(angle);
        self.velocity = Vector2::new(radius * c, radius * s);
        self.yaw_rate =
            if self.yaw_rate_max > 0.0 { self.rng.gen_range(-self.yaw_rate_max..=self.yaw_rate_max) } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn halves_cancel_exactly() {
        let mut m = StartupManeuver::new(9, 2, 1.0, 0.5, 200);
        let cmds: Vec<Command> = (0..2000).map(|k| m.command(k)).collect();
        for period in cmds.chunks(200) {
            for k in 0..100 {
                assert_eq!(period[k].velocity, -period[k + 100].velocity);
                assert!(period[k].velocity.norm() <= 1.0);
                assert!(period[k].yaw_rate.abs() <= 0.5);
            }
            let net: Vector2<f64> = period.iter().map(|c| c.velocity).sum();
            assert!(net.norm() < 1e-12);
        }
    }

    #[test]
    fn seeded_streams_repeat() {
        let mut a = StartupManeuver::new(42, 3, 1.0, 0.5, 200);
        let mut b = StartupManeuver::new(42, 3, 1.0, 0.5, 200);
        let mut c = StartupManeuver::new(42, 4, 1.0, 0.5, 200);
        let mut differs = false;
        for k in 0..1000 {
            let (ca, cb, cc) = (a.command(k), b.command(k), c.command(k));
            assert_eq!(ca, cb);
            differs |= ca != cc;
        }
        assert!(differs);
    }
}
