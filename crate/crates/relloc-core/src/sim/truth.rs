//! Ground-truth robot state. Only the simulator and the metrics see this.
use nalgebra::Vector2;

use crate::angle::wrap_angle;
use crate::kinematics::{rotation, Attitude, HorizontalVelocity, RelativeState};

/// Tilt per unit of horizontal velocity, rad per m/s.
pub const TILT_PER_VELOCITY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotTruth {
    /// Global position, m.
    pub pos: Vector2<f64>,
    pub yaw: f64,
    pub height: f64,
    /// Velocity in the robot's own horizontal frame.
    pub velocity: HorizontalVelocity,
    pub yaw_rate: f64,
    pub attitude: Attitude,
    /// Command held until the next call to [`RobotTruth::apply`].
    pub held: Command,
}

impl RobotTruth {
    pub fn at(pos: Vector2<f64>, yaw: f64, height: f64) -> Self {
        Self {
            pos,
            yaw: wrap_angle(yaw),
            height,
            velocity: HorizontalVelocity::ZERO,
            yaw_rate: 0.0,
            attitude: Attitude::LEVEL,
            held: Command::HOVER,
        }
    }

    pub fn world_velocity(&self) -> Vector2<f64> {
        rotation(self.yaw) * self.velocity.as_vector()
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().all(|v| v.is_finite())
            && self.yaw.is_finite()
            && self.height.is_finite()
            && self.velocity.is_finite()
            && self.yaw_rate.is_finite()
    }

    /// Applies a command: sets velocity, yaw rate and the matching tilt.
    pub fn apply(&mut self, cmd: &Command, v_max: f64) {
        self.held = Command { velocity: saturate(cmd.velocity, v_max), ..*cmd };
        self.refresh_velocity();
    }

    /// Euler step of length `h` under the held command.
    pub fn advance(&mut self, h: f64) {
        let v_world = match self.held.frame {
            CommandFrame::World => self.held.velocity,
            CommandFrame::Body => rotation(self.yaw) * self.held.velocity,
        };
        self.pos += v_world * h;
        self.yaw = wrap_angle(self.yaw + self.held.yaw_rate * h);
        self.refresh_velocity();
    }

    fn refresh_velocity(&mut self) {
        let horizontal = match self.held.frame {
            CommandFrame::Body => self.held.velocity,
            CommandFrame::World => rotation(self.yaw).transpose() * self.held.velocity,
        };
        self.velocity = HorizontalVelocity::from_vector(horizontal);
        self.yaw_rate = self.held.yaw_rate;
        self.attitude = Attitude { pitch: TILT_PER_VELOCITY * horizontal.x, roll: -TILT_PER_VELOCITY * horizontal.y };
    }
}

/// Frame a velocity command is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandFrame {
    /// Global frame; used for scripted maneuvers.
    World,
    /// The robot's own horizontal frame; used by controllers.
    Body,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub velocity: Vector2<f64>,
    pub frame: CommandFrame,
    pub yaw_rate: f64,
}

impl Command {
    pub const HOVER: Command = Command { velocity: Vector2::new(0.0, 0.0), frame: CommandFrame::Body, yaw_rate: 0.0 };

    pub fn world(velocity: Vector2<f64>, yaw_rate: f64) -> Self {
        Self { velocity, frame: CommandFrame::World, yaw_rate }
    }

    pub fn body(velocity: Vector2<f64>, yaw_rate: f64) -> Self {
        Self { velocity, frame: CommandFrame::Body, yaw_rate }
    }
}

pub fn saturate(v: Vector2<f64>, v_max: f64) -> Vector2<f64> {
    let n = v.norm();
    if n > v_max && n > 0.0 {
        v * (v_max / n)
    } else {
        v
    }
}

/// Relative state of `target` in `observer`'s horizontal frame.
pub fn relative_state(observer: &RobotTruth, target: &RobotTruth) -> RelativeState {
    let p = rotation(observer.yaw).transpose() * (target.pos - observer.pos);
    RelativeState::new(p.x, p.y, target.yaw - observer.yaw)
}
