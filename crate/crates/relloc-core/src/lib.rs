//! Range-based relative localization for robot swarms.
//!
//! Every robot fuses its own horizontal velocity and yaw rate with the
//! velocity, yaw rate and height communicated by a peer, plus a UWB range to
//! that peer, in a per-pair extended Kalman filter. The result is the planar
//! position and heading of the peer expressed in the robot's own horizontal
//! frame.
//!
//! The crate is `no_std` (it needs `alloc`) and contains no IO:
//!
//! * [`kinematics`] frame transforms and the relative motion model,
//! * [`estimator`] the pair EKF,
//! * [`observability`] Lie-derivative observability analysis,
//! * [`ranging`] token-loop two-way-ranging schedule, channel model and the
//!   median filter / bias correction pipeline,
//! * [`sim`] the deterministic multi-robot simulator and studies built on it.
#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod estimator;
pub mod kinematics;
pub mod observability;
pub mod ranging;
pub mod sim;

mod angle;

pub use angle::wrap_angle;
pub use estimator::{EkfState, EstimatorError, NoiseParams, RangeObservation, UpdateOutcome};
pub use kinematics::{
    Attitude, BodyRates, HorizontalVelocity, InputVector, KinematicsError, RelativeState, YawRateMode,
};
pub use observability::{ObservabilityReport, RegimeFlags};
pub use ranging::{ChannelModel, RangingEvent, Schedule};
