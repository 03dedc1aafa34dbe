//! Token-loop two-way ranging over a single shared UWB channel.
//!
//! Robots are indexed `0..n`. Robot 0 starts as the only transmitter and
//! ranges with robots `n-1, n-2, ..., 1` in that order. Its last exchange is
//! with robot 1, which then takes over the transmit role and ranges with
//! `n-1, ..., 2`, and so on until the pair `(n-2, n-1)` closes the cycle and
//! robot 0 transmits again. One cycle therefore covers every unordered pair
//! exactly once, and only one exchange occupies the channel at a time.
//!
//! Every exchange carries an extra reply so both endpoints learn the same
//! distance, and piggybacks each robot's velocity, yaw rate and height.
use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::kinematics::HorizontalVelocity;
use crate::sim::truth::RobotTruth;

/// Per-pair rate reported for six robots, Hz.
pub const ANCHOR_PAIR_RATE_HZ: f64 = 20.0;
pub const ANCHOR_ROBOT_COUNT: usize = 6;
/// Slot duration calibrated so six robots see 20 Hz per pair.
pub const DEFAULT_SLOT_TIME: f64 = 1.0 / 300.0;
pub const DEFAULT_MEDIAN_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangingError {
    TooFewRobots(usize),
    InvalidSlotTime(f64),
    InvalidChannel(&'static str),
    EmptyWindow,
}

impl fmt::Display for RangingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooFewRobots(n) => write!(f, "ranging needs at least 2 robots, got {n}"),
            Self::InvalidSlotTime(s) => write!(f, "slot time {s} s must be positive"),
            Self::InvalidChannel(what) => write!(f, "invalid channel model: {what}"),
            Self::EmptyWindow => f.write_str("median window must hold at least one sample"),
        }
    }
}

impl core::error::Error for RangingError {}

/// The ordered pair sequence of one full cycle, `(transmitter, receiver)`.
pub fn build_schedule(n: usize) -> Result<Vec<(usize, usize)>, RangingError> {
    if n < 2 {
        return Err(RangingError::TooFewRobots(n));
    }
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for tx in 0..n - 1 {
        for rx in (tx + 1..n).rev() {
            pairs.push((tx, rx));
        }
    }
    Ok(pairs)
}

/// Per-pair ranging rate when each exchange occupies one slot, Hz.
pub fn pair_frequency(n: usize, slot_time: f64) -> f64 {
    let pairs = (n * (n.saturating_sub(1)) / 2) as f64;
    1.0 / (pairs * slot_time)
}

/// Slot duration giving `rate_hz` per pair with `n` robots.
pub fn calibrate_slot_time(n: usize, rate_hz: f64) -> f64 {
    1.0 / ((n * (n - 1) / 2) as f64 * rate_hz)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Transmit,
    Receive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeSchedule {
    pub node: usize,
    pub mode: Mode,
    /// Index of the current exchange within the cycle.
    pub loop_position: usize,
}

/// The repeating pair sequence with fixed-length slots starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    n: usize,
    pairs: Vec<(usize, usize)>,
    slot_time: f64,
}

impl Schedule {
    pub fn new(n: usize, slot_time: f64) -> Result<Self, RangingError> {
        if !(slot_time > 0.0 && slot_time.is_finite()) {
            return Err(RangingError::InvalidSlotTime(slot_time));
        }
        Ok(Self { n, pairs: build_schedule(n)?, slot_time })
    }

    pub fn robots(&self) -> usize {
        self.n
    }

    pub fn slot_time(&self) -> f64 {
        self.slot_time
    }

    pub fn cycle(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn pair_at(&self, slot: u64) -> (usize, usize) {
        self.pairs[(slot % self.pairs.len() as u64) as usize]
    }

    pub fn slot_start(&self, slot: u64) -> f64 {
        slot as f64 * self.slot_time
    }

    /// First slot starting at or after `t`.
    pub fn first_slot_at_or_after(&self, t: f64) -> u64 {
        let mut k = num_traits::Float::ceil(t / self.slot_time) as u64;
        while k > 0 && self.slot_start(k - 1) >= t {
            k -= 1;
        }
        while self.slot_start(k) < t {
            k += 1;
        }
        k
    }

    pub fn node_states(&self, slot: u64) -> Vec<NodeSchedule> {
        let (tx, _) = self.pair_at(slot);
        let loop_position = (slot % self.pairs.len() as u64) as usize;
        (0..self.n)
            .map(|node| NodeSchedule {
                node,
                mode: if node == tx { Mode::Transmit } else { Mode::Receive },
                loop_position,
            })
            .collect()
    }

    pub fn pair_frequency(&self) -> f64 {
        pair_frequency(self.n, self.slot_time)
    }
}

/// Linear range bias `slope * d + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BiasModel {
    pub slope: f64,
    /// m
    pub offset: f64,
}

impl BiasModel {
    pub const NONE: BiasModel = BiasModel { slope: 0.0, offset: 0.0 };
    /// Fitted bias of the UWB modules, `0.072 d + 0.62`.
    pub const UWB: BiasModel = BiasModel { slope: 0.072, offset: 0.62 };

    pub fn at(&self, d: f64) -> f64 {
        self.slope * d + self.offset
    }
}

impl Default for BiasModel {
    fn default() -> Self {
        Self::UWB
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ChannelModel {
    /// Ranging noise std, m.
    pub sigma_d: f64,
    pub bias: BiasModel,
    pub outlier_prob: f64,
    /// Outliers add a uniform draw from this range, m.
    pub outlier_min: f64,
    pub outlier_max: f64,
    pub drop_prob: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            sigma_d: 0.025,
            bias: BiasModel::UWB,
            outlier_prob: 0.02,
            outlier_min: 0.5,
            outlier_max: 3.0,
            drop_prob: 0.0,
        }
    }
}

impl ChannelModel {
    /// Unbiased gaussian ranging without outliers.
    pub fn gaussian(sigma_d: f64) -> Self {
        Self { sigma_d, bias: BiasModel::NONE, outlier_prob: 0.0, ..Self::default() }
    }

    pub fn noiseless() -> Self {
        Self::gaussian(0.0)
    }

    pub fn validate(&self) -> Result<(), RangingError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.sigma_d >= 0.0 && self.sigma_d.is_finite()) {
            return Err(RangingError::InvalidChannel("sigma_d must be finite and non-negative"));
        }
        if !prob(self.outlier_prob) || !prob(self.drop_prob) {
            return Err(RangingError::InvalidChannel("probabilities must lie in [0, 1]"));
        }
        if !(self.outlier_min <= self.outlier_max && self.outlier_min.is_finite() && self.outlier_max.is_finite()) {
            return Err(RangingError::InvalidChannel("outlier range must be finite and ordered"));
        }
        if !(self.bias.slope.is_finite() && self.bias.offset.is_finite()) {
            return Err(RangingError::InvalidChannel("bias must be finite"));
        }
        Ok(())
    }
}

/// What each robot piggybacks on a ranging message.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Payload {
    pub v: HorizontalVelocity,
    pub r: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangingEvent {
    pub i: usize,
    pub j: usize,
    pub t: f64,
    pub d_true: f64,
    pub d_raw: f64,
    pub payload_i: Payload,
    pub payload_j: Payload,
    pub outlier: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exchange {
    Event(RangingEvent),
    Dropped { i: usize, j: usize, t: f64, d_true: f64 },
}

/// Distance between two robots including the height difference.
pub fn true_distance(a: &RobotTruth, b: &RobotTruth) -> f64 {
    let dp = b.pos - a.pos;
    let dh = b.height - a.height;
    num_traits::Float::sqrt(dp.x * dp.x + dp.y * dp.y + dh * dh)
}

/// One two-way-ranging exchange between `pair.0` and `pair.1` at time `t`.
///
/// Draw order per exchange is fixed (loss, noise, outlier, outlier size) so
/// that a seeded generator reproduces the same measurement stream.
pub fn simulate_exchange<R: Rng + ?Sized>(
    pair: (usize, usize),
    t: f64,
    channel: &ChannelModel,
    truth: &[RobotTruth],
    payloads: &[Payload],
    rng: &mut R,
) -> Exchange {
    let (i, j) = pair;
    let d_true = true_distance(&truth[i], &truth[j]);
    let lost = rng.gen::<f64>() < channel.drop_prob;
    let noise: f64 = StandardNormal.sample(rng);
    let outlier = rng.gen::<f64>() < channel.outlier_prob;
    let extra = if outlier { rng.gen_range(channel.outlier_min..=channel.outlier_max) } else { 0.0 };
    if lost {
        return Exchange::Dropped { i, j, t, d_true };
    }
    let d_raw = d_true + channel.bias.at(d_true) + channel.sigma_d * noise + extra;
    Exchange::Event(RangingEvent {
        i,
        j,
        t,
        d_true,
        d_raw: if d_raw > 0.0 { d_raw } else { 0.0 },
        payload_i: payloads[i],
        payload_j: payloads[j],
        outlier,
    })
}

/// Median of the samples; the mean of the two central values for even lengths.
pub fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 { sorted[mid] } else { 0.5 * (sorted[mid - 1] + sorted[mid]) })
}

/// Sliding median over the last `window` ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianFilter {
    window: usize,
    buf: VecDeque<f64>,
}

impl MedianFilter {
    pub fn new(window: usize) -> Result<Self, RangingError> {
        if window == 0 {
            return Err(RangingError::EmptyWindow);
        }
        Ok(Self { window, buf: VecDeque::with_capacity(window) })
    }

    pub fn push(&mut self, d: f64) -> f64 {
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf.push_back(d);
        median(self.buf.make_contiguous()).expect("non-empty")
    }

    pub fn window(&self) -> usize {
        self.window
    }
}

/// Removes the fitted bias from a (filtered) measurement, clamping at zero.
///
/// The bias was fitted against true distance but is evaluated here on the
/// measurement, leaving a residual of `slope * bias(d_true)`.
pub fn bias_correct(d: f64, bias: &BiasModel) -> f64 {
    let c = d - bias.at(d);
    if c > 0.0 {
        c
    } else {
        0.0
    }
}

/// Median filter followed by bias removal.
#[derive(Debug, Clone, PartialEq)]
pub struct RangePipeline {
    median: MedianFilter,
    bias: BiasModel,
}

impl RangePipeline {
    pub fn new(window: usize, bias: BiasModel) -> Result<Self, RangingError> {
        Ok(Self { median: MedianFilter::new(window)?, bias })
    }

    /// Returns `(filtered, corrected)`.
    pub fn process(&mut self, d_raw: f64) -> (f64, f64) {
        let filtered = self.median.push(d_raw);
        (filtered, bias_correct(filtered, &self.bias))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::truth::RobotTruth;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_robots(d: f64) -> [RobotTruth; 2] {
        [RobotTruth::at(Vector2::zeros(), 0.0, 1.0), RobotTruth::at(Vector2::new(d, 0.0), 0.0, 1.0)]
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(build_schedule(2).unwrap(), [(0, 1)]);
        assert_eq!(build_schedule(4).unwrap(), [(0, 3), (0, 2), (0, 1), (1, 3), (1, 2), (2, 3)]);
        assert_eq!(build_schedule(6).unwrap().len(), 15);
        assert_eq!(build_schedule(1), Err(RangingError::TooFewRobots(1)));
        assert_eq!(build_schedule(0), Err(RangingError::TooFewRobots(0)));
    }

    #[test]
    fn transmitter_hands_off_to_its_last_peer() {
        for n in 2..=10 {
            let pairs = build_schedule(n).unwrap();
            for w in pairs.windows(2) {
                if w[0].0 != w[1].0 {
                    assert_eq!(w[0].1, w[1].0, "handoff after {:?}", w[0]);
                }
            }
        }
    }

    #[test]
    fn single_transmitter_per_slot() {
        let s = Schedule::new(5, DEFAULT_SLOT_TIME).unwrap();
        for slot in 0..40 {
            let states = s.node_states(slot);
            assert_eq!(states.iter().filter(|n| n.mode == Mode::Transmit).count(), 1);
        }
    }

    #[test]
    fn slot_lookup() {
        let s = Schedule::new(3, 0.01).unwrap();
        assert_eq!(s.first_slot_at_or_after(0.0), 0);
        assert_eq!(s.first_slot_at_or_after(0.005), 1);
        assert_eq!(s.first_slot_at_or_after(s.slot_start(7)), 7);
        assert_eq!(s.pair_at(3), s.pair_at(0));
        assert!(Schedule::new(3, 0.0).is_err());
    }

    #[test]
    fn frequency_examples() {
        let slot = calibrate_slot_time(ANCHOR_ROBOT_COUNT, ANCHOR_PAIR_RATE_HZ);
        assert_abs_diff_eq!(slot, DEFAULT_SLOT_TIME, epsilon = 1e-15);
        assert_abs_diff_eq!(pair_frequency(6, slot), 20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(pair_frequency(2, slot), 300.0, epsilon = 1e-9);
        for n in 2..10 {
            assert!(pair_frequency(n + 1, slot) < pair_frequency(n, slot));
        }
    }

    #[test]
    fn noiseless_exchange_is_exact() {
        let truth = two_robots(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = ChannelModel::noiseless();
        match simulate_exchange((0, 1), 0.0, &ch, &truth, &[Payload::default(); 2], &mut rng) {
            Exchange::Event(e) => assert_eq!(e.d_raw, 2.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn biased_exchange_without_noise() {
        let truth = two_robots(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = ChannelModel { sigma_d: 0.0, outlier_prob: 0.0, ..ChannelModel::default() };
        let Exchange::Event(e) = simulate_exchange((0, 1), 0.0, &ch, &truth, &[Payload::default(); 2], &mut rng) else {
            panic!("dropped")
        };
        assert_abs_diff_eq!(e.d_raw, 2.764, epsilon = 1e-12);
    }

    #[test]
    fn exchange_includes_height_and_payloads() {
        let truth = [RobotTruth::at(Vector2::zeros(), 0.0, 1.0), RobotTruth::at(Vector2::new(3.0, 4.0), 0.0, 2.0)];
        let payloads = [
            Payload { v: HorizontalVelocity::new(0.1, 0.2), r: 0.3, h: 1.0 },
            Payload { v: HorizontalVelocity::new(-0.1, 0.0), r: -0.2, h: 2.0 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let Exchange::Event(e) =
            simulate_exchange((0, 1), 0.5, &ChannelModel::noiseless(), &truth, &payloads, &mut rng)
        else {
            panic!("dropped")
        };
        assert_abs_diff_eq!(e.d_true, 26.0f64.sqrt(), epsilon = 1e-15);
        assert_eq!(e.payload_i, payloads[0]);
        assert_eq!(e.payload_j, payloads[1]);
        assert_eq!(e.t, 0.5);
    }

    #[test]
    fn certain_loss_drops() {
        let truth = two_robots(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = ChannelModel { drop_prob: 1.0, ..ChannelModel::default() };
        let out = simulate_exchange((0, 1), 0.0, &ch, &truth, &[Payload::default(); 2], &mut rng);
        assert!(matches!(out, Exchange::Dropped { i: 0, j: 1, .. }));
    }

    #[test]
    fn noise_statistics() {
        let truth = two_robots(3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ch = ChannelModel { outlier_prob: 0.0, ..ChannelModel::default() };
        let samples: Vec<f64> = (0..100_000)
            .map(|_| match simulate_exchange((0, 1), 0.0, &ch, &truth, &[Payload::default(); 2], &mut rng) {
                Exchange::Event(e) => e.d_raw,
                Exchange::Dropped { .. } => unreachable!(),
            })
            .collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = (samples.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 0.025).abs() < 0.002, "std {std}");
        assert_abs_diff_eq!(mean, 3.0 + BiasModel::UWB.at(3.0), epsilon = 1e-3);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[2.0, 2.1, 9.0, 2.05, 1.95]), Some(2.05));
        assert_eq!(median(&[1.5; 4]), Some(1.5));
        assert_eq!(median(&[1.0, 3.0]), Some(2.0));
        assert_eq!(median(&[]), None);
        assert!(MedianFilter::new(0).is_err());
    }

    #[test]
    fn sliding_median_tracks_window() {
        let mut f = MedianFilter::new(3).unwrap();
        assert_eq!(f.push(1.0), 1.0);
        assert_eq!(f.push(5.0), 3.0);
        assert_eq!(f.push(2.0), 2.0);
        assert_eq!(f.push(9.0), 5.0);
        assert_eq!(f.push(3.0), 3.0);
    }

    #[test]
    fn bias_correction_examples() {
        assert_abs_diff_eq!(bias_correct(2.764, &BiasModel::UWB), 1.944_992, epsilon = 1e-9);
        assert_eq!(bias_correct(0.0, &BiasModel::UWB), 0.0);
        assert_eq!(bias_correct(0.3, &BiasModel::UWB), 0.0);
        // residual of correcting on the measurement instead of the truth
        for k in 1..=100 {
            let d_true = k as f64 * 0.1;
            let measured = d_true + BiasModel::UWB.at(d_true);
            let err = (bias_correct(measured, &BiasModel::UWB) - d_true).abs();
            assert_abs_diff_eq!(err, 0.072 * BiasModel::UWB.at(d_true), epsilon = 1e-12);
            if d_true >= 1.0 {
                assert!(err < 0.72 * 0.072 * d_true);
            }
        }
    }

    #[test]
    fn median_beats_raw_with_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = two_robots(2.5);
        let ch = ChannelModel { bias: BiasModel::NONE, outlier_min: 1.0, outlier_max: 1.0, ..ChannelModel::default() };
        let mut pipe = RangePipeline::new(DEFAULT_MEDIAN_WINDOW, BiasModel::NONE).unwrap();
        let (mut raw, mut filt) = (0.0, 0.0);
        for _ in 0..20_000 {
            if let Exchange::Event(e) = simulate_exchange((0, 1), 0.0, &ch, &truth, &[Payload::default(); 2], &mut rng)
            {
                raw += (e.d_raw - e.d_true).abs();
                filt += (pipe.process(e.d_raw).0 - e.d_true).abs();
            }
        }
        assert!(filt < raw);
    }

    #[test]
    fn channel_validation() {
        assert!(ChannelModel::default().validate().is_ok());
        assert!(ChannelModel { outlier_prob: 1.5, ..ChannelModel::default() }.validate().is_err());
        assert!(ChannelModel { sigma_d: -0.1, ..ChannelModel::default() }.validate().is_err());
        assert!(ChannelModel { outlier_min: 4.0, ..ChannelModel::default() }.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn median_is_order_insensitive(mut v in proptest::collection::vec(-10.0f64..10.0, 1..12), seed in 0u64..1000) {
            let m = median(&v);
            use rand::seq::SliceRandom;
            v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            proptest::prop_assert_eq!(median(&v), m);
        }

        #[test]
        fn schedule_covers_every_pair_once(n in 2usize..=10) {
            let pairs = build_schedule(n).unwrap();
            proptest::prop_assert_eq!(pairs.len(), n * (n - 1) / 2);
            for a in 0..n {
                for b in a + 1..n {
                    let hits = pairs.iter().filter(|&&(x, y)| (x.min(y), x.max(y)) == (a, b)).count();
                    proptest::prop_assert_eq!(hits, 1);
                }
            }
        }
    }
}
