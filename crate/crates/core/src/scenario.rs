//! World state: the ego vehicle, the candidate helpers ahead of it, the shared
//! camera model, the environment and the V2V communication budget.
//!
//! Scenarios are plain immutable data. [`generate_scenario`] draws one from a
//! [`ScenarioConfig`] and a seed; [`validate_scenario`] reports every broken
//! invariant at once. Scenarios round-trip through TOML (see the book chapter
//! on file formats for the schema).

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, streams};

/// Width of one LTE resource block in hertz.
pub const RB_WIDTH_HZ: f64 = 180_000.0;

/// Generated packet error probabilities are capped at `1 - DEFAULT_BETA_CLAMP`.
pub const DEFAULT_BETA_CLAMP: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("scenario violates {} invariant(s): {}", .0.len(), format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to serialize scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.code.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

/// One candidate helper (or the ego vehicle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u32,
    /// Longitudinal position along the road, meters.
    pub position_x: f64,
    /// Lateral position, meters.
    pub position_y: f64,
    /// Speed relative to the scene, m/s.
    pub speed: f64,
    /// Effective packet error probability of the V2V link, in `[0, 1)`.
    pub packet_error_prob: f64,
    /// Expected end-to-end delay of one packet, seconds.
    pub mean_delay: f64,
    /// Nominal transmit power, watts.
    pub tx_power: f64,
}

/// Pinhole camera shared by every vehicle in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    /// Exposure time, seconds.
    pub exposure_time: f64,
    /// Focal length, meters.
    pub focal_length: f64,
    /// Horizontal CCD pixel size, meters.
    pub ccd_pixel_size: f64,
    /// Starting position of the object in the image, pixels.
    pub object_start_px: f64,
    /// Angle between motion direction and image plane, radians.
    pub motion_angle: f64,
    /// Object depth, meters.
    pub depth: f64,
    /// Pixel pitch, meters.
    pub pixel_pitch: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            exposure_time: 0.01,
            focal_length: 0.004,
            ccd_pixel_size: 4e-6,
            object_start_px: 320.0,
            motion_angle: 0.0,
            depth: 20.0,
            pixel_pitch: 4e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Individual visual range limit set by weather and light, meters.
    pub visibility_threshold: f64,
    /// Angle between the road and the x axis, radians.
    pub road_angle: f64,
    /// Proximity weighting constant of the visual-range score, 1/m.
    pub decay_rate: f64,
    /// Upper integration limit used by numerical checks, meters.
    pub range_horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommsBudget {
    /// Channel rate delivered by one resource block, bits/s.
    pub channel_rate: f64,
    /// Resource blocks available to the selected helpers.
    pub total_rb_count: u32,
    /// Always [`RB_WIDTH_HZ`].
    pub rb_width: f64,
    /// Total transmit power shared by the helpers, watts.
    pub total_power: f64,
    /// Bound on the expected end-to-end delay, seconds.
    pub delay_threshold: f64,
    /// Packet length, bits.
    pub packet_length: f64,
    /// Add the transmission delay `packet_length / channel_rate` to each
    /// vehicle's mean delay when checking the delay bound.
    pub include_tx_delay: bool,
}

impl CommsBudget {
    /// LTE-V2X carrier preset. 10 MHz carries 50 resource blocks and 20 MHz
    /// carries 100 (90% occupied bandwidth over 180 kHz blocks).
    pub fn lte(bandwidth_mhz: u32) -> Result<Self, ScenarioError> {
        let total_rb_count = match bandwidth_mhz {
            10 | 20 => (0.9 * bandwidth_mhz as f64 * 1e6 / RB_WIDTH_HZ).round() as u32,
            other => {
                return Err(ScenarioError::Config(format!(
                    "unsupported LTE-V2X bandwidth {other} MHz (expected 10 or 20)"
                )))
            }
        };
        Ok(Self {
            total_rb_count,
            ..Self::default()
        })
    }
}

impl Default for CommsBudget {
    fn default() -> Self {
        Self {
            channel_rate: 300_000.0,
            total_rb_count: 50,
            rb_width: RB_WIDTH_HZ,
            total_power: 0.6,
            delay_threshold: 0.1,
            packet_length: 8_000.0,
            include_tx_delay: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub ego: Vehicle,
    /// Candidate helpers, strictly ascending in `position_x`, all ahead of
    /// the ego vehicle.
    pub candidates: Vec<Vehicle>,
    pub camera: CameraModel,
    pub environment: Environment,
    pub comms: CommsBudget,
    /// Maximum number of helpers to recruit.
    pub max_helpers: usize,
}

impl Scenario {
    pub fn n_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(self)?)
    }

    /// Parses a scenario without validating it.
    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        let text = self.to_toml_string()?;
        std::fs::write(path, text).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Reads and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let scenario = Self::from_toml_str(&text)?;
        validate_scenario(&scenario).map_err(ScenarioError::Invalid)?;
        Ok(scenario)
    }

    /// Copy of the scenario with every candidate's packet error probability
    /// replaced by `f(beta)`.
    pub fn map_betas(&self, f: impl Fn(f64) -> f64) -> Scenario {
        let mut out = self.clone();
        for v in &mut out.candidates {
            v.packet_error_prob = f(v.packet_error_prob);
        }
        out
    }
}

/// Distribution parameters for [`generate_scenario`].
///
/// Positions and speeds are not pinned down by the experiment description we
/// follow; the defaults here are assumptions and can be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Beta(a, b) shape parameters for packet error probabilities.
    pub beta_shape_a: f64,
    pub beta_shape_b: f64,
    /// Error probabilities are clamped to `1 - beta_clamp`.
    pub beta_clamp: f64,
    /// Rate of the exponential distribution mean delays are drawn from, 1/s.
    pub mean_delay_rate: f64,
    pub ego_x: f64,
    /// Candidates are placed uniformly on `[ego_x + gap_min, ego_x + road_length]`.
    pub gap_min: f64,
    pub road_length: f64,
    /// Lateral positions are uniform on `[-lateral_spread, lateral_spread]`.
    pub lateral_spread: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub tx_power: f64,
    pub max_helpers: usize,
    pub visibility_threshold: f64,
    pub road_angle: f64,
    pub decay_rate: f64,
    pub camera: CameraModel,
    pub comms: CommsBudget,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            beta_shape_a: 2.0,
            beta_shape_b: 8.0,
            beta_clamp: DEFAULT_BETA_CLAMP,
            mean_delay_rate: 20.0,
            ego_x: 0.0,
            gap_min: 5.0,
            road_length: 300.0,
            lateral_spread: 3.5,
            speed_min: 5.0,
            speed_max: 30.0,
            tx_power: 0.2,
            max_helpers: 3,
            visibility_threshold: 50.0,
            road_angle: 0.0,
            decay_rate: 0.002,
            camera: CameraModel::default(),
            comms: CommsBudget::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn check(&self) -> Result<(), ScenarioError> {
        let bad = |msg: &str| Err(ScenarioError::Config(msg.to_string()));
        if !(self.beta_shape_a > 0.0 && self.beta_shape_b > 0.0) {
            return bad("beta shape parameters must be positive");
        }
        if !(self.mean_delay_rate > 0.0) {
            return bad("mean_delay_rate must be positive");
        }
        if !(self.beta_clamp > 0.0 && self.beta_clamp < 1.0) {
            return bad("beta_clamp must lie in (0, 1)");
        }
        if !(self.gap_min >= 0.0 && self.road_length > self.gap_min) {
            return bad("road_length must exceed gap_min >= 0");
        }
        if !(self.speed_min >= 0.0 && self.speed_max >= self.speed_min) {
            return bad("speed range must satisfy 0 <= speed_min <= speed_max");
        }
        if !(self.lateral_spread >= 0.0) {
            return bad("lateral_spread must be nonnegative");
        }
        if !(self.visibility_threshold > 0.0) {
            return bad("visibility_threshold must be positive");
        }
        if !(self.decay_rate > 0.0) {
            return bad("decay_rate must be positive");
        }
        if self.max_helpers == 0 {
            return bad("max_helpers must be at least 1");
        }
        Ok(())
    }
}

/// Draws a scenario with `n_candidates` helpers. Pure in `(seed, config)`.
pub fn generate_scenario(
    seed: u64,
    n_candidates: usize,
    config: &ScenarioConfig,
) -> Result<Scenario, ScenarioError> {
    config.check()?;
    if n_candidates == 0 {
        return Err(ScenarioError::Config("n_candidates must be at least 1".into()));
    }
    if config.max_helpers > n_candidates {
        return Err(ScenarioError::Config(format!(
            "max_helpers {} exceeds n_candidates {n_candidates}",
            config.max_helpers
        )));
    }
    let beta = Beta::new(config.beta_shape_a, config.beta_shape_b)
        .map_err(|e| ScenarioError::Config(format!("beta distribution: {e}")))?;
    let delay = Exp::new(config.mean_delay_rate)
        .map_err(|e| ScenarioError::Config(format!("exponential distribution: {e}")))?;

    let mut rng = stream_rng(seed, streams::SCENARIO);
    let lo = config.ego_x + config.gap_min;
    let hi = config.ego_x + config.road_length;

    let mut positions: Vec<f64> = Vec::with_capacity(n_candidates);
    while positions.len() < n_candidates {
        let x = rng.random_range(lo..=hi);
        if !positions.contains(&x) {
            positions.push(x);
        }
    }
    positions.sort_by(f64::total_cmp);

    let beta_max = 1.0 - config.beta_clamp;
    let candidates = positions
        .into_iter()
        .enumerate()
        .map(|(i, position_x)| {
            let position_y = if config.lateral_spread > 0.0 {
                rng.random_range(-config.lateral_spread..=config.lateral_spread)
            } else {
                0.0
            };
            let speed = if config.speed_max > config.speed_min {
                rng.random_range(config.speed_min..=config.speed_max)
            } else {
                config.speed_min
            };
            let packet_error_prob = beta.sample(&mut rng).min(beta_max);
            let mean_delay = loop {
                let d = delay.sample(&mut rng);
                if d > 0.0 {
                    break d;
                }
            };
            Vehicle {
                id: i as u32 + 1,
                position_x,
                position_y,
                speed,
                packet_error_prob,
                mean_delay,
                tx_power: config.tx_power,
            }
        })
        .collect();

    Ok(Scenario {
        ego: Vehicle {
            id: 0,
            position_x: config.ego_x,
            position_y: 0.0,
            speed: 0.0,
            packet_error_prob: 0.0,
            mean_delay: 1.0 / config.mean_delay_rate,
            tx_power: config.tx_power,
        },
        candidates,
        camera: config.camera.clone(),
        environment: Environment {
            visibility_threshold: config.visibility_threshold,
            road_angle: config.road_angle,
            decay_rate: config.decay_rate,
            range_horizon: hi + config.visibility_threshold,
        },
        comms: config.comms.clone(),
        max_helpers: config.max_helpers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationCode {
    CandidatesUnsorted,
    CandidateBehindEgo,
    BetaOutOfRange,
    NonpositiveMeanDelay,
    NegativeSpeed,
    NegativeTxPower,
    MaxHelpersZero,
    MaxHelpersExceedsCandidates,
    NoCandidates,
    HorizonTooSmall,
    CameraParameterNonpositive,
    VisibilityNonpositive,
    DecayRateNonpositive,
    RbCountZero,
    RbWidthNot180k,
    TotalPowerNonpositive,
    DelayThresholdNonpositive,
    ChannelRateNonpositive,
    NonFiniteValue,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        use ViolationCode::*;
        match self {
            CandidatesUnsorted => "candidates_unsorted",
            CandidateBehindEgo => "candidate_behind_ego",
            BetaOutOfRange => "beta_out_of_range",
            NonpositiveMeanDelay => "nonpositive_mean_delay",
            NegativeSpeed => "negative_speed",
            NegativeTxPower => "negative_tx_power",
            MaxHelpersZero => "max_helpers_zero",
            MaxHelpersExceedsCandidates => "max_helpers_exceeds_candidates",
            NoCandidates => "no_candidates",
            HorizonTooSmall => "horizon_too_small",
            CameraParameterNonpositive => "camera_parameter_nonpositive",
            VisibilityNonpositive => "visibility_nonpositive",
            DecayRateNonpositive => "decay_rate_nonpositive",
            RbCountZero => "rb_count_zero",
            RbWidthNot180k => "rb_width_not_180k",
            TotalPowerNonpositive => "total_power_nonpositive",
            DelayThresholdNonpositive => "delay_threshold_nonpositive",
            ChannelRateNonpositive => "channel_rate_nonpositive",
            NonFiniteValue => "non_finite_value",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

/// Checks every scenario invariant and returns all violations found.
pub fn validate_scenario(s: &Scenario) -> Result<(), Vec<Violation>> {
    use ViolationCode::*;
    let mut out = Vec::new();

    if s.candidates.is_empty() {
        out.push(Violation::new(NoCandidates, "scenario has no candidates"));
    }
    for pair in s.candidates.windows(2) {
        if !(pair[0].position_x < pair[1].position_x) {
            out.push(Violation::new(
                CandidatesUnsorted,
                format!(
                    "candidate {} at x={} is not strictly behind candidate {} at x={}",
                    pair[0].id, pair[0].position_x, pair[1].id, pair[1].position_x
                ),
            ));
        }
    }
    for v in &s.candidates {
        let fields = [
            v.position_x,
            v.position_y,
            v.speed,
            v.packet_error_prob,
            v.mean_delay,
            v.tx_power,
        ];
        if fields.iter().any(|x| !x.is_finite()) {
            out.push(Violation::new(
                NonFiniteValue,
                format!("candidate {} has a non-finite field", v.id),
            ));
            continue;
        }
        if !(v.position_x > s.ego.position_x) {
            out.push(Violation::new(
                CandidateBehindEgo,
                format!("candidate {} at x={} is not ahead of the ego", v.id, v.position_x),
            ));
        }
        if !(0.0..1.0).contains(&v.packet_error_prob) {
            out.push(Violation::new(
                BetaOutOfRange,
                format!(
                    "candidate {} has packet error probability {} outside [0, 1)",
                    v.id, v.packet_error_prob
                ),
            ));
        }
        if !(v.mean_delay > 0.0) {
            out.push(Violation::new(
                NonpositiveMeanDelay,
                format!("candidate {} has mean delay {}", v.id, v.mean_delay),
            ));
        }
        if v.speed < 0.0 {
            out.push(Violation::new(
                NegativeSpeed,
                format!("candidate {} has speed {}", v.id, v.speed),
            ));
        }
        if v.tx_power < 0.0 {
            out.push(Violation::new(
                NegativeTxPower,
                format!("candidate {} has tx power {}", v.id, v.tx_power),
            ));
        }
    }

    if s.max_helpers == 0 {
        out.push(Violation::new(MaxHelpersZero, "max_helpers must be at least 1"));
    } else if s.max_helpers > s.candidates.len() {
        out.push(Violation::new(
            MaxHelpersExceedsCandidates,
            format!(
                "max_helpers {} exceeds candidate count {}",
                s.max_helpers,
                s.candidates.len()
            ),
        ));
    }

    let c = &s.camera;
    if !(c.exposure_time > 0.0 && c.focal_length > 0.0 && c.depth > 0.0 && c.pixel_pitch > 0.0) {
        out.push(Violation::new(
            CameraParameterNonpositive,
            "exposure_time, focal_length, depth and pixel_pitch must be positive",
        ));
    }

    let env = &s.environment;
    if !(env.visibility_threshold > 0.0) {
        out.push(Violation::new(
            VisibilityNonpositive,
            format!("visibility threshold {}", env.visibility_threshold),
        ));
    }
    if !(env.decay_rate > 0.0) {
        out.push(Violation::new(
            DecayRateNonpositive,
            format!("decay rate {}", env.decay_rate),
        ));
    }
    if let Some(last) = s.candidates.last() {
        let needed = last.position_x + env.visibility_threshold;
        if !(env.range_horizon >= needed) {
            out.push(Violation::new(
                HorizonTooSmall,
                format!("range horizon {} is below {needed}", env.range_horizon),
            ));
        }
    }

    let comms = &s.comms;
    if comms.total_rb_count == 0 {
        out.push(Violation::new(RbCountZero, "total_rb_count must be at least 1"));
    }
    if comms.rb_width != RB_WIDTH_HZ {
        out.push(Violation::new(
            RbWidthNot180k,
            format!("rb_width {} Hz, expected {RB_WIDTH_HZ}", comms.rb_width),
        ));
    }
    if !(comms.total_power > 0.0) {
        out.push(Violation::new(
            TotalPowerNonpositive,
            format!("total power {}", comms.total_power),
        ));
    }
    if !(comms.delay_threshold > 0.0) {
        out.push(Violation::new(
            DelayThresholdNonpositive,
            format!("delay threshold {}", comms.delay_threshold),
        ));
    }
    if !(comms.channel_rate > 0.0) {
        out.push(Violation::new(
            ChannelRateNonpositive,
            format!("channel rate {}", comms.channel_rate),
        ));
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
