//! Perception-side objectives over a selection of helpers: the
//! proximity-weighted visual range each helper adds, and the motion blur its
//! camera suffers.
//!
//! Each candidate `i` sees a stretch of road starting at its own position and
//! running for `L_i = min(T, x_{i+1} - x_i)` meters, where `T` is the
//! weather-limited visibility and the next vehicle ahead occludes the rest.
//! The farthest candidate sees a full `T`. The visual-range score weights
//! each point of that stretch by `exp(-a x)` so that road close to the ego
//! counts more:
//!
//! ```text
//! f1(alpha) = sum_i alpha_i * (exp(-a * start_i) - exp(-a * (start_i + L_i))) / a
//! ```
//!
//! which is the exact integral of the weighted pulse train. Because pulses
//! come from consecutive sorted positions they never overlap, so `f1` is
//! additive over the selection.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("selection has {got} entries but the scenario has {expected} candidates")]
    LengthMismatch { expected: usize, got: usize },
    #[error("candidate index {index} out of range for {len} candidates")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("decay rate must be positive, got {0}")]
    NonpositiveDecay(f64),
    #[error("motion blur denominator vanishes for candidate {index}")]
    ZeroBlurDenominator { index: usize },
}

/// Binary inclusion mask over the candidate list.
///
/// Masks are ordered by comparing their lists of selected indices
/// lexicographically, so `{0}` < `{0, 1}` < `{1}`. The smallest mask in this
/// order is the tie-break winner everywhere in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionVector {
    mask: Vec<bool>,
}

impl SelectionVector {
    pub fn empty(n: usize) -> Self {
        Self {
            mask: vec![false; n],
        }
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Self {
        let mut mask = vec![false; n];
        for &i in indices {
            mask[i] = true;
        }
        Self { mask }
    }

    /// Bit `i` of `bits` selects candidate `i`.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        Self {
            mask: (0..n).map(|i| bits >> i & 1 == 1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_selected(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.mask[i] = value;
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    /// `true` when the mask fits the scenario and selects at most `max` helpers.
    pub fn is_feasible(&self, n: usize, max: usize) -> bool {
        self.len() == n && self.count() <= max
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<(), ObjectiveError> {
        if self.len() == n {
            Ok(())
        } else {
            Err(ObjectiveError::LengthMismatch {
                expected: n,
                got: self.len(),
            })
        }
    }
}

impl Ord for SelectionVector {
    fn cmp(&self, other: &Self) -> Ordering {
        self.indices()
            .cmp(other.indices())
            .then_with(|| self.len().cmp(&other.len()))
    }
}

impl PartialOrd for SelectionVector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SelectionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.mask {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Road interval seen by one candidate, in meters from the ego.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub start: f64,
    pub length: f64,
}

impl Pulse {
    pub fn end(&self) -> f64 {
        self.start + self.length
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.start && x < self.end()
    }

    /// `∫ exp(-a x)` over the pulse.
    pub fn weighted_length(&self, decay_rate: f64) -> f64 {
        ((-decay_rate * self.start).exp() - (-decay_rate * self.end()).exp()) / decay_rate
    }
}

/// Distance of `x` from the ego along the road direction.
fn projected(s: &Scenario, x: f64) -> f64 {
    let d = x - s.ego.position_x;
    let theta = s.environment.road_angle;
    if theta == 0.0 {
        d
    } else {
        d * theta.cos()
    }
}

/// Visual-range pulse of candidate `index`.
pub fn pulse_for(index: usize, s: &Scenario) -> Result<Pulse, ObjectiveError> {
    let n = s.candidates.len();
    if index >= n {
        return Err(ObjectiveError::IndexOutOfRange { index, len: n });
    }
    let threshold = s.environment.visibility_threshold;
    let start = projected(s, s.candidates[index].position_x);
    let length = match s.candidates.get(index + 1) {
        Some(next) => threshold.min(projected(s, next.position_x) - start),
        None => threshold,
    };
    Ok(Pulse {
        start,
        length: length.max(0.0),
    })
}

/// The ego's own view: from its position to the first candidate, capped at
/// the visibility threshold.
pub fn ego_pulse(s: &Scenario) -> Pulse {
    let threshold = s.environment.visibility_threshold;
    let length = match s.candidates.first() {
        Some(first) => threshold.min(projected(s, first.position_x)),
        None => threshold,
    };
    Pulse {
        start: 0.0,
        length: length.max(0.0),
    }
}

pub fn pulses(s: &Scenario) -> Vec<Pulse> {
    (0..s.candidates.len())
        .map(|i| pulse_for(i, s).expect("index in range"))
        .collect()
}

/// Proximity-weighted augmented visual range of the selected helpers.
pub fn f1_visual_range(alpha: &SelectionVector, s: &Scenario) -> Result<f64, ObjectiveError> {
    alpha.check_len(s.candidates.len())?;
    let a = s.environment.decay_rate;
    if !(a > 0.0) {
        return Err(ObjectiveError::NonpositiveDecay(a));
    }
    let mut total = 0.0;
    for i in alpha.indices() {
        total += pulse_for(i, s)?.weighted_length(a);
    }
    Ok(total)
}

/// Motion blur, in pixels, of one vehicle's camera at `speed`.
pub fn blur_px(speed: f64, camera: &crate::scenario::CameraModel) -> Option<f64> {
    let c = camera;
    let travel = speed * c.exposure_time;
    let (sin, cos) = c.motion_angle.sin_cos();
    let denominator = travel * c.ccd_pixel_size * sin + c.depth * c.pixel_pitch;
    if denominator == 0.0 {
        return None;
    }
    Some(travel * (c.focal_length * cos - c.ccd_pixel_size * c.object_start_px * sin) / denominator)
}

/// Summed motion blur of the selected helpers.
pub fn f2_motion_blur(alpha: &SelectionVector, s: &Scenario) -> Result<f64, ObjectiveError> {
    alpha.check_len(s.candidates.len())?;
    let mut total = 0.0;
    for i in alpha.indices() {
        total += blur_px(s.candidates[i].speed, &s.camera)
            .ok_or(ObjectiveError::ZeroBlurDenominator { index: i })?;
    }
    Ok(total)
}
