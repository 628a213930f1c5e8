//! Late fusion of per-vehicle detections.
//!
//! Boxes live in one shared image plane, so the ego and every helper can be
//! scored against the same ground truth. Fusion keeps, for every
//! ground-truth object, whichever source localized it best. Because that
//! choice needs the ground truth, it is an evaluation-time oracle;
//! [`fuse_confidence_max`] is the variant that only looks at detector
//! confidence.
//!
//! Packet loss is applied to whole detections: [`degrade`] drops each
//! predicted box independently with the link's packet error probability.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::{blur_px, ego_pulse, pulse_for, Pulse};
use crate::rng::{stream_rng, streams};
use crate::scenario::{Scenario, Vehicle};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("degenerate box [{x_min}, {y_min}, {x_max}, {y_max}]")]
    DegenerateBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("ground-truth box without an object id in vehicle {vehicle_id}")]
    UnlabeledGroundTruth { vehicle_id: u32 },
    #[error("object id {object_id} appears twice in the ground truth of vehicle {vehicle_id}")]
    DuplicateObject { vehicle_id: u32, object_id: u32 },
    #[error("prediction of vehicle {vehicle_id} refers to unknown object {object_id}")]
    UnknownObject { vehicle_id: u32, object_id: u32 },
    #[error("fused sources disagree on the ground-truth objects")]
    GroundTruthMismatch,
    #[error("metrics are undefined without ground-truth objects")]
    EmptyGroundTruth,
    #[error("iou threshold {0} outside (0, 1)")]
    Threshold(f64),
    #[error("drop probability {0} outside [0, 1)")]
    DropProbability(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("detections i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Axis-aligned box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub confidence: f64,
    /// Ground-truth object this box belongs to; `None` marks a false
    /// positive (or, for imported data, an unlabeled prediction).
    pub object_id: Option<u32>,
}

impl BoundingBox {
    pub fn new(
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        confidence: f64,
        object_id: Option<u32>,
    ) -> Result<Self, FusionError> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
            confidence,
            object_id,
        };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<(), FusionError> {
        // Written so that NaN coordinates fail too.
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(FusionError::DegenerateBox {
                x_min: self.x_min,
                y_min: self.y_min,
                x_max: self.x_max,
                y_max: self.y_max,
            });
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(FusionError::Confidence(self.confidence));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    /// Total order used to make fusion output independent of input order.
    fn total_cmp(&self, other: &Self) -> Ordering {
        self.x_min
            .total_cmp(&other.x_min)
            .then(self.y_min.total_cmp(&other.y_min))
            .then(self.x_max.total_cmp(&other.x_max))
            .then(self.y_max.total_cmp(&other.y_max))
            .then(self.confidence.total_cmp(&other.confidence))
            .then(self.object_id.cmp(&other.object_id))
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64, FusionError> {
    a.check()?;
    b.check()?;
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        return Ok(0.0);
    }
    let inter = w * h;
    Ok(inter / (a.area() + b.area() - inter))
}

/// What one vehicle saw in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub vehicle_id: u32,
    pub ground_truth: Vec<BoundingBox>,
    pub predictions: Vec<BoundingBox>,
}

impl DetectionSet {
    /// Boxes are well formed, ground-truth ids are present and unique, and
    /// every labeled prediction refers to a ground-truth object.
    pub fn check(&self) -> Result<(), FusionError> {
        let ids = self.object_ids()?;
        for p in &self.predictions {
            p.check()?;
            if let Some(id) = p.object_id {
                if !ids.contains(&id) {
                    return Err(FusionError::UnknownObject {
                        vehicle_id: self.vehicle_id,
                        object_id: id,
                    });
                }
            }
        }
        Ok(())
    }

    fn object_ids(&self) -> Result<BTreeSet<u32>, FusionError> {
        let mut ids = BTreeSet::new();
        for g in &self.ground_truth {
            g.check()?;
            let id = g.object_id.ok_or(FusionError::UnlabeledGroundTruth {
                vehicle_id: self.vehicle_id,
            })?;
            if !ids.insert(id) {
                return Err(FusionError::DuplicateObject {
                    vehicle_id: self.vehicle_id,
                    object_id: id,
                });
            }
        }
        Ok(ids)
    }
}

/// How predictions are paired with ground-truth objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Use the prediction's `object_id`; unlabeled boxes are false positives.
    #[default]
    ObjectId,
    /// Ignore labels and pair boxes one to one, highest IoU first.
    GreedyIou,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectScore {
    pub object_id: u32,
    /// Best IoU any kept prediction achieves on this object; 0 if missed.
    pub iou: f64,
    /// The prediction achieving it.
    pub best: Option<BoundingBox>,
}

/// Per-object scores of one frame, from one source or several fused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFrame {
    /// One entry per ground-truth object, ascending `object_id`.
    pub scores: Vec<ObjectScore>,
    /// Predictions matched to no object, sorted and deduplicated.
    pub false_positives: Vec<BoundingBox>,
}

impl ScoredFrame {
    pub fn object_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.scores.iter().map(|s| s.object_id)
    }

    pub fn ious(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.iou).collect()
    }

    /// Number of boxes the fused output would report.
    pub fn predicted_count(&self) -> usize {
        self.scores.iter().filter(|s| s.best.is_some()).count() + self.false_positives.len()
    }
}

fn better(a: &ObjectScore, b: &ObjectScore) -> bool {
    match a.iou.total_cmp(&b.iou) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match (&a.best, &b.best) {
            (Some(x), Some(y)) => x.total_cmp(y) == Ordering::Less,
            (Some(_), None) => true,
            _ => false,
        },
    }
}

fn sorted_unique(mut boxes: Vec<BoundingBox>) -> Vec<BoundingBox> {
    boxes.sort_by(|a, b| a.total_cmp(b));
    boxes.dedup_by(|a, b| a.total_cmp(b) == Ordering::Equal);
    boxes
}

/// Per-object best IoU of a single source.
pub fn score(set: &DetectionSet, matching: Matching) -> Result<ScoredFrame, FusionError> {
    set.check()?;
    let gt: BTreeMap<u32, &BoundingBox> = set
        .ground_truth
        .iter()
        .map(|g| (g.object_id.expect("checked"), g))
        .collect();
    let mut best: BTreeMap<u32, ObjectScore> = gt
        .keys()
        .map(|&id| {
            (
                id,
                ObjectScore {
                    object_id: id,
                    iou: 0.0,
                    best: None,
                },
            )
        })
        .collect();
    let mut false_positives = Vec::new();

    match matching {
        Matching::ObjectId => {
            for p in &set.predictions {
                let Some(id) = p.object_id else {
                    false_positives.push(*p);
                    continue;
                };
                let candidate = ObjectScore {
                    object_id: id,
                    iou: iou(p, gt[&id])?,
                    best: Some(*p),
                };
                let slot = best.get_mut(&id).expect("checked");
                if better(&candidate, slot) {
                    *slot = candidate;
                }
            }
        }
        Matching::GreedyIou => {
            let mut pairs = Vec::new();
            for (pi, p) in set.predictions.iter().enumerate() {
                for (&id, g) in &gt {
                    let v = iou(p, g)?;
                    if v > 0.0 {
                        pairs.push((v, id, pi));
                    }
                }
            }
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut used_pred = vec![false; set.predictions.len()];
            for (v, id, pi) in pairs {
                if used_pred[pi] || best[&id].best.is_some() {
                    continue;
                }
                used_pred[pi] = true;
                best.insert(
                    id,
                    ObjectScore {
                        object_id: id,
                        iou: v,
                        best: Some(set.predictions[pi]),
                    },
                );
            }
            false_positives.extend(
                set.predictions
                    .iter()
                    .zip(&used_pred)
                    .filter(|(_, &u)| !u)
                    .map(|(p, _)| *p),
            );
        }
    }

    Ok(ScoredFrame {
        scores: best.into_values().collect(),
        false_positives: sorted_unique(false_positives),
    })
}

/// Merges two scored frames by keeping the better score per object.
pub fn fuse_scored(a: &ScoredFrame, b: &ScoredFrame) -> Result<ScoredFrame, FusionError> {
    if !a.object_ids().eq(b.object_ids()) {
        return Err(FusionError::GroundTruthMismatch);
    }
    let scores = a
        .scores
        .iter()
        .zip(&b.scores)
        .map(|(x, y)| if better(y, x) { *y } else { *x })
        .collect();
    let mut fps = a.false_positives.clone();
    fps.extend_from_slice(&b.false_positives);
    Ok(ScoredFrame {
        scores,
        false_positives: sorted_unique(fps),
    })
}

/// Per-object `max(IoU_ego, IoU_helper)`.
pub fn fuse_iou_max(ego: &DetectionSet, helper: &DetectionSet) -> Result<ScoredFrame, FusionError> {
    fuse_scored(&score(ego, Matching::ObjectId)?, &score(helper, Matching::ObjectId)?)
}

/// Fuses any number of sources; the ego comes first.
pub fn fuse_all<'a>(sets: impl IntoIterator<Item = &'a DetectionSet>) -> Result<Option<ScoredFrame>, FusionError> {
    let mut acc: Option<ScoredFrame> = None;
    for set in sets {
        let s = score(set, Matching::ObjectId)?;
        acc = Some(match acc {
            None => s,
            Some(prev) => fuse_scored(&prev, &s)?,
        });
    }
    Ok(acc)
}

/// Deployable variant: per object, keep the box its detector was more
/// confident about, and report that box's IoU.
pub fn fuse_confidence_max(ego: &DetectionSet, helper: &DetectionSet) -> Result<ScoredFrame, FusionError> {
    let a = score(ego, Matching::ObjectId)?;
    let b = score(helper, Matching::ObjectId)?;
    if !a.object_ids().eq(b.object_ids()) {
        return Err(FusionError::GroundTruthMismatch);
    }
    let conf = |s: &ObjectScore| s.best.map(|b| b.confidence);
    let scores = a
        .scores
        .iter()
        .zip(&b.scores)
        .map(|(x, y)| match (conf(x), conf(y)) {
            (Some(cx), Some(cy)) => match cx.total_cmp(&cy) {
                Ordering::Greater => *x,
                Ordering::Less => *y,
                Ordering::Equal => if better(y, x) { *y } else { *x },
            },
            (None, Some(_)) => *y,
            _ => *x,
        })
        .collect();
    let mut fps = a.false_positives;
    fps.extend(b.false_positives);
    Ok(ScoredFrame {
        scores,
        false_positives: sorted_unique(fps),
    })
}

/// Drops each prediction independently with probability `beta`.
pub fn degrade<R: Rng + ?Sized>(set: &DetectionSet, beta: f64, rng: &mut R) -> Result<DetectionSet, FusionError> {
    if !(0.0..1.0).contains(&beta) {
        return Err(FusionError::DropProbability(beta));
    }
    let predictions = set
        .predictions
        .iter()
        .filter(|_| !rng.random_bool(beta))
        .copied()
        .collect();
    Ok(DetectionSet {
        vehicle_id: set.vehicle_id,
        ground_truth: set.ground_truth.clone(),
        predictions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_iou: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Detection quality of a scored frame. An object counts as found when its
/// IoU reaches `iou_threshold`; precision is over every reported box, so
/// false positives and poor localizations both lower it.
pub fn metrics(frame: &ScoredFrame, iou_threshold: f64) -> Result<Metrics, FusionError> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(FusionError::Threshold(iou_threshold));
    }
    let total = frame.scores.len();
    if total == 0 {
        return Err(FusionError::EmptyGroundTruth);
    }
    let mean_iou = frame.scores.iter().map(|s| s.iou).sum::<f64>() / total as f64;
    let hits = frame.scores.iter().filter(|s| s.iou >= iou_threshold).count();
    let recall = hits as f64 / total as f64;
    let reported = frame.predicted_count();
    let precision = if reported == 0 { 0.0 } else { hits as f64 / reported as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        mean_iou,
        recall,
        precision,
        f1,
    })
}

/// One line of the detection exchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub vehicle_id: u32,
    pub kind: RecordKind,
    pub object_id: Option<u32>,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Gt,
    Pred,
}

/// Writes sets as one JSON object per line, ground truth before
/// predictions within each set.
pub fn write_detections<W: Write>(sets: &[DetectionSet], mut out: W) -> Result<(), FusionError> {
    for set in sets {
        let boxes = set
            .ground_truth
            .iter()
            .map(|b| (RecordKind::Gt, b))
            .chain(set.predictions.iter().map(|b| (RecordKind::Pred, b)));
        for (kind, b) in boxes {
            let rec = DetectionRecord {
                vehicle_id: set.vehicle_id,
                kind,
                object_id: b.object_id,
                bbox: [b.x_min, b.y_min, b.x_max, b.y_max],
                confidence: b.confidence,
            };
            let line = serde_json::to_string(&rec).expect("records always serialize");
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// Reads the line format back, grouping by vehicle in order of first
/// appearance. Blank lines are skipped. Every set is checked.
pub fn read_detections<R: BufRead>(input: R) -> Result<Vec<DetectionSet>, FusionError> {
    let mut sets: Vec<DetectionSet> = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| FusionError::Parse { line: n + 1, message };
        let rec: DetectionRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let [x_min, y_min, x_max, y_max] = rec.bbox;
        let b = BoundingBox::new(x_min, y_min, x_max, y_max, rec.confidence, rec.object_id)
            .map_err(|e| parse_err(e.to_string()))?;
        let pos = match sets.iter().position(|s| s.vehicle_id == rec.vehicle_id) {
            Some(p) => p,
            None => {
                sets.push(DetectionSet {
                    vehicle_id: rec.vehicle_id,
                    ground_truth: Vec::new(),
                    predictions: Vec::new(),
                });
                sets.len() - 1
            }
        };
        match rec.kind {
            RecordKind::Gt => sets[pos].ground_truth.push(b),
            RecordKind::Pred => sets[pos].predictions.push(b),
        }
    }
    for s in &sets {
        s.check()?;
    }
    Ok(sets)
}

/// Knobs of the synthetic detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    /// Pedestrians per frame, spread uniformly over the covered stretch of
    /// road.
    pub pedestrians: usize,
    pub pixels_per_meter: f64,
    pub pedestrian_width_m: f64,
    pub pedestrian_height_m: f64,
    /// Localization quality halves every `ln 2 / quality_decay` meters
    /// between camera and pedestrian.
    pub quality_decay: f64,
    /// Blur, in pixels, at which quality is halved.
    pub blur_half_px: f64,
    /// Quality is multiplied by a uniform factor in `[1 - jitter, 1]`.
    pub jitter: f64,
    /// Probability that a vehicle reports one spurious box.
    pub false_positive_rate: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            pedestrians: 30,
            pixels_per_meter: 10.0,
            pedestrian_width_m: 0.8,
            pedestrian_height_m: 1.8,
            quality_decay: 0.01,
            blur_half_px: 15.0,
            jitter: 0.1,
            false_positive_rate: 0.1,
        }
    }
}

impl FixtureConfig {
    pub fn check(&self) -> Result<(), String> {
        let positive = [
            ("pixels_per_meter", self.pixels_per_meter),
            ("pedestrian_width_m", self.pedestrian_width_m),
            ("pedestrian_height_m", self.pedestrian_height_m),
            ("blur_half_px", self.blur_half_px),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(self.quality_decay >= 0.0) {
            return Err("quality_decay must be nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err("jitter must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.false_positive_rate) {
            return Err("false_positive_rate must lie in [0, 1]".into());
        }
        if self.pedestrians == 0 {
            return Err("pedestrians must be at least 1".into());
        }
        Ok(())
    }
}

/// Synthetic detections of one frame: the ego's view and one set per
/// candidate, in candidate order.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub ego: DetectionSet,
    pub helpers: Vec<DetectionSet>,
}

/// Builds a frame for `s`. Pedestrians stand on the stretch of road any
/// vehicle can see; each vehicle detects exactly those inside its own view,
/// with a box that shrinks around the truth as distance and blur grow.
pub fn synthesize_frame(s: &Scenario, cfg: &FixtureConfig, seed: u64) -> Result<Frame, String> {
    cfg.check()?;
    let mut rng = stream_rng(seed, streams::DETECTIONS);
    let views: Vec<Pulse> = std::iter::once(ego_pulse(s))
        .chain((0..s.n_candidates()).map(|i| pulse_for(i, s).expect("index in range")))
        .collect();
    let far = views.iter().map(Pulse::end).fold(0.0, f64::max);
    let lateral = 3.5;

    let ppm = cfg.pixels_per_meter;
    let mut truth = Vec::with_capacity(cfg.pedestrians);
    let mut spots = Vec::with_capacity(cfg.pedestrians);
    for k in 0..cfg.pedestrians {
        let along: f64 = rng.random_range(0.0..far);
        let across: f64 = rng.random_range(-lateral..lateral);
        let (cx, cy) = (along * ppm, across * ppm);
        let (hw, hh) = (cfg.pedestrian_width_m * ppm / 2.0, cfg.pedestrian_height_m * ppm / 2.0);
        truth.push(BoundingBox {
            x_min: cx - hw,
            y_min: cy - hh,
            x_max: cx + hw,
            y_max: cy + hh,
            confidence: 1.0,
            object_id: Some(k as u32),
        });
        spots.push(along);
    }

    let mut observe = |vehicle: &Vehicle, view: &Pulse| -> Result<DetectionSet, String> {
        let blur = blur_px(vehicle.speed, &s.camera).ok_or("blur undefined for this camera")?;
        let blur_factor = 1.0 / (1.0 + blur.abs() / cfg.blur_half_px);
        let mut predictions = Vec::new();
        for (g, &along) in truth.iter().zip(&spots) {
            if !view.contains(along) {
                continue;
            }
            let noise = 1.0 - cfg.jitter * rng.random::<f64>();
            let quality = (-cfg.quality_decay * (along - view.start)).exp() * blur_factor * noise;
            // A box shrunk by `r` around the true center has IoU `r²`.
            let r = quality.sqrt();
            let (cx, cy) = g.center();
            let hw = (g.x_max - g.x_min) * r / 2.0;
            let hh = (g.y_max - g.y_min) * r / 2.0;
            predictions.push(BoundingBox {
                x_min: cx - hw,
                y_min: cy - hh,
                x_max: cx + hw,
                y_max: cy + hh,
                confidence: quality,
                object_id: g.object_id,
            });
        }
        if rng.random_bool(cfg.false_positive_rate) && view.length > 0.0 {
            let along = view.start + rng.random::<f64>() * view.length;
            let across: f64 = rng.random_range(-lateral..lateral);
            let (cx, cy) = (along * ppm, across * ppm);
            let (hw, hh) = (cfg.pedestrian_width_m * ppm / 2.0, cfg.pedestrian_height_m * ppm / 2.0);
            predictions.push(BoundingBox {
                x_min: cx - hw,
                y_min: cy - hh,
                x_max: cx + hw,
                y_max: cy + hh,
                confidence: rng.random_range(0.05..0.5),
                object_id: None,
            });
        }
        Ok(DetectionSet {
            vehicle_id: vehicle.id,
            ground_truth: truth.clone(),
            predictions,
        })
    };

    let ego = observe(&s.ego, &views[0])?;
    let helpers = s
        .candidates
        .iter()
        .zip(&views[1..])
        .map(|(v, view)| observe(v, view))
        .collect::<Result<_, _>>()?;
    Ok(Frame { ego, helpers })
}
