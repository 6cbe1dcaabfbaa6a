//! Scripted detection streams with known ground truth.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::types::{BBox, Detection, TrackOutput};
use crate::error::{Error, Result};

/// Frames `[start, start + len)` in which `object` is not detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub object: u64,
    pub start: u64,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub frames: u64,
    pub objects: usize,
    pub width: f64,
    pub height: f64,
    pub box_size: (f64, f64),
    /// Probability that a detection reports the partner instrument class.
    pub flip_prob: f64,
    /// Standard deviation of detection box jitter in pixels.
    pub jitter: f64,
    /// Probability that a detection is missing.
    pub dropout: f64,
    pub gaps: Vec<Gap>,
    pub min_confidence: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            frames: 1000,
            objects: 2,
            width: 640.0,
            height: 480.0,
            box_size: (60.0, 24.0),
            flip_prob: 0.0,
            jitter: 0.0,
            dropout: 0.0,
            gaps: Vec::new(),
            min_confidence: 0.6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthBox {
    pub frame: u64,
    pub object_id: u64,
    #[serde(rename = "class")]
    pub class_id: u8,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub detections: Vec<Detection>,
    pub truth: Vec<TruthBox>,
    pub classes: BTreeMap<u64, u8>,
}

/// The visually similar partner instrument that a detector confuses.
pub fn partner_class(class_id: u8) -> u8 {
    class_id ^ 1
}

/// Object `i` sweeps a slow ellipse inside its own vertical strip of the
/// field, so objects never overlap.
pub fn object_box(cfg: &ScenarioConfig, object: u64, frame: u64) -> BBox {
    let strip = cfg.width / cfg.objects as f64;
    let cx0 = strip * (object as f64 + 0.5);
    let cy0 = cfg.height / 2.0;
    let ax = (strip / 2.0 - cfg.box_size.0).max(0.0) * 0.6;
    let ay = (cfg.height / 2.0 - cfg.box_size.1) * 0.4;
    let period = 400.0 + 70.0 * object as f64;
    let phase = std::f64::consts::TAU * frame as f64 / period + object as f64;
    let (cx, cy) = (cx0 + ax * phase.cos(), cy0 + ay * (2.0 * phase).sin());
    BBox::new(cx - cfg.box_size.0 / 2.0, cy - cfg.box_size.1 / 2.0, cfg.box_size.0, cfg.box_size.1)
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    if cfg.objects == 0 || cfg.frames == 0 {
        return Err(Error::Config("scenario needs at least one object and one frame".into()));
    }
    if ![cfg.flip_prob, cfg.min_confidence, cfg.dropout].iter().all(|p| (0.0..=1.0).contains(p)) {
        return Err(Error::Config("probabilities must lie in [0, 1]".into()));
    }
    let jitter = Normal::new(0.0, cfg.jitter.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let classes: BTreeMap<u64, u8> = (0..cfg.objects as u64).map(|o| (o, (o % 4) as u8)).collect();
    let mut detections = Vec::new();
    let mut truth = Vec::new();
    for frame in 0..cfg.frames {
        for (&object, &class_id) in &classes {
            let bbox = object_box(cfg, object, frame);
            truth.push(TruthBox { frame, object_id: object, class_id, bbox });
            // draw every variate so gaps do not shift the random stream
            let flip = rng.random_bool(cfg.flip_prob);
            let confidence = rng.random_range(cfg.min_confidence..=1.0);
            let (jx, jy) = (jitter.sample(&mut rng), jitter.sample(&mut rng));
            let dropped = rng.random_bool(cfg.dropout);
            if dropped || cfg.gaps.iter().any(|g| g.object == object && (g.start..g.start + g.len).contains(&frame)) {
                continue;
            }
            detections.push(Detection {
                frame,
                bbox: bbox.translate(jx, jy),
                class_id: if flip { partner_class(class_id) } else { class_id },
                confidence,
                object_id: Some(object),
            });
        }
    }
    Ok(Scenario { detections, truth, classes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    /// Outputs tied to a ground-truth object through their detection.
    pub matched_outputs: usize,
    pub label_errors: usize,
    pub label_error_rate: f64,
    /// Distinct track ids seen per ground-truth object.
    pub fragmentation: BTreeMap<u64, usize>,
    /// Frames where an object's track id differs from its previous one.
    pub id_switches: usize,
    pub tracks: usize,
}

/// Score tracker outputs against the scenario that produced `detections`.
pub fn summarize(outputs: &[TrackOutput], detections: &[Detection], classes: &BTreeMap<u64, u8>) -> TrackingSummary {
    let mut per_frame: BTreeMap<u64, Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        per_frame.entry(d.frame).or_default().push(d);
    }
    let mut ids: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    let mut last_id: BTreeMap<u64, u64> = BTreeMap::new();
    let (mut matched, mut errors, mut switches) = (0, 0, 0);
    for o in outputs {
        let Some(di) = o.detection else { continue };
        let Some(object) = per_frame.get(&o.frame).and_then(|v| v.get(di)).and_then(|d| d.object_id) else {
            continue;
        };
        matched += 1;
        if classes.get(&object) != Some(&o.class_id) {
            errors += 1;
        }
        ids.entry(object).or_default().insert(o.track_id);
        if let Some(prev) = last_id.insert(object, o.track_id) {
            switches += (prev != o.track_id) as usize;
        }
    }
    let tracks: BTreeSet<u64> = outputs.iter().map(|o| o.track_id).collect();
    TrackingSummary {
        matched_outputs: matched,
        label_errors: errors,
        label_error_rate: if matched == 0 { 0.0 } else { errors as f64 / matched as f64 },
        fragmentation: ids.into_iter().map(|(k, v)| (k, v.len())).collect(),
        id_switches: switches,
        tracks: tracks.len(),
    }
}
