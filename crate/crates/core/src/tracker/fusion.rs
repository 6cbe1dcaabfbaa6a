use serde::{Deserialize, Serialize};

use super::types::{BBox, Detection, HistoryEntry, Source, TrackOutput};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub iou_gate: f64,
    pub confidence_gate: f64,
    pub max_age: u64,
    pub reassign_max_gap: u64,
    /// Weight of shape similarity against time proximity when reassigning.
    pub appearance_weight: f64,
    /// Added to the IoU of a pair whose classes agree.
    pub class_bonus: f64,
    /// Consecutive agreeing detections needed to move a class anchor.
    pub anchor_agreement: usize,
    /// Exhaustive best-total-score association instead of greedy.
    pub optimal_assignment: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            iou_gate: 0.3,
            confidence_gate: 0.5,
            max_age: 30,
            reassign_max_gap: 60,
            appearance_weight: 0.5,
            class_bonus: 0.1,
            anchor_agreement: 5,
            optimal_assignment: false,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("iou_gate", self.iou_gate), ("confidence_gate", self.confidence_gate)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        if self.max_age < 1 {
            return Err(Error::Config("max_age must be at least 1".into()));
        }
        if self.anchor_agreement < 1 {
            return Err(Error::Config("anchor_agreement must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.appearance_weight) {
            return Err(Error::Config(format!("appearance_weight {} outside [0, 1]", self.appearance_weight)));
        }
        if !(self.class_bonus >= 0.0 && self.class_bonus.is_finite()) {
            return Err(Error::Config("class_bonus must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub anchored_class: u8,
    pub bbox: BBox,
    /// Centre velocity in pixels per frame.
    pub velocity: (f64, f64),
    pub first_frame: u64,
    pub last_seen_frame: u64,
    pub state_frame: u64,
    pub history: Vec<HistoryEntry>,
    pending: Option<(u8, usize)>,
    last_measurement: (u64, BBox),
}

impl Track {
    pub fn new(track_id: u64, det: &Detection) -> Self {
        Self {
            track_id,
            anchored_class: det.class_id,
            bbox: det.bbox,
            velocity: (0.0, 0.0),
            first_frame: det.frame,
            last_seen_frame: det.frame,
            state_frame: det.frame,
            history: vec![HistoryEntry {
                frame: det.frame,
                bbox: det.bbox,
                source: Source::Detection,
            }],
            pending: None,
            last_measurement: (det.frame, det.bbox),
        }
    }

    /// Constant-velocity box at `frame`.
    pub fn predict(&self, frame: u64) -> BBox {
        let dt = frame.saturating_sub(self.state_frame) as f64;
        self.bbox.translate(self.velocity.0 * dt, self.velocity.1 * dt)
    }

    /// Last box confirmed by a detection.
    pub fn last_measured(&self) -> BBox {
        self.last_measurement.1
    }
}

/// Snap the track onto a confident, overlapping detection.
///
/// `track.bbox` must hold the prediction for the detection's frame. Returns
/// whether the rule applied; otherwise the track keeps its prediction.
pub fn refine_with_detection(track: &mut Track, det: &Detection, cfg: &FusionConfig) -> bool {
    if det.confidence < cfg.confidence_gate || track.bbox.iou(&det.bbox) < cfg.iou_gate {
        return false;
    }
    let (f0, b0) = track.last_measurement;
    if det.frame > f0 {
        let dt = (det.frame - f0) as f64;
        let (c0, c1) = (b0.center(), det.bbox.center());
        track.velocity = ((c1.0 - c0.0) / dt, (c1.1 - c0.1) / dt);
    }
    track.bbox = det.bbox;
    track.last_measurement = (det.frame, det.bbox);
    true
}

/// Keep the anchored class unless `agreement` consecutive associated
/// detections report the same different class. Returns the class to emit.
pub fn anchor_class_label(track: &mut Track, det_class: u8, agreement: usize) -> u8 {
    if det_class == track.anchored_class {
        track.pending = None;
        return track.anchored_class;
    }
    let count = match track.pending {
        Some((c, n)) if c == det_class => n + 1,
        _ => 1,
    };
    if count >= agreement {
        track.anchored_class = det_class;
        track.pending = None;
    } else {
        track.pending = Some((det_class, count));
    }
    track.anchored_class
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Shape similarity in `[0, 1]`: descriptor cosine times area ratio.
pub fn appearance_similarity(a: &BBox, b: &BBox) -> f64 {
    let ratio = a.area().min(b.area()) / a.area().max(b.area());
    cosine(&a.descriptor(), &b.descriptor()) * ratio
}

/// Frames between a candidate's last sighting and a new track's first, if
/// the candidate may donate its identity.
pub fn reassignment_gap(new_track: &Track, old: &Track, cfg: &FusionConfig) -> Option<u64> {
    if old.anchored_class != new_track.anchored_class || old.last_seen_frame >= new_track.first_frame {
        return None;
    }
    let gap = new_track.first_frame - old.last_seen_frame - 1;
    (gap <= cfg.reassign_max_gap).then_some(gap)
}

pub fn reassignment_score(new_track: &Track, old: &Track, gap: u64, cfg: &FusionConfig) -> f64 {
    let time = 1.0 - gap as f64 / (cfg.reassign_max_gap + 1) as f64;
    let look = appearance_similarity(&new_track.bbox, &old.last_measured());
    (1.0 - cfg.appearance_weight) * time + cfg.appearance_weight * look
}

/// Index of the candidate whose identity `new_track` should inherit.
pub fn reassign_identity(new_track: &Track, candidates: &[Track], cfg: &FusionConfig) -> Option<usize> {
    let mut best: Option<(f64, u64, usize)> = None;
    for (i, old) in candidates.iter().enumerate() {
        let Some(gap) = reassignment_gap(new_track, old, cfg) else { continue };
        let score = reassignment_score(new_track, old, gap, cfg);
        let better = match best {
            None => true,
            Some((s, id, _)) => score > s || (score == s && old.track_id < id),
        };
        if better {
            best = Some((score, old.track_id, i));
        }
    }
    best.map(|(_, _, i)| i)
}

fn pair_score(track: &Track, det: &Detection, cfg: &FusionConfig) -> Option<f64> {
    let iou = track.bbox.iou(&det.bbox);
    (iou >= cfg.iou_gate).then_some(iou + if det.class_id == track.anchored_class { cfg.class_bonus } else { 0.0 })
}

/// Greedy association on descending score. Returns `(track, detection)` pairs.
pub fn associate_greedy(tracks: &[Track], dets: &[Detection], cfg: &FusionConfig) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        for (di, d) in dets.iter().enumerate() {
            if let Some(s) = pair_score(t, d, cfg) {
                pairs.push((s, ti, di));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = vec![false; tracks.len()];
    let mut used_d = vec![false; dets.len()];
    let mut out = Vec::new();
    for (_, ti, di) in pairs {
        if !used_t[ti] && !used_d[di] {
            used_t[ti] = true;
            used_d[di] = true;
            out.push((ti, di));
        }
    }
    out.sort_unstable();
    out
}

/// Exhaustive association maximising the summed pair score.
pub fn associate_optimal(tracks: &[Track], dets: &[Detection], cfg: &FusionConfig) -> Vec<(usize, usize)> {
    let scores: Vec<Vec<Option<f64>>> = tracks.iter().map(|t| dets.iter().map(|d| pair_score(t, d, cfg)).collect()).collect();
    fn search(
        ti: usize,
        scores: &[Vec<Option<f64>>],
        used: &mut Vec<bool>,
        current: &mut Vec<(usize, usize)>,
        total: f64,
        best: &mut (f64, Vec<(usize, usize)>),
    ) {
        if ti == scores.len() {
            if total > best.0 {
                *best = (total, current.clone());
            }
            return;
        }
        search(ti + 1, scores, used, current, total, best);
        for di in 0..used.len() {
            if let (false, Some(s)) = (used[di], scores[ti][di]) {
                used[di] = true;
                current.push((ti, di));
                search(ti + 1, scores, used, current, total + s, best);
                current.pop();
                used[di] = false;
            }
        }
    }
    let mut best = (0.0, Vec::new());
    search(0, &scores, &mut vec![false; dets.len()], &mut Vec::new(), 0.0, &mut best);
    best.1.sort_unstable();
    best.1
}

/// Tracker state; mutate only through [`TrackerState::step`].
#[derive(Debug, Clone)]
pub struct TrackerState {
    cfg: FusionConfig,
    active: Vec<Track>,
    retired: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl TrackerState {
    pub fn new(cfg: FusionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            active: Vec::new(),
            retired: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.cfg
    }

    pub fn active(&self) -> &[Track] {
        &self.active
    }

    pub fn retired(&self) -> &[Track] {
        &self.retired
    }

    /// Advance to `frame` with that frame's detections.
    pub fn step(&mut self, frame: u64, detections: &[Detection]) -> Result<Vec<TrackOutput>> {
        if let Some(prev) = self.last_frame {
            if frame <= prev {
                return Err(Error::NonMonotonicFrame { previous: prev, got: frame });
            }
        }
        for d in detections {
            d.validate()?;
            if d.frame != frame {
                return Err(Error::InvalidArgument(format!("detection for frame {} passed at frame {frame}", d.frame)));
            }
        }
        self.last_frame = Some(frame);
        let cfg = self.cfg.clone();

        // predict
        for t in &mut self.active {
            t.bbox = t.predict(frame);
            t.state_frame = frame;
        }
        let predicted: Vec<BBox> = self.active.iter().map(|t| t.bbox).collect();

        // associate, then refine and anchor
        let pairs = if cfg.optimal_assignment {
            associate_optimal(&self.active, detections, &cfg)
        } else {
            associate_greedy(&self.active, detections, &cfg)
        };
        let mut det_of_track: Vec<Option<usize>> = vec![None; self.active.len()];
        let mut det_used = vec![false; detections.len()];
        for &(ti, di) in &pairs {
            det_of_track[ti] = Some(di);
            det_used[di] = true;
        }
        let mut sources = vec![Source::Prediction; self.active.len()];
        for (ti, t) in self.active.iter_mut().enumerate() {
            if let Some(di) = det_of_track[ti] {
                let det = &detections[di];
                anchor_class_label(t, det.class_id, cfg.anchor_agreement);
                if refine_with_detection(t, det, &cfg) {
                    sources[ti] = Source::Detection;
                }
                t.last_seen_frame = frame;
            }
            t.history.push(HistoryEntry { frame, bbox: t.bbox, source: sources[ti] });
        }
        let mut outputs: Vec<TrackOutput> = self
            .active
            .iter()
            .enumerate()
            .map(|(ti, t)| TrackOutput {
                frame,
                track_id: t.track_id,
                class_id: t.anchored_class,
                bbox: t.bbox,
                source: sources[ti],
                predicted: predicted[ti],
                detection: det_of_track[ti],
            })
            .collect();

        // spawn
        let mut spawned = Vec::new();
        for (di, d) in detections.iter().enumerate() {
            if !det_used[di] && d.confidence >= cfg.confidence_gate {
                spawned.push((di, Track::new(self.next_id, d)));
                self.next_id += 1;
            }
        }

        // retire
        let (keep, old): (Vec<Track>, Vec<Track>) = std::mem::take(&mut self.active)
            .into_iter()
            .partition(|t| frame - t.last_seen_frame <= cfg.max_age);
        self.active = keep;
        self.retired.extend(old);
        let alive: Vec<u64> = self.active.iter().map(|t| t.track_id).collect();
        outputs.retain(|o| alive.contains(&o.track_id));

        // reassign: retired tracks and active tracks that missed this frame
        for (di, mut t) in spawned {
            let mut pool: Vec<Track> = Vec::new();
            let mut origin: Vec<(bool, usize)> = Vec::new();
            for (i, r) in self.retired.iter().enumerate() {
                pool.push(r.clone());
                origin.push((false, i));
            }
            for (i, a) in self.active.iter().enumerate() {
                if a.last_seen_frame < frame {
                    pool.push(a.clone());
                    origin.push((true, i));
                }
            }
            if let Some(k) = reassign_identity(&t, &pool, &cfg) {
                let old = match origin[k] {
                    (false, i) => self.retired.remove(i),
                    (true, i) => {
                        let old = self.active.remove(i);
                        outputs.retain(|o| o.track_id != old.track_id);
                        old
                    }
                };
                t.track_id = old.track_id;
                let mut history = old.history;
                history.retain(|h| h.frame < frame);
                history.append(&mut t.history);
                t.history = history;
            }
            outputs.push(TrackOutput {
                frame,
                track_id: t.track_id,
                class_id: t.anchored_class,
                bbox: t.bbox,
                source: Source::Detection,
                predicted: t.bbox,
                detection: Some(di),
            });
            self.active.push(t);
        }
        let horizon = cfg.reassign_max_gap + 1;
        self.retired.retain(|t| frame - t.last_seen_frame <= horizon);

        self.active.sort_by_key(|t| t.track_id);
        outputs.sort_by_key(|o| o.track_id);
        Ok(outputs)
    }
}

/// Run the tracker over a detection stream, stepping every frame from 0 to
/// `frames - 1` (or the last detected frame).
pub fn track_stream(detections: &[Detection], frames: Option<u64>, cfg: &FusionConfig) -> Result<Vec<TrackOutput>> {
    let last = detections.iter().map(|d| d.frame + 1).max().unwrap_or(0);
    let total = frames.unwrap_or(last).max(last);
    let mut by_frame: Vec<Vec<Detection>> = vec![Vec::new(); total as usize];
    for d in detections {
        by_frame[d.frame as usize].push(d.clone());
    }
    let mut state = TrackerState::new(cfg.clone())?;
    let mut out = Vec::new();
    for (f, dets) in by_frame.iter().enumerate() {
        out.extend(state.step(f as u64, dets)?);
    }
    Ok(out)
}
