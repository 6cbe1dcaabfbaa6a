//! Action taxonomy, per-frame timelines and their run-length segment view.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_ACTIONS: usize = 7;

pub const ACTION_NAMES: [&str; NUM_ACTIONS] = [
    "No",
    "vessel_cutting",
    "needle_handling",
    "needle_touch_vessel",
    "needle_withdrawing",
    "knot_tying",
    "knot_cutting",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    No = 0,
    VesselCutting = 1,
    NeedleHandling = 2,
    NeedleTouchVessel = 3,
    NeedleWithdrawing = 4,
    KnotTying = 5,
    KnotCutting = 6,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::No,
        Action::VesselCutting,
        Action::NeedleHandling,
        Action::NeedleTouchVessel,
        Action::NeedleWithdrawing,
        Action::KnotTying,
        Action::KnotCutting,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self> {
        Self::ALL
            .get(id as usize)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("action id {id} out of range 0..7")))
    }

    pub fn name(self) -> &'static str {
        ACTION_NAMES[self as usize]
    }

    pub fn from_name(name: &str) -> Option<Self> {
        ACTION_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| Self::ALL[i])
    }
}

/// A maximal run of one class, inclusive frame bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub class_id: u8,
    pub start_frame: usize,
    pub end_frame: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Frame-level intersection over union with another segment.
    pub fn iou(&self, other: &Segment) -> f64 {
        let lo = self.start_frame.max(other.start_frame);
        let hi = self.end_frame.min(other.end_frame);
        if lo > hi {
            return 0.0;
        }
        let inter = (hi - lo + 1) as f64;
        inter / ((self.len() + other.len()) as f64 - inter)
    }
}

/// Per-frame class labels at a fixed frame rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTimeline {
    labels: Vec<u8>,
    fps: f64,
}

impl ActionTimeline {
    pub fn new(labels: Vec<u8>, fps: f64) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= NUM_ACTIONS) {
            return Err(Error::InvalidArgument(format!("class id {bad} out of range 0..7")));
        }
        Ok(Self { labels, fps })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn segments(&self) -> Vec<Segment> {
        encode_runs(&self.labels)
    }

    pub fn from_segments(segments: &[Segment], fps: f64) -> Result<Self> {
        Self::new(decode_runs(segments)?, fps)
    }

    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Self> {
        Self::new(labels, self.fps)
    }
}

pub fn encode_runs(labels: &[u8]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.class_id == l => seg.end_frame = i,
            _ => out.push(Segment {
                class_id: l,
                start_frame: i,
                end_frame: i,
            }),
        }
    }
    out
}

pub fn decode_runs(segments: &[Segment]) -> Result<Vec<u8>> {
    let mut labels = Vec::new();
    for seg in segments {
        if seg.start_frame != labels.len() || seg.end_frame < seg.start_frame {
            return Err(Error::InvalidArgument(format!(
                "segments are not contiguous at frame {}",
                seg.start_frame
            )));
        }
        labels.extend(std::iter::repeat_n(seg.class_id, seg.len()));
    }
    Ok(labels)
}
