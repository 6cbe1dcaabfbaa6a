use serde::{Deserialize, Serialize};

use crate::timeline::{ActionTimeline, NUM_ACTIONS};

/// Instance durations of one action class, in frames.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub durations: Vec<usize>,
}

impl ClassStats {
    pub fn count(&self) -> usize {
        self.durations.len()
    }

    pub fn cumulative_frames(&self) -> usize {
        self.durations.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    pub fps: f64,
    pub total_frames: usize,
    pub classes: [ClassStats; NUM_ACTIONS],
}

impl ActionStats {
    pub fn count(&self, class_id: u8) -> usize {
        self.classes[class_id as usize].count()
    }

    pub fn durations_s(&self, class_id: u8) -> Vec<f64> {
        self.classes[class_id as usize].durations.iter().map(|&d| d as f64 / self.fps).collect()
    }

    pub fn cumulative_s(&self, class_id: u8) -> f64 {
        self.classes[class_id as usize].cumulative_frames() as f64 / self.fps
    }

    pub fn total_s(&self) -> f64 {
        self.total_frames as f64 / self.fps
    }
}

pub fn action_stats(t: &ActionTimeline) -> ActionStats {
    let mut classes: [ClassStats; NUM_ACTIONS] = Default::default();
    for s in t.segments() {
        classes[s.class_id as usize].durations.push(s.len());
    }
    ActionStats { fps: t.fps(), total_frames: t.len(), classes }
}
