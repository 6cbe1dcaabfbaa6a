//! Fusion of per-frame instrument detections into persistent tracks.
//!
//! A constant-velocity box model carries each track between detections.
//! Three corrections sit on top: confident overlapping detections overwrite
//! the predicted box, a track's class only changes after a run of agreeing
//! detections, and new tracks may inherit the identity of a recently lost
//! track of the same class.

pub mod fusion;
pub mod scenario;
pub mod types;

pub use fusion::{
    anchor_class_label, appearance_similarity, associate_greedy, associate_optimal, reassign_identity,
    reassignment_score, refine_with_detection, track_stream, FusionConfig, Track, TrackerState,
};
pub use scenario::{generate, summarize, Gap, Scenario, ScenarioConfig, TrackingSummary, TruthBox};
pub use types::{BBox, Detection, HistoryEntry, Source, TrackOutput, INSTRUMENT_NAMES};
