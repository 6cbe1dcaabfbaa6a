//! Timeline smoothing, grammar repair and segmentation metrics.

pub mod grammar;
pub mod metrics;
pub mod smooth;

pub use grammar::{apply_grammar, ActionGrammar, RepairRule};
pub use metrics::{
    frame_accuracy, greedy_match, segment_metrics, ClassMetrics, JaccardMode, MetricOptions, OverallMetrics,
    SegmentationReport,
};
pub use smooth::{remove_short_segments, DEFAULT_MIN_LEN};

use crate::timeline::ActionTimeline;

/// Short-segment removal followed by grammar repair.
pub fn post_process(t: &ActionTimeline, min_len: usize, grammar: &ActionGrammar) -> ActionTimeline {
    apply_grammar(&remove_short_segments(t, min_len), grammar)
}
