//! Frame-level action recognition with a video transformer.
//!
//! Clips are cut into `P×P` patches, embedded, and passed through blocks that
//! combine full-window and trailing-window temporal attention, then reweight
//! each location by its temporal variance before per-frame spatial attention.
//! The class token feeds a small MLP head that labels the clip's last frame.

pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod model;
pub mod toy;
pub mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use config::{SegmenterConfig, TrainSchedule};
pub use layers::{Grads, ParamStore};
pub use model::{aggregate_temporal, variance_weights, Clip, Mode, Segmenter, TokenSequence, VarianceWeights};
pub use train::{evaluate, segment_video, train, trailing_window, windows_from_stream, EpochMetrics, Sample, TrainReport};
