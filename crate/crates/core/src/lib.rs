//! Skill assessment for microanastomosis video.
//!
//! The crate is organised as a pipeline of independent stages:
//!
//! - [`segmenter`]: frame-level action recognition with a video transformer
//! - [`postprocess`]: timeline smoothing, grammar repair and segmentation metrics
//! - [`tracker`]: fusion of per-frame instrument detections into stable tracks
//! - [`tip`]: instrument-tip localisation from silhouettes
//! - [`kinematics`]: motion and action-level features
//! - [`classifier`]: gradient-boosted trees grading each skill aspect
//! - [`pipeline`]: file formats, synthetic scenarios and stage orchestration
//!
//! [`tensor`], [`grad`] and [`optim`] hold the numeric primitives shared by
//! the learned components.

pub mod classifier;
pub mod error;
pub mod grad;
pub mod kinematics;
pub mod optim;
pub mod pipeline;
pub mod postprocess;
pub mod segmenter;
pub mod tensor;
pub mod timeline;
pub mod tip;
pub mod tracker;

pub use error::{Error, Result};
