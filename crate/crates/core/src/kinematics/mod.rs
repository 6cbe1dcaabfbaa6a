//! Motion and action-level features for skill grading.

pub mod features;
pub mod series;
pub mod stats;

pub use features::{
    build_feature_vector, feature_names, percentile, summarize, Aspect, FeatureTable, ProcedureKinematics,
    SkillFeatureVector, FEATURE_SCHEMA, KNOT_ACTIONS, NEEDLE_ACTIONS,
};
pub use series::{
    derivative, differentiate, moving_average, relative_features, wrap_angle, KinematicSegment, KinematicSeries,
    Quantity, RelativeSegment, RelativeSeries,
};
pub use stats::{action_stats, ActionStats, ClassStats};

/// Moving-average window applied to tip positions before differencing.
pub const DEFAULT_SMOOTHING: usize = 3;
