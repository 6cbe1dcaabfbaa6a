//! Gradient-boosted trees grading each skill aspect as Poor, Moderate or
//! Good, with the stratified holdout and cross-validation protocol.

pub mod eval;
pub mod gbc;
pub mod label;
pub mod tree;

pub use eval::{
    evaluate_aspect, out_of_fold_predictions, stratified_folds, stratified_split, AspectEvaluation, AspectReport,
    ClassScores, ConfusionMatrix, CvMode, LevelReport, Protocol, SkillReport,
};
pub use gbc::{gbc_fit, softmax, GbcModel, GbcParams, Prediction};
pub use label::{discretize, SkillLevel, NUM_LEVELS};
pub use tree::{best_split, fit_tree, Node, RegressionTree, Split, TreeParams};
