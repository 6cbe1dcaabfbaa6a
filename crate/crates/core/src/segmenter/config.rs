use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::AdamWHyper;
use crate::tensor::LAYER_NORM_EPS;

/// Architecture of the video transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    /// Frames per clip (T).
    pub frames: usize,
    /// Patch side length in pixels (P).
    pub patch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub num_blocks: usize,
    pub num_heads: usize,
    pub num_classes: usize,
    /// Trailing local attention windows, in frames.
    pub local_windows: Vec<usize>,
    /// Include the full-window temporal branch. Disabling it is an ablation.
    pub global_attention: bool,
    /// Share one set of temporal projections across the global and local branches.
    pub share_temporal_weights: bool,
    /// Learn one positional encoding per (frame, patch) instead of separate
    /// spatial and temporal tables.
    pub joint_positional: bool,
    /// Hidden width of the MLPs, as a multiple of `embed_dim`.
    pub mlp_ratio: usize,
    pub dropout: f64,
    pub layer_norm_eps: f64,
    pub fps: f64,
    pub init_seed: u64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            frames: 16,
            patch: 16,
            height: 32,
            width: 32,
            channels: 3,
            embed_dim: 64,
            num_blocks: 2,
            num_heads: 4,
            num_classes: 7,
            local_windows: vec![8, 4],
            global_attention: true,
            share_temporal_weights: true,
            joint_positional: false,
            mlp_ratio: 2,
            dropout: 0.1,
            layer_norm_eps: LAYER_NORM_EPS,
            fps: 10.0,
            init_seed: 0,
        }
    }
}

impl SegmenterConfig {
    /// Default local windows T/2 and T/4, dropping any that round to zero.
    pub fn default_windows(frames: usize) -> Vec<usize> {
        [frames / 2, frames / 4].into_iter().filter(|&w| w >= 1).collect()
    }

    /// Patches per frame, K = H·W / P².
    pub fn patches_per_frame(&self) -> usize {
        (self.height / self.patch) * (self.width / self.patch)
    }

    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * self.channels
    }

    pub fn token_count(&self) -> usize {
        1 + self.frames * self.patches_per_frame()
    }

    /// Temporal branches in evaluation order; the global branch (if any) first.
    pub fn branch_windows(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.local_windows.len() + 1);
        if self.global_attention {
            out.push(self.frames);
        }
        out.extend(&self.local_windows);
        out
    }

    /// Trailing frames the model can see: every temporal branch, the variance
    /// statistics and the class-token pooling are restricted to this span.
    pub fn temporal_extent(&self) -> usize {
        self.branch_windows().into_iter().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("frames", self.frames),
            ("patch", self.patch),
            ("height", self.height),
            ("width", self.width),
            ("channels", self.channels),
            ("embed_dim", self.embed_dim),
            ("num_heads", self.num_heads),
            ("num_classes", self.num_classes),
            ("mlp_ratio", self.mlp_ratio),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.height.is_multiple_of(self.patch) || !self.width.is_multiple_of(self.patch) {
            return Err(Error::Config(format!(
                "frame {}x{} is not divisible by patch size {}",
                self.height, self.width, self.patch
            )));
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if let Some(w) = self.local_windows.iter().find(|&&w| w == 0 || w > self.frames) {
            return Err(Error::Config(format!(
                "local window {w} outside 1..={}",
                self.frames
            )));
        }
        if self.branch_windows().is_empty() {
            return Err(Error::Config("no temporal attention branch enabled".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.layer_norm_eps <= 0.0 {
            return Err(Error::Config("layer_norm_eps must be positive".into()));
        }
        if !(self.fps > 0.0) {
            return Err(Error::Config("fps must be positive".into()));
        }
        Ok(())
    }
}

/// Optimisation schedule. Defaults follow the reference training recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub layer_decay: f64,
    pub optimizer: AdamWHyper,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            learning_rate: 9e-5,
            layer_decay: 0.75,
            optimizer: AdamWHyper::default(),
            seed: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_arithmetic() {
        let cfg = SegmenterConfig {
            height: 224,
            width: 224,
            patch: 16,
            frames: 16,
            ..Default::default()
        };
        assert_eq!(cfg.patches_per_frame(), 196);
        assert_eq!(cfg.token_count(), 3137);
        cfg.validate().unwrap();
    }

    #[test]
    fn default_windows_are_half_and_quarter() {
        assert_eq!(SegmenterConfig::default_windows(16), vec![8, 4]);
        assert_eq!(SegmenterConfig::default().local_windows, vec![8, 4]);
        assert_eq!(SegmenterConfig::default_windows(2), vec![1]);
    }

    #[test]
    fn validation_errors() {
        let bad_patch = SegmenterConfig { height: 30, ..Default::default() };
        assert!(bad_patch.validate().is_err());
        let bad_window = SegmenterConfig { local_windows: vec![17], ..Default::default() };
        assert!(bad_window.validate().is_err());
        let no_branch = SegmenterConfig {
            global_attention: false,
            local_windows: vec![],
            ..Default::default()
        };
        assert!(no_branch.validate().is_err());
        let bad_heads = SegmenterConfig { num_heads: 3, ..Default::default() };
        assert!(bad_heads.validate().is_err());
    }

    #[test]
    fn schedule_defaults() {
        let s = TrainSchedule::default();
        assert_eq!((s.epochs, s.batch_size), (50, 16));
        assert_eq!(s.learning_rate, 9e-5);
        assert_eq!(s.layer_decay, 0.75);
    }
}
