use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::Protocol;
use crate::error::{Error, Result};
use crate::kinematics::DEFAULT_SMOOTHING;
use crate::postprocess::smooth::DEFAULT_MIN_LEN;
use crate::segmenter::{SegmenterConfig, TrainSchedule};
use crate::tracker::{FusionConfig, Gap};

/// Which stages `run` executes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub synth: bool,
    pub segment: bool,
    pub track: bool,
    pub features: bool,
    pub assess: bool,
    pub evaluate: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self { synth: true, segment: true, track: true, features: true, assess: true, evaluate: true }
    }
}

/// Synthetic cohort: procedures with scripted actions, two instruments,
/// noisy detections and expert-style ratings driven by a latent skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub procedures: usize,
    /// Side of the square toy video frames.
    pub video_size: usize,
    pub video_noise: f64,
    /// Length of the labelled stream the segmenter trains on.
    pub train_frames: usize,
    pub field_width: f64,
    pub field_height: f64,
    pub flip_prob: f64,
    pub dropout: f64,
    /// Detection box jitter, px.
    pub jitter: f64,
    pub min_confidence: f64,
    /// Detection gaps applied to every procedure.
    pub gaps: Vec<Gap>,
    /// Tip tremor standard deviation at full and at zero skill, px.
    pub tremor: (f64, f64),
    /// Rating noise on the latent skill scale.
    pub rating_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            procedures: 40,
            video_size: 8,
            video_noise: 0.05,
            train_frames: 1200,
            field_width: 640.0,
            field_height: 480.0,
            flip_prob: 0.1,
            dropout: 0.05,
            jitter: 0.5,
            min_confidence: 0.6,
            gaps: Vec::new(),
            tremor: (0.2, 1.0),
            rating_noise: 0.05,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.procedures == 0 || self.video_size < 2 || self.train_frames == 0 {
            return Err(Error::Config("synth needs procedures, a video of at least 2x2 and training frames".into()));
        }
        for (name, p) in [("flip_prob", self.flip_prob), ("dropout", self.dropout), ("min_confidence", self.min_confidence)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("synth.{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.field_width < 200.0 || self.field_height < 200.0 {
            return Err(Error::Config("synth field must be at least 200x200".into()));
        }
        if [self.jitter, self.tremor.0, self.tremor.1, self.rating_noise, self.video_noise].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentStage {
    pub model: SegmenterConfig,
    pub training: TrainSchedule,
    /// Train again even when a checkpoint exists.
    pub retrain: bool,
    pub min_segment_len: usize,
    /// Grammar file; the synthesised `grammar.json` (or the built-in
    /// grammar) when absent.
    pub grammar: Option<PathBuf>,
}

impl Default for SegmentStage {
    fn default() -> Self {
        Self {
            model: SegmenterConfig {
                frames: 8,
                patch: 4,
                height: 8,
                width: 8,
                channels: 1,
                embed_dim: 16,
                num_blocks: 1,
                num_heads: 2,
                num_classes: 7,
                local_windows: SegmenterConfig::default_windows(8),
                dropout: 0.0,
                ..SegmenterConfig::default()
            },
            training: TrainSchedule { epochs: 4, batch_size: 16, learning_rate: 3e-3, ..TrainSchedule::default() },
            retrain: false,
            min_segment_len: DEFAULT_MIN_LEN,
            grammar: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackStage {
    pub fusion: FusionConfig,
    /// Tip reference file; the bundled references when absent.
    pub tip_reference: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureStage {
    pub smoothing: usize,
}

impl Default for FeatureStage {
    fn default() -> Self {
        Self { smoothing: DEFAULT_SMOOTHING }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub fps: f64,
    /// Output directory; relative paths resolve against the config file.
    pub out: PathBuf,
    pub stages: StageToggles,
    pub synth: SynthConfig,
    pub segment: SegmentStage,
    pub track: TrackStage,
    pub features: FeatureStage,
    pub assess: Protocol,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            fps: 10.0,
            out: PathBuf::from("microseg-out"),
            stages: StageToggles::default(),
            synth: SynthConfig::default(),
            segment: SegmentStage::default(),
            track: TrackStage::default(),
            features: FeatureStage::default(),
            assess: Protocol::default(),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl PipelineConfig {
    /// Parse TOML, or JSON when `path` ends in `.json`.
    pub fn from_str_at(text: &str, path: &Path) -> Result<Self> {
        let shown = path.display().to_string();
        let mut cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(text).map_err(|e| Error::Parse { path: shown.clone(), line: e.line(), message: e.to_string() })?
        } else {
            toml::from_str(text).map_err(|e| Error::Parse {
                path: shown.clone(),
                line: e.span().map_or(0, |s| line_of(text, s.start)),
                message: e.message().to_string(),
            })?
        };
        if cfg.out.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.out = dir.join(&cfg.out);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_str_at(&std::fs::read_to_string(path)?, path)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        self.synth.validate()?;
        self.segment.model.validate()?;
        if self.segment.model.height != self.synth.video_size || self.segment.model.width != self.synth.video_size {
            return Err(Error::Config(format!(
                "segment.model frame {}x{} does not match synth.video_size {}",
                self.segment.model.height, self.segment.model.width, self.synth.video_size
            )));
        }
        if self.segment.model.channels != 1 || self.segment.model.num_classes != crate::timeline::NUM_ACTIONS {
            return Err(Error::Config("segment.model must take one channel and predict 7 actions".into()));
        }
        self.track.fusion.validate()?;
        self.assess.validate()?;
        Ok(())
    }
}

/// Independent seed for one stage, derived from the root seed.
pub fn stage_seed(root: u64, stage: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = root.wrapping_add(stage.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back = PipelineConfig::from_str_at(&text, Path::new("c.toml")).unwrap();
        assert_eq!(back.out, PathBuf::from("microseg-out"));
        assert_eq!(back.synth, cfg.synth);
    }

    #[test]
    fn errors_point_at_the_field() {
        let text = "seed = 3\n\n[synth]\nprocedures = 10\nflip_prob = \"high\"\n";
        match PipelineConfig::from_str_at(text, Path::new("c.toml")) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 5);
                assert!(!message.is_empty());
            }
            other => panic!("{other:?}"),
        }
        let text = "[synth]\nprocedurs = 10\n";
        assert!(matches!(PipelineConfig::from_str_at(text, Path::new("c.toml")), Err(Error::Parse { line: 2, .. })));
        let json = "{\n \"seed\": 1,\n \"fps\": -1\n}";
        assert!(matches!(PipelineConfig::from_str_at(json, Path::new("c.json")), Err(Error::Config(_))));
    }

    #[test]
    fn relative_out_follows_config() {
        let cfg = PipelineConfig::from_str_at("out = \"run\"\n", Path::new("/tmp/x/c.toml")).unwrap();
        assert_eq!(cfg.out, PathBuf::from("/tmp/x/run"));
    }

    #[test]
    fn stage_seeds_differ() {
        let s: Vec<u64> = (0..6).map(|k| stage_seed(7, k)).collect();
        for i in 0..6 {
            for j in i + 1..6 {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(stage_seed(7, 2), stage_seed(7, 2));
    }
}
