//! Stage-per-command orchestration over on-disk artifacts.
//!
//! Every stage reads the files its predecessors wrote under one output
//! directory and writes its own, so any stage can be re-run alone:
//!
//! | stage      | writes                                                        |
//! |------------|---------------------------------------------------------------|
//! | `synth`    | `scenario.json`, `cohort.csv`, `grammar.json`, `train/`, and per procedure `video.json`, `detections.jsonl`, `silhouettes.jsonl`, `truth_timeline.csv`, `truth_tips.csv` |
//! | `segment`  | `models/segmenter.json`, per procedure `timeline_raw.csv`, `timeline.csv` |
//! | `track`    | per procedure `tracks.jsonl`, `tips.csv`                       |
//! | `features` | `features/<ASPECT>.csv`                                       |
//! | `assess`   | `models/skill_<ASPECT>.json`, `reports/assessment.csv`, `reports/skill_report.{json,txt}` |
//! | `evaluate` | `reports/evaluation.json`                                     |

pub mod config;
pub mod io;
pub mod stages;
pub mod synth;

use std::path::{Path, PathBuf};

pub use config::{stage_seed, PipelineConfig, StageToggles, SynthConfig};
pub use stages::{cmd_assess, cmd_evaluate, cmd_features, cmd_segment, cmd_track, EvaluationReport};
pub use synth::{cmd_synth, Manifest};

use crate::error::Result;
use crate::kinematics::Aspect;

/// File locations under an output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn proc(&self, id: &str, file: &str) -> PathBuf {
        self.root.join("procedures").join(id).join(file)
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("scenario.json")
    }
    pub fn cohort(&self) -> PathBuf {
        self.root.join("cohort.csv")
    }
    pub fn grammar(&self) -> PathBuf {
        self.root.join("grammar.json")
    }
    pub fn train_video(&self) -> PathBuf {
        self.root.join("train").join("video.json")
    }
    pub fn train_timeline(&self) -> PathBuf {
        self.root.join("train").join("timeline.csv")
    }
    pub fn video(&self, id: &str) -> PathBuf {
        self.proc(id, "video.json")
    }
    pub fn detections(&self, id: &str) -> PathBuf {
        self.proc(id, "detections.jsonl")
    }
    pub fn silhouettes(&self, id: &str) -> PathBuf {
        self.proc(id, "silhouettes.jsonl")
    }
    pub fn truth_timeline(&self, id: &str) -> PathBuf {
        self.proc(id, "truth_timeline.csv")
    }
    pub fn truth_tips(&self, id: &str) -> PathBuf {
        self.proc(id, "truth_tips.csv")
    }
    pub fn timeline_raw(&self, id: &str) -> PathBuf {
        self.proc(id, "timeline_raw.csv")
    }
    pub fn timeline(&self, id: &str) -> PathBuf {
        self.proc(id, "timeline.csv")
    }
    pub fn tracks(&self, id: &str) -> PathBuf {
        self.proc(id, "tracks.jsonl")
    }
    pub fn tips(&self, id: &str) -> PathBuf {
        self.proc(id, "tips.csv")
    }
    pub fn features(&self, a: Aspect) -> PathBuf {
        self.root.join("features").join(format!("{}.csv", a.code()))
    }
    pub fn segmenter_checkpoint(&self) -> PathBuf {
        self.root.join("models").join("segmenter.json")
    }
    pub fn segmenter_training(&self) -> PathBuf {
        self.root.join("models").join("segmenter_training.json")
    }
    pub fn skill_model(&self, a: Aspect) -> PathBuf {
        self.root.join("models").join(format!("skill_{}.json", a.code()))
    }
    pub fn assessment(&self) -> PathBuf {
        self.root.join("reports").join("assessment.csv")
    }
    pub fn skill_report(&self) -> PathBuf {
        self.root.join("reports").join("skill_report.json")
    }
    pub fn skill_report_text(&self) -> PathBuf {
        self.root.join("reports").join("skill_report.txt")
    }
    pub fn evaluation(&self) -> PathBuf {
        self.root.join("reports").join("evaluation.json")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Segment,
    Track,
    Features,
    Assess,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Synth, Stage::Segment, Stage::Track, Stage::Features, Stage::Assess, Stage::Evaluate];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Segment => "segment",
            Stage::Track => "track",
            Stage::Features => "features",
            Stage::Assess => "assess",
            Stage::Evaluate => "evaluate",
        }
    }

    pub fn enabled(self, t: &StageToggles) -> bool {
        match self {
            Stage::Synth => t.synth,
            Stage::Segment => t.segment,
            Stage::Track => t.track,
            Stage::Features => t.features,
            Stage::Assess => t.assess,
            Stage::Evaluate => t.evaluate,
        }
    }
}

pub fn run_stage(stage: Stage, cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let layout = Layout::new(out);
    match stage {
        Stage::Synth => cmd_synth(cfg, &layout).map(drop),
        Stage::Segment => cmd_segment(cfg, &layout),
        Stage::Track => cmd_track(cfg, &layout),
        Stage::Features => cmd_features(cfg, &layout),
        Stage::Assess => cmd_assess(cfg, &layout).map(drop),
        Stage::Evaluate => cmd_evaluate(cfg, &layout).map(drop),
    }
}

/// Every enabled stage in order.
pub fn run_all(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    for s in Stage::ALL {
        if s.enabled(&cfg.stages) {
            run_stage(s, cfg, out)?;
        }
    }
    Ok(())
}
