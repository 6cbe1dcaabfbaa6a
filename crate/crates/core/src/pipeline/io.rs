//! On-disk formats shared by the stages.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmenter::Clip;
use crate::timeline::{Action, ActionTimeline};

pub const VIDEO_FORMAT: &str = "microseg-video/v1";

/// Error unless `path` exists; names the stage that should have written it.
pub fn require(path: &Path, stage: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingInput { stage: stage.into(), path: path.display().to_string() })
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    create_parent(path)?;
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// One value per non-blank line; errors carry the line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let r = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct TimelineRow {
    frame: usize,
    action: String,
}

/// `frame,action` rows with action names, frames from 0 without gaps.
pub fn write_timeline(path: &Path, t: &ActionTimeline) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    for (frame, &l) in t.labels().iter().enumerate() {
        w.serialize(TimelineRow { frame, action: Action::from_id(l)?.name().into() })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_timeline(path: &Path, fps: f64) -> Result<ActionTimeline> {
    let mut labels = Vec::new();
    for (i, row) in csv::Reader::from_path(path)?.deserialize::<TimelineRow>().enumerate() {
        let row = row?;
        let bad = |message: String| Error::Parse { path: path.display().to_string(), line: i + 2, message };
        if row.frame != labels.len() {
            return Err(bad(format!("expected frame {}, found {}", labels.len(), row.frame)));
        }
        let a = Action::from_name(&row.action).ok_or_else(|| bad(format!("unknown action `{}`", row.action)))?;
        labels.push(a.id());
    }
    ActionTimeline::new(labels, fps)
}

/// Frames quantised to 8 bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoFile {
    pub format: String,
    pub fps: f64,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub frames: Vec<Vec<u8>>,
}

impl VideoFile {
    /// Values are clamped to `[0, 1]` before quantising.
    pub fn from_clip(clip: &Clip, fps: f64) -> Self {
        let frames = (0..clip.frames)
            .map(|t| clip.frame(t).iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect())
            .collect();
        Self { format: VIDEO_FORMAT.into(), fps, height: clip.height, width: clip.width, channels: clip.channels, frames }
    }

    pub fn to_clip(&self) -> Result<Clip> {
        if self.format != VIDEO_FORMAT {
            return Err(Error::Schema { expected: VIDEO_FORMAT.into(), got: self.format.clone() });
        }
        let data = self.frames.iter().flatten().map(|&v| v as f64 / 255.0).collect();
        Clip::new(self.frames.len(), self.height, self.width, self.channels, data)
    }
}
