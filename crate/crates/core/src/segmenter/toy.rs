//! Synthetic moving-patch videos with known labels.
//!
//! A bright 2×2 patch travels across a small single-channel frame with
//! wrap-around, leaving a dimmer one-pixel trail behind it. The class of a
//! clip is the direction of travel; class `0` of a [`MotionVocabulary`] may be
//! reserved for "no patch".

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::model::Clip;
use super::train::Sample;
use crate::error::{Error, Result};

pub const HEAD_INTENSITY: f64 = 1.0;
pub const TRAIL_INTENSITY: f64 = 0.5;

/// Per-class motion: `None` renders background only.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionVocabulary(pub Vec<Option<(i32, i32)>>);

impl MotionVocabulary {
    /// Right, left, down.
    pub fn three_directions() -> Self {
        Self(vec![Some((1, 0)), Some((-1, 0)), Some((0, 1))])
    }

    /// One motion per action class; "No" shows an empty field.
    pub fn actions() -> Self {
        Self(vec![
            None,
            Some((1, 0)),
            Some((-1, 0)),
            Some((0, 1)),
            Some((0, -1)),
            Some((1, 1)),
            Some((-1, -1)),
        ])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn wrap(v: i32, size: usize) -> usize {
    v.rem_euclid(size as i32) as usize
}

/// Render one frame with the patch's top-left corner at `pos`.
pub fn render_frame<R: Rng>(size: usize, pos: (i32, i32), motion: Option<(i32, i32)>, noise: f64, rng: &mut R) -> Vec<f64> {
    let mut frame = vec![0.0; size * size];
    if let Some((dx, dy)) = motion {
        // trail: the cells the patch just left
        for oy in 0..2 {
            for ox in 0..2 {
                let x = wrap(pos.0 + ox - dx, size);
                let y = wrap(pos.1 + oy - dy, size);
                frame[y * size + x] = TRAIL_INTENSITY;
            }
        }
        for oy in 0..2 {
            for ox in 0..2 {
                let x = wrap(pos.0 + ox, size);
                let y = wrap(pos.1 + oy, size);
                frame[y * size + x] = HEAD_INTENSITY;
            }
        }
    }
    if noise > 0.0 {
        let dist = Normal::new(0.0, noise).expect("noise is positive");
        for v in frame.iter_mut() {
            *v += dist.sample(rng);
        }
    }
    frame
}

#[derive(Debug, Clone)]
pub struct MovingPatchConfig {
    pub size: usize,
    pub frames: usize,
    pub noise: f64,
    pub vocabulary: MotionVocabulary,
}

impl Default for MovingPatchConfig {
    fn default() -> Self {
        Self {
            size: 8,
            frames: 8,
            noise: 0.05,
            vocabulary: MotionVocabulary::three_directions(),
        }
    }
}

/// One clip of class `label` starting from a random position.
pub fn generate_clip<R: Rng>(cfg: &MovingPatchConfig, label: usize, rng: &mut R) -> Result<Clip> {
    let motion = *cfg
        .vocabulary
        .0
        .get(label)
        .ok_or_else(|| Error::InvalidArgument(format!("class {label} not in vocabulary")))?;
    let mut pos = (rng.random_range(0..cfg.size as i32), rng.random_range(0..cfg.size as i32));
    let mut data = Vec::with_capacity(cfg.frames * cfg.size * cfg.size);
    for _ in 0..cfg.frames {
        data.extend(render_frame(cfg.size, pos, motion, cfg.noise, rng));
        if let Some((dx, dy)) = motion {
            pos = (pos.0 + dx, pos.1 + dy);
        }
    }
    Clip::new(cfg.frames, cfg.size, cfg.size, 1, data)
}

/// `count` clips with labels cycling through the vocabulary.
pub fn generate_dataset(cfg: &MovingPatchConfig, count: usize, seed: u64) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let label = i % cfg.vocabulary.len();
            Ok(Sample {
                clip: generate_clip(cfg, label, &mut rng)?,
                label,
            })
        })
        .collect()
}

/// A continuous stream whose per-frame motion follows `labels`; the patch
/// position carries over between frames.
pub fn generate_stream(size: usize, labels: &[u8], vocabulary: &MotionVocabulary, noise: f64, seed: u64) -> Result<Clip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = (rng.random_range(0..size as i32), rng.random_range(0..size as i32));
    let mut data = Vec::with_capacity(labels.len() * size * size);
    for &l in labels {
        let motion = *vocabulary
            .0
            .get(l as usize)
            .ok_or_else(|| Error::InvalidArgument(format!("class {l} not in vocabulary")))?;
        data.extend(render_frame(size, pos, motion, noise, &mut rng));
        if let Some((dx, dy)) = motion {
            pos = (pos.0 + dx, pos.1 + dy);
        }
    }
    Clip::new(labels.len(), size, size, 1, data)
}
