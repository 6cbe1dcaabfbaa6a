use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainSchedule;
use super::layers::Grads;
use super::model::{cross_entropy, Clip, Mode, Segmenter};
use crate::error::{Error, Result};
use crate::optim::AdamW;
use crate::timeline::{ActionTimeline, NUM_ACTIONS};

/// One training example: a clip and the label of its last (target) frame.
#[derive(Debug, Clone)]
pub struct Sample {
    pub clip: Clip,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean mini-batch loss of every optimiser step.
    pub step_losses: Vec<f64>,
    pub epochs: Vec<EpochMetrics>,
}

fn sample_seed(seed: u64, epoch: usize, position: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (position as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Minimise target-frame cross-entropy with AdamW and layer-wise lr decay.
///
/// Per-sample gradients of a batch are computed in parallel and summed in
/// batch order, so results do not depend on the thread count.
pub fn train(model: &mut Segmenter, data: &[Sample], validation: &[Sample], schedule: &TrainSchedule) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    if schedule.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let classes = model.config().num_classes;
    if let Some(s) = data.iter().chain(validation).find(|s| s.label >= classes) {
        return Err(Error::InvalidArgument(format!("label {} out of range 0..{classes}", s.label)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut opt = AdamW::new(schedule.optimizer);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();

    for epoch in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, batch) in order.chunks(schedule.batch_size).enumerate() {
            let model_ref: &Segmenter = model;
            let results: Vec<Result<(f64, usize, Grads)>> = batch
                .par_iter()
                .enumerate()
                .map(|(j, &idx)| {
                    let s = &data[idx];
                    let mut local = ChaCha8Rng::seed_from_u64(sample_seed(schedule.seed, epoch, b * schedule.batch_size + j));
                    let (loss, logits, grads) = model_ref.loss_and_grads(&s.clip, s.label, Mode::Train, Some(&mut local))?;
                    Ok((loss, argmax(&logits), grads))
                })
                .collect();
            let mut total = model.store().zero_grads();
            let mut batch_loss = 0.0;
            for (r, &idx) in results.into_iter().zip(batch) {
                let (loss, pred, grads) = r?;
                total.add_assign(&grads);
                batch_loss += loss;
                if pred == data[idx].label {
                    correct += 1;
                }
            }
            total.scale(1.0 / batch.len() as f64);
            for (p, g) in model.store_mut().params_mut().iter_mut().zip(total.as_slices()) {
                p.gradient.data_mut().copy_from_slice(g);
            }
            opt.step(model.store_mut().params_mut(), schedule.learning_rate, schedule.layer_decay)?;
            report.step_losses.push(batch_loss / batch.len() as f64);
            loss_sum += batch_loss;
        }
        let (val_loss, val_accuracy) = if validation.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(model, validation)?;
            (Some(l), Some(a))
        };
        report.epochs.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
            val_loss,
            val_accuracy,
        });
    }
    Ok(report)
}

/// Mean loss and target-frame accuracy in evaluation mode.
pub fn evaluate(model: &Segmenter, data: &[Sample]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation dataset"));
    }
    let results: Vec<Result<(f64, bool)>> = data
        .par_iter()
        .map(|s| {
            let logits = model.forward(&s.clip)?;
            let (loss, _) = cross_entropy(&logits, s.label);
            Ok((loss, argmax(&logits) == s.label))
        })
        .collect();
    let mut loss = 0.0;
    let mut correct = 0;
    for r in results {
        let (l, c) = r?;
        loss += l;
        correct += c as usize;
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

/// The trailing window for frame `index` of a stream, left-padded by repeating
/// the first frame.
pub fn trailing_window(video: &Clip, index: usize, frames: usize) -> Result<Clip> {
    let refs: Vec<&[f64]> = (0..frames)
        .map(|j| {
            let src = (index + j + 1).saturating_sub(frames);
            video.frame(src)
        })
        .collect();
    Clip::from_frames(&refs, video.height, video.width, video.channels)
}

/// Label every frame of a stream by classifying its trailing window.
pub fn segment_video(model: &Segmenter, video: &Clip) -> Result<ActionTimeline> {
    if video.frames == 0 {
        return Err(Error::Empty("frame stream"));
    }
    let cfg = model.config();
    if cfg.num_classes > NUM_ACTIONS {
        return Err(Error::Config(format!(
            "timelines hold at most {NUM_ACTIONS} classes, model has {}",
            cfg.num_classes
        )));
    }
    let labels: Vec<Result<u8>> = (0..video.frames)
        .into_par_iter()
        .map(|i| {
            let clip = trailing_window(video, i, cfg.frames)?;
            Ok(argmax(&model.forward(&clip)?) as u8)
        })
        .collect();
    ActionTimeline::new(labels.into_iter().collect::<Result<_>>()?, cfg.fps)
}

/// Training samples from a labelled stream, one per frame, windowed exactly as
/// [`segment_video`] does at inference.
pub fn windows_from_stream(video: &Clip, labels: &[u8], frames: usize) -> Result<Vec<Sample>> {
    if labels.len() != video.frames {
        return Err(Error::Shape(format!(
            "{} labels for {} frames",
            labels.len(),
            video.frames
        )));
    }
    (0..video.frames)
        .map(|i| {
            Ok(Sample {
                clip: trailing_window(video, i, frames)?,
                label: labels[i] as usize,
            })
        })
        .collect()
}
