//! Synthetic cohort generation.
//!
//! Each procedure draws a latent skill in `[0, 1]`. Skill shortens actions,
//! reduces needle re-bites and tip tremor, and drives the five ratings, so
//! every downstream stage has ground truth and the classifier has signal.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{stage_seed, PipelineConfig, SynthConfig};
use super::io::{write_json, write_jsonl, write_text, write_timeline, VideoFile};
use super::Layout;
use crate::error::{Error, Result};
use crate::kinematics::Aspect;
use crate::postprocess::ActionGrammar;
use crate::segmenter::toy::{generate_stream, MotionVocabulary};
use crate::timeline::{Action, ActionTimeline};
use crate::tip::{render_template, template_for, TipPoint, TipTrajectory};
use crate::tracker::scenario::partner_class;
use crate::tracker::{BBox, Detection};

pub const MANIFEST_FORMAT: &str = "microseg-scenario/v1";
pub const INSTRUMENTS: usize = 2;

/// Silhouette of the detection at index `detection` within its frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteRecord {
    pub detection: usize,
    pub mask: crate::tip::RleSilhouette,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureScript {
    pub id: String,
    pub skill: f64,
    pub frames: usize,
    /// Instrument class per ground-truth object.
    pub classes: BTreeMap<u64, u8>,
    /// Action name and length in frames, in order.
    pub script: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub fps: f64,
    pub procedures: Vec<ProcedureScript>,
}

/// Ratings on the five-point scale, in [`Aspect::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortRow {
    pub procedure: String,
    pub scores: [f64; 5],
}

pub fn write_cohort(path: &Path, rows: &[CohortRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["procedure".to_string()];
    header.extend(Aspect::ALL.iter().map(|a| a.code().to_string()));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.procedure.clone()];
        rec.extend(r.scores.iter().map(|s| s.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_text(path, &String::from_utf8_lossy(&bytes))
}

pub fn read_cohort(path: &Path) -> Result<Vec<CohortRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    let col = |name: &str| {
        header.iter().position(|h| h.eq_ignore_ascii_case(name)).ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let pc = col("procedure")?;
    let cols: Vec<usize> = Aspect::ALL.iter().map(|a| col(a.code())).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let mut scores = [0.0; 5];
        for (k, &c) in cols.iter().enumerate() {
            scores[k] = rec[c].trim().parse().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i + 2,
                message: format!("column {}: `{}`: {e}", header[c], &rec[c]),
            })?;
        }
        rows.push(CohortRow { procedure: rec[pc].to_string(), scores });
    }
    Ok(rows)
}

/// Scripted action sequence for one procedure; slower, with more re-bites
/// and stitches at low skill. Every run lasts at least 6 frames.
pub fn action_script<R: Rng>(skill: f64, rng: &mut R) -> Vec<(Action, usize)> {
    let scale = 0.7 + 0.9 * (1.0 - skill);
    let dur = |base: f64, rng: &mut R| ((base * scale * rng.random_range(0.85..1.15)).round() as usize).max(8);
    let mut s = vec![(Action::No, rng.random_range(15..=25))];
    s.push((Action::VesselCutting, dur(30.0, rng)));
    let stitches = if rng.random_bool(1.0 - skill) { 3 } else { 2 };
    for k in 0..stitches {
        if k > 0 {
            s.push((Action::No, rng.random_range(8..=15)));
        }
        s.push((Action::NeedleHandling, dur(25.0, rng)));
        s.push((Action::NeedleTouchVessel, dur(20.0, rng)));
        s.push((Action::NeedleWithdrawing, dur(15.0, rng)));
        let mut rebites = 0;
        while rebites < 2 && rng.random_bool(0.5 * (1.0 - skill)) {
            s.push((Action::No, rng.random_range(6..=10)));
            s.push((Action::NeedleHandling, dur(15.0, rng)));
            s.push((Action::NeedleTouchVessel, dur(15.0, rng)));
            s.push((Action::NeedleWithdrawing, dur(12.0, rng)));
            rebites += 1;
        }
        s.push((Action::KnotTying, dur(40.0, rng)));
        s.push((Action::KnotCutting, dur(12.0, rng)));
    }
    s.push((Action::No, rng.random_range(15..=25)));
    s
}

pub fn script_labels(script: &[(Action, usize)]) -> Vec<u8> {
    script.iter().flat_map(|&(a, n)| std::iter::repeat_n(a.id(), n)).collect()
}

/// Per-action angular rate (rad/frame), sweep amplitude (px) and how far the
/// instruments close in on the field centre.
fn motion_profile(a: u8) -> (f64, f64, f64) {
    match Action::ALL[a as usize] {
        Action::No => (0.02, 10.0, 0.0),
        Action::VesselCutting => (0.06, 25.0, 0.1),
        Action::NeedleHandling => (0.05, 30.0, 0.2),
        Action::NeedleTouchVessel => (0.03, 15.0, 0.3),
        Action::NeedleWithdrawing => (0.05, 25.0, 0.3),
        Action::KnotTying => (0.12, 35.0, 0.4),
        Action::KnotCutting => (0.04, 15.0, 0.2),
    }
}

/// Tip apex and pointing angle of both instruments for every frame.
/// Instrument 0 works from the left pointing right, instrument 1 mirrors it.
pub fn tip_paths<R: Rng>(cfg: &SynthConfig, labels: &[u8], skill: f64, rng: &mut R) -> Vec<[((f64, f64), f64); INSTRUMENTS]> {
    let sigma = cfg.tremor.1 + (cfg.tremor.0 - cfg.tremor.1) * skill;
    let tremor = Normal::new(0.0, sigma).expect("tremor is non-negative");
    let (w, h) = (cfg.field_width, cfg.field_height);
    let homes = [(w * 0.35, h * 0.5), (w * 0.65, h * 0.5)];
    let mut phase = rng.random_range(0.0..2.0 * PI);
    let (mut amp, mut close) = (10.0, 0.0);
    let margin = 60.0;
    labels
        .iter()
        .map(|&l| {
            let (omega, a, c) = motion_profile(l);
            amp += 0.1 * (a - amp);
            close += 0.1 * (c - close);
            phase += omega * (0.7 + 0.6 * skill);
            let mut out = [((0.0, 0.0), 0.0); INSTRUMENTS];
            for (o, home) in homes.iter().enumerate() {
                let cx = home.0 + close * 0.8 * (w / 2.0 - home.0);
                let x = cx + amp * phase.cos() + tremor.sample(rng);
                let y = home.1 + amp * 0.25 * (2.0 * phase + o as f64).sin() + tremor.sample(rng);
                let apex = (x.clamp(margin, w - margin).floor() + 0.5, y.clamp(margin, h - margin).floor() + 0.5);
                let angle = if o == 0 { 0.0 } else { PI } + 0.25 * (0.5 * phase + o as f64).sin();
                out[o] = (apex, angle);
            }
            out
        })
        .collect()
}

struct Procedure {
    script: ProcedureScript,
    scores: [f64; 5],
    video: VideoFile,
    timeline: ActionTimeline,
    detections: Vec<Detection>,
    silhouettes: Vec<SilhouetteRecord>,
    tips: TipTrajectory,
}

fn rating<R: Rng>(skill: f64, noise: f64, rng: &mut R) -> f64 {
    let latent = (skill + noise * Normal::new(0.0, 1.0).expect("unit normal").sample(rng)).clamp(0.0, 1.0);
    ((1.0 + 4.0 * latent) * 2.0).round() / 2.0
}

fn procedure(cfg: &PipelineConfig, index: usize, skill: f64, seed: u64) -> Result<Procedure> {
    let sc = &cfg.synth;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let script = action_script(skill, &mut rng);
    let labels = script_labels(&script);
    let timeline = ActionTimeline::new(labels.clone(), cfg.fps)?;
    let video = generate_stream(sc.video_size, &labels, &MotionVocabulary::actions(), sc.video_noise, rng.random())?;
    let paths = tip_paths(sc, &labels, skill, &mut rng);
    let classes: BTreeMap<u64, u8> = (0..INSTRUMENTS as u64).map(|o| (o, o as u8)).collect();
    let jitter = Normal::new(0.0, sc.jitter).map_err(|e| Error::Config(e.to_string()))?;
    let mut detections = Vec::new();
    let mut silhouettes = Vec::new();
    let mut tips = TipTrajectory::new();
    for (frame, poses) in paths.iter().enumerate() {
        let frame = frame as u64;
        let mut index = 0;
        for (&object, &class_id) in &classes {
            let (apex, angle) = poses[object as usize];
            tips.push(TipPoint { frame, track_id: object, class_id, x: apex.0, y: apex.1 })?;
            // every variate is drawn so gaps and dropouts do not shift the stream
            let flip = rng.random_bool(sc.flip_prob);
            let confidence = rng.random_range(sc.min_confidence..=1.0);
            let (jx, jy) = (jitter.sample(&mut rng), jitter.sample(&mut rng));
            let dropped = rng.random_bool(sc.dropout);
            let gap = sc.gaps.iter().any(|g| g.object == object && (g.start..g.start + g.len).contains(&frame));
            if dropped || gap {
                continue;
            }
            let s = render_template(&template_for(class_id), apex, angle, frame, 0)?;
            detections.push(Detection {
                frame,
                bbox: BBox::new(s.origin.0 + jx, s.origin.1 + jy, s.width as f64, s.height as f64),
                class_id: if flip { partner_class(class_id) } else { class_id },
                confidence,
                object_id: Some(object),
            });
            silhouettes.push(SilhouetteRecord { detection: index, mask: s.to_rle() });
            index += 1;
        }
    }
    let mut scores = [0.0; 5];
    for s in &mut scores {
        *s = rating(skill, sc.rating_noise, &mut rng);
    }
    Ok(Procedure {
        script: ProcedureScript {
            id: format!("P{:03}", index + 1),
            skill,
            frames: labels.len(),
            classes,
            script: script.iter().map(|(a, n)| (a.name().to_string(), *n)).collect(),
        },
        scores,
        video: VideoFile::from_clip(&video, cfg.fps),
        timeline,
        detections,
        silhouettes,
        tips,
    })
}

/// Write the whole synthetic cohort under `layout`.
pub fn cmd_synth(cfg: &PipelineConfig, layout: &Layout) -> Result<Manifest> {
    cfg.validate()?;
    let sc = &cfg.synth;
    let seed = stage_seed(cfg.seed, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // skills spread evenly over [0, 1] in shuffled order
    let mut slots: Vec<usize> = (0..sc.procedures).collect();
    slots.shuffle(&mut rng);
    let skills: Vec<f64> = slots.iter().map(|&k| (k as f64 + rng.random_range(0.0..1.0)) / sc.procedures as f64).collect();
    let seeds: Vec<u64> = (0..sc.procedures).map(|_| rng.random()).collect();

    let mut train_labels = Vec::new();
    while train_labels.len() < sc.train_frames {
        let skill = rng.random_range(0.0..1.0);
        train_labels.extend(script_labels(&action_script(skill, &mut rng)));
    }
    train_labels.truncate(sc.train_frames);
    let train_video = generate_stream(sc.video_size, &train_labels, &MotionVocabulary::actions(), sc.video_noise, rng.random())?;
    write_json(&layout.train_video(), &VideoFile::from_clip(&train_video, cfg.fps))?;
    write_timeline(&layout.train_timeline(), &ActionTimeline::new(train_labels, cfg.fps)?)?;

    let procs: Vec<Procedure> =
        (0..sc.procedures).into_par_iter().map(|i| procedure(cfg, i, skills[i], seeds[i])).collect::<Result<_>>()?;
    for p in &procs {
        let id = &p.script.id;
        write_json(&layout.video(id), &p.video)?;
        write_timeline(&layout.truth_timeline(id), &p.timeline)?;
        write_jsonl(&layout.detections(id), &p.detections)?;
        write_jsonl(&layout.silhouettes(id), &p.silhouettes)?;
        let mut buf = Vec::new();
        p.tips.write_csv(&mut buf)?;
        write_text(&layout.truth_tips(id), &String::from_utf8_lossy(&buf))?;
    }
    let rows: Vec<CohortRow> = procs.iter().map(|p| CohortRow { procedure: p.script.id.clone(), scores: p.scores }).collect();
    write_cohort(&layout.cohort(), &rows)?;
    write_text(&layout.grammar(), &(ActionGrammar::surgical_default().to_json() + "\n"))?;
    let manifest =
        Manifest { format: MANIFEST_FORMAT.into(), fps: cfg.fps, procedures: procs.into_iter().map(|p| p.script).collect() };
    write_json(&layout.manifest(), &manifest)?;
    Ok(manifest)
}
