use std::collections::BTreeMap;
use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{stage_seed, PipelineConfig};
use super::io::{read_json, read_jsonl, read_timeline, require, write_json, write_jsonl, write_text, write_timeline, VideoFile};
use super::synth::{read_cohort, Manifest, SilhouetteRecord};
use super::Layout;
use crate::classifier::{discretize, evaluate_aspect, GbcParams, SkillLevel, SkillReport};
use crate::error::{Error, Result};
use crate::kinematics::{action_stats, build_feature_vector, Aspect, FeatureTable, ProcedureKinematics, FEATURE_SCHEMA};
use crate::postprocess::{frame_accuracy, post_process, segment_metrics, ActionGrammar, MetricOptions, OverallMetrics};
use crate::segmenter::{segment_video, train, windows_from_stream, Checkpoint, Segmenter};
use crate::timeline::ActionTimeline;
use crate::tip::{to_global, Silhouette, TipPoint, TipReference, TipTrajectory};
use crate::tracker::{summarize, track_stream, Detection, TrackOutput};

fn manifest(layout: &Layout, stage: &str) -> Result<Manifest> {
    require(&layout.manifest(), stage)?;
    read_json(&layout.manifest())
}

fn grammar(cfg: &PipelineConfig, layout: &Layout) -> Result<ActionGrammar> {
    match &cfg.segment.grammar {
        Some(p) => ActionGrammar::load(p),
        None if layout.grammar().exists() => ActionGrammar::load(&layout.grammar()),
        None => Ok(ActionGrammar::surgical_default()),
    }
}

/// Train (or load) the segmenter, then label every procedure, writing raw
/// and post-processed timelines.
pub fn cmd_segment(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let m = manifest(layout, "synth")?;
    let ckpt = layout.segmenter_checkpoint();
    let model = if ckpt.exists() && !cfg.segment.retrain {
        Checkpoint::load(&ckpt)?.into_model()?
    } else {
        require(&layout.train_video(), "synth")?;
        require(&layout.train_timeline(), "synth")?;
        let video = read_json::<VideoFile>(&layout.train_video())?.to_clip()?;
        let labels = read_timeline(&layout.train_timeline(), cfg.fps)?;
        let samples = windows_from_stream(&video, labels.labels(), cfg.segment.model.frames)?;
        let mut model = Segmenter::new(crate::segmenter::SegmenterConfig { fps: cfg.fps, ..cfg.segment.model.clone() })?;
        let schedule = crate::segmenter::TrainSchedule { seed: stage_seed(cfg.seed, 2), ..cfg.segment.training.clone() };
        let report = train(&mut model, &samples, &[], &schedule)?;
        fs::create_dir_all(layout.root.join("models"))?;
        Checkpoint::from_model(&model).save(&ckpt)?;
        write_json(&layout.segmenter_training(), &report)?;
        model
    };
    let g = grammar(cfg, layout)?;
    for p in &m.procedures {
        require(&layout.video(&p.id), "synth")?;
        let video = read_json::<VideoFile>(&layout.video(&p.id))?.to_clip()?;
        let raw = ActionTimeline::new(segment_video(&model, &video)?.labels().to_vec(), cfg.fps)?;
        write_timeline(&layout.timeline_raw(&p.id), &raw)?;
        write_timeline(&layout.timeline(&p.id), &post_process(&raw, cfg.segment.min_segment_len, &g))?;
    }
    Ok(())
}

fn tip_reference(cfg: &PipelineConfig) -> Result<TipReference> {
    match &cfg.track.tip_reference {
        Some(p) => TipReference::load(p),
        None => Ok(TipReference::bundled()),
    }
}

/// Fuse detections into tracks and localise each tracked instrument's tip
/// on the silhouette of its associated detection.
pub fn cmd_track(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let m = manifest(layout, "synth")?;
    let reference = tip_reference(cfg)?;
    m.procedures
        .par_iter()
        .map(|p| {
            require(&layout.detections(&p.id), "synth")?;
            require(&layout.silhouettes(&p.id), "synth")?;
            let dets: Vec<Detection> = read_jsonl(&layout.detections(&p.id))?;
            let outputs = track_stream(&dets, Some(p.frames as u64), &cfg.track.fusion)?;
            write_jsonl(&layout.tracks(&p.id), &outputs)?;
            let sil: Vec<SilhouetteRecord> = read_jsonl(&layout.silhouettes(&p.id))?;
            let by_key: BTreeMap<(u64, usize), &SilhouetteRecord> = sil.iter().map(|s| ((s.mask.frame, s.detection), s)).collect();
            let mut tips = TipTrajectory::new();
            for o in &outputs {
                let Some(rec) = o.detection.and_then(|d| by_key.get(&(o.frame, d))) else { continue };
                let s = Silhouette::from_rle(&rec.mask)?;
                let local = s.locate_tip(reference.for_class(o.class_id)?)?;
                let (x, y) = to_global(local, s.origin);
                tips.push(TipPoint { frame: o.frame, track_id: o.track_id, class_id: o.class_id, x, y })?;
            }
            let mut buf = Vec::new();
            tips.write_csv(&mut buf)?;
            write_text(&layout.tips(&p.id), &String::from_utf8_lossy(&buf))
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(())
}

fn read_tips(path: &std::path::Path) -> Result<TipTrajectory> {
    TipTrajectory::read_csv(fs::File::open(path)?)
}

/// One feature table per aspect from predicted timelines and tip tracks.
pub fn cmd_features(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let m = manifest(layout, "synth")?;
    let rows = m
        .procedures
        .par_iter()
        .map(|p| {
            require(&layout.timeline(&p.id), "segment")?;
            require(&layout.tips(&p.id), "track")?;
            let t = read_timeline(&layout.timeline(&p.id), cfg.fps)?;
            let kin = ProcedureKinematics::from_trajectory(&read_tips(&layout.tips(&p.id))?, cfg.fps, cfg.features.smoothing)?;
            let stats = action_stats(&t);
            Aspect::ALL.iter().map(|&a| build_feature_vector(&kin, &stats, &t, a)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    for (k, &a) in Aspect::ALL.iter().enumerate() {
        let mut table = FeatureTable::new(a);
        for (p, vs) in m.procedures.iter().zip(&rows) {
            table.push(&p.id, &vs[k])?;
        }
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        write_text(&layout.features(a), &String::from_utf8_lossy(&buf))?;
    }
    Ok(())
}

fn read_table(layout: &Layout, a: Aspect) -> Result<FeatureTable> {
    require(&layout.features(a), "features")?;
    FeatureTable::read_csv(fs::File::open(layout.features(a))?, a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentRow {
    pub procedure: String,
    pub aspect: String,
    pub split: String,
    pub truth: String,
    pub predicted: String,
    pub p_poor: f64,
    pub p_moderate: f64,
    pub p_good: f64,
}

/// Per-aspect holdout evaluation with cross-validated selection; writes the
/// refit models, per-procedure predictions and the skill report.
pub fn cmd_assess(cfg: &PipelineConfig, layout: &Layout) -> Result<SkillReport> {
    require(&layout.cohort(), "synth")?;
    let cohort: BTreeMap<String, [f64; 5]> = read_cohort(&layout.cohort())?.into_iter().map(|r| (r.procedure, r.scores)).collect();
    let protocol = crate::classifier::Protocol {
        seed: stage_seed(cfg.seed, 3),
        base: GbcParams { seed: stage_seed(cfg.seed, 4), ..cfg.assess.base },
        ..cfg.assess.clone()
    };
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for (k, &a) in Aspect::ALL.iter().enumerate() {
        let table = read_table(layout, a)?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut ids = Vec::new();
        for (id, v) in &table.rows {
            let scores = cohort
                .get(id)
                .ok_or_else(|| Error::InvalidArgument(format!("procedure {id} has no rating in the cohort file")))?;
            x.push(v.clone());
            y.push(discretize(scores[k])?);
            ids.push(id.clone());
        }
        let e = evaluate_aspect(a.code(), FEATURE_SCHEMA, &x, &y, &protocol)?;
        let (_, test) = crate::classifier::stratified_split(&y.iter().map(|l| l.index()).collect::<Vec<_>>(), protocol.test_fraction, protocol.seed);
        for (i, id) in ids.iter().enumerate() {
            let p = e.model.predict_checked(FEATURE_SCHEMA, &x[i])?;
            rows.push(AssessmentRow {
                procedure: id.clone(),
                aspect: a.code().into(),
                split: if test.binary_search(&i).is_ok() { "test" } else { "train" }.into(),
                truth: y[i].name().into(),
                predicted: SkillLevel::from_index(p.label)?.name().into(),
                p_poor: p.probabilities[0],
                p_moderate: p.probabilities[1],
                p_good: p.probabilities[2],
            });
        }
        write_text(&layout.skill_model(a), &(e.model.to_json() + "\n"))?;
        reports.push(e.report);
    }
    let report = SkillReport::new(reports);
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_text(&layout.assessment(), &String::from_utf8_lossy(&bytes))?;
    write_json(&layout.skill_report(), &report)?;
    write_text(&layout.skill_report_text(), &report.render())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationSummary {
    /// Frame accuracy pooled over all procedures.
    pub frame_accuracy: f64,
    /// Per-procedure metrics averaged over procedures.
    pub mean: OverallMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingEvaluation {
    pub matched_outputs: usize,
    pub label_errors: usize,
    pub label_error_rate: f64,
    pub id_switches: usize,
    /// Ground-truth objects covered by more than one track id.
    pub fragmented_objects: usize,
    pub objects: usize,
    pub tip_points: usize,
    pub tip_error_mean: f64,
    pub tip_error_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format: String,
    pub procedures: usize,
    pub segmentation_raw: SegmentationSummary,
    pub segmentation: SegmentationSummary,
    pub tracking: TrackingEvaluation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skill: Option<SkillReport>,
}

pub const EVALUATION_FORMAT: &str = "microseg-evaluation/v1";

fn segmentation_summary(pairs: &[(ActionTimeline, ActionTimeline)]) -> Result<SegmentationSummary> {
    let opts = MetricOptions::default();
    let (mut correct, mut total) = (0.0, 0usize);
    let mut sum = OverallMetrics { accuracy: 0.0, precision: 0.0, recall: 0.0, jaccard: 0.0, f1: 0.0 };
    for (pred, gt) in pairs {
        correct += frame_accuracy(pred, gt)? * gt.len() as f64;
        total += gt.len();
        let o = segment_metrics(pred, gt, &opts)?.overall;
        sum.accuracy += o.accuracy;
        sum.precision += o.precision;
        sum.recall += o.recall;
        sum.jaccard += o.jaccard;
        sum.f1 += o.f1;
    }
    let n = pairs.len().max(1) as f64;
    Ok(SegmentationSummary {
        frame_accuracy: if total == 0 { 0.0 } else { correct / total as f64 },
        mean: OverallMetrics {
            accuracy: sum.accuracy / n,
            precision: sum.precision / n,
            recall: sum.recall / n,
            jaccard: sum.jaccard / n,
            f1: sum.f1 / n,
        },
    })
}

/// Score every stage output against the synthetic ground truth.
pub fn cmd_evaluate(cfg: &PipelineConfig, layout: &Layout) -> Result<EvaluationReport> {
    let m = manifest(layout, "synth")?;
    let mut raw_pairs = Vec::new();
    let mut pairs = Vec::new();
    let mut tracking = TrackingEvaluation {
        matched_outputs: 0,
        label_errors: 0,
        label_error_rate: 0.0,
        id_switches: 0,
        fragmented_objects: 0,
        objects: 0,
        tip_points: 0,
        tip_error_mean: 0.0,
        tip_error_max: 0.0,
    };
    let mut tip_error_sum = 0.0;
    for p in &m.procedures {
        let gt = read_timeline(&layout.truth_timeline(&p.id), cfg.fps)?;
        for (path, out) in [(layout.timeline_raw(&p.id), &mut raw_pairs), (layout.timeline(&p.id), &mut pairs)] {
            require(&path, "segment")?;
            out.push((read_timeline(&path, cfg.fps)?, gt.clone()));
        }
        require(&layout.tracks(&p.id), "track")?;
        require(&layout.tips(&p.id), "track")?;
        let outputs: Vec<TrackOutput> = read_jsonl(&layout.tracks(&p.id))?;
        let dets: Vec<Detection> = read_jsonl(&layout.detections(&p.id))?;
        let s = summarize(&outputs, &dets, &p.classes);
        tracking.matched_outputs += s.matched_outputs;
        tracking.label_errors += s.label_errors;
        tracking.id_switches += s.id_switches;
        tracking.fragmented_objects += s.fragmentation.values().filter(|&&n| n > 1).count();
        tracking.objects += p.classes.len();
        // tips against the true apex of the object behind each detection
        let truth = read_tips(&layout.truth_tips(&p.id))?;
        let truth: BTreeMap<(u64, u64), &TipPoint> = truth.points().iter().map(|t| ((t.frame, t.track_id), t)).collect();
        let mut per_frame: BTreeMap<u64, Vec<&Detection>> = BTreeMap::new();
        for d in &dets {
            per_frame.entry(d.frame).or_default().push(d);
        }
        let object_of: BTreeMap<(u64, u64), u64> = outputs
            .iter()
            .filter_map(|o| {
                let d = per_frame.get(&o.frame)?.get(o.detection?)?;
                Some(((o.frame, o.track_id), d.object_id?))
            })
            .collect();
        for tip in read_tips(&layout.tips(&p.id))?.points() {
            let Some(obj) = object_of.get(&(tip.frame, tip.track_id)) else { continue };
            let Some(t) = truth.get(&(tip.frame, *obj)) else { continue };
            let e = (tip.x - t.x).hypot(tip.y - t.y);
            tracking.tip_points += 1;
            tip_error_sum += e;
            tracking.tip_error_max = tracking.tip_error_max.max(e);
        }
    }
    if tracking.matched_outputs > 0 {
        tracking.label_error_rate = tracking.label_errors as f64 / tracking.matched_outputs as f64;
    }
    if tracking.tip_points > 0 {
        tracking.tip_error_mean = tip_error_sum / tracking.tip_points as f64;
    }
    let skill = if layout.skill_report().exists() { Some(read_json(&layout.skill_report())?) } else { None };
    let report = EvaluationReport {
        format: EVALUATION_FORMAT.into(),
        procedures: m.procedures.len(),
        segmentation_raw: segmentation_summary(&raw_pairs)?,
        segmentation: segmentation_summary(&pairs)?,
        tracking,
        skill,
    };
    write_json(&layout.evaluation(), &report)?;
    Ok(report)
}
