use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeline::{encode_runs, ActionTimeline, Segment, ACTION_NAMES, NUM_ACTIONS};

fn check_lengths(pred: &ActionTimeline, gt: &ActionTimeline) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::Empty("timeline"));
    }
    Ok(())
}

pub fn frame_accuracy(pred: &ActionTimeline, gt: &ActionTimeline) -> Result<f64> {
    check_lengths(pred, gt)?;
    let hits = pred.labels().iter().zip(gt.labels()).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / gt.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JaccardMode {
    /// Mean over classes of frame-level intersection over union.
    #[default]
    Frame,
    /// Mean over classes of the average best same-class IoU per true segment.
    Segmental,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub iou_threshold: f64,
    pub jaccard: JaccardMode,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            jaccard: JaccardMode::Frame,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: u8,
    pub name: String,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub jaccard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub jaccard: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub iou_threshold: f64,
    pub jaccard_mode: JaccardMode,
    pub overall: OverallMetrics,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Greedy one-to-one matching by descending IoU; pairs below `threshold`
/// never match. Returns `(pred_index, gt_index)` pairs.
pub fn greedy_match(pred: &[Segment], gt: &[Segment], threshold: f64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let iou = p.iou(g);
            if iou >= threshold {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gt.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            out.push((i, j));
        }
    }
    out
}

fn frame_jaccard(pred: &[u8], gt: &[u8], class: u8) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        let (a, b) = (p == class, g == class);
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    ratio(inter, union)
}

fn segmental_jaccard(pred: &[Segment], gt: &[Segment]) -> f64 {
    if gt.is_empty() {
        return 0.0;
    }
    let total: f64 = gt
        .iter()
        .map(|g| pred.iter().map(|p| p.iou(g)).fold(0.0, f64::max))
        .sum();
    total / gt.len() as f64
}

/// Segment-level precision, recall and F1 plus Jaccard, overall and for
/// every class present in either timeline.
pub fn segment_metrics(pred: &ActionTimeline, gt: &ActionTimeline, options: &MetricOptions) -> Result<SegmentationReport> {
    check_lengths(pred, gt)?;
    let thr = options.iou_threshold;
    if !(thr > 0.0 && thr <= 1.0) {
        return Err(Error::InvalidArgument(format!("IoU threshold {thr} outside (0, 1]")));
    }
    let pred_runs = encode_runs(pred.labels());
    let gt_runs = encode_runs(gt.labels());
    let mut per_class = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for class in 0..NUM_ACTIONS as u8 {
        let ps: Vec<Segment> = pred_runs.iter().filter(|s| s.class_id == class).copied().collect();
        let gs: Vec<Segment> = gt_runs.iter().filter(|s| s.class_id == class).copied().collect();
        if ps.is_empty() && gs.is_empty() {
            continue;
        }
        let matched = greedy_match(&ps, &gs, thr).len();
        let (ctp, cfp, cfn) = (matched, ps.len() - matched, gs.len() - matched);
        tp += ctp;
        fp += cfp;
        fn_ += cfn;
        let precision = ratio(ctp, ctp + cfp);
        let recall = ratio(ctp, ctp + cfn);
        let jaccard = match options.jaccard {
            JaccardMode::Frame => frame_jaccard(pred.labels(), gt.labels(), class),
            JaccardMode::Segmental => segmental_jaccard(&ps, &gs),
        };
        per_class.push(ClassMetrics {
            class_id: class,
            name: ACTION_NAMES[class as usize].to_string(),
            true_positives: ctp,
            false_positives: cfp,
            false_negatives: cfn,
            precision,
            recall,
            f1: f1(precision, recall),
            jaccard,
        });
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let jaccard = per_class.iter().map(|c| c.jaccard).sum::<f64>() / per_class.len() as f64;
    Ok(SegmentationReport {
        iou_threshold: thr,
        jaccard_mode: options.jaccard,
        overall: OverallMetrics {
            accuracy: frame_accuracy(pred, gt)?,
            precision,
            recall,
            jaccard,
            f1: f1(precision, recall),
        },
        per_class,
    })
}
