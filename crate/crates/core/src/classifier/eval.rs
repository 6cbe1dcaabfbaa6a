use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gbc::{gbc_fit, GbcModel, GbcParams};
use super::label::{SkillLevel, NUM_LEVELS};
use crate::error::{Error, Result};

pub const REPORT_FORMAT: &str = "microseg-skill-report/v1";

/// Rows are true classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix(pub Vec<Vec<usize>>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl ConfusionMatrix {
    pub fn from_predictions(truth: &[usize], pred: &[usize], n_classes: usize) -> Self {
        let mut m = vec![vec![0; n_classes]; n_classes];
        for (&t, &p) in truth.iter().zip(pred) {
            m[t][p] += 1;
        }
        Self(m)
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio((0..self.0.len()).map(|k| self.0[k][k]).sum(), self.total())
    }

    /// Precision, recall and F1 of one class; 0/0 counts as 0.
    pub fn class_scores(&self, k: usize) -> ClassScores {
        let tp = self.0[k][k];
        let predicted: usize = self.0.iter().map(|r| r[k]).sum();
        let support: usize = self.0[k].iter().sum();
        let (precision, recall) = (ratio(tp, predicted), ratio(tp, support));
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        ClassScores { precision, recall, f1, support }
    }
}

fn shuffled_by_class(y: &[usize], seed: u64) -> Vec<Vec<usize>> {
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut by_class {
        v.shuffle(&mut rng);
    }
    by_class
}

/// Per-class shuffled holdout of `round(n_c · test_fraction)` rows of each
/// class. Returns sorted (train, test) indices.
pub fn stratified_split(y: &[usize], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for idx in shuffled_by_class(y, seed) {
        let k = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Stratified folds: each class is shuffled and dealt round-robin, the deal
/// continuing across classes so fold sizes differ by at most one.
pub fn stratified_folds(y: &[usize], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for idx in shuffled_by_class(y, seed) {
        for i in idx {
            out[next % folds].push(i);
            next += 1;
        }
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    out
}

fn subset<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

fn has_two_classes(y: &[usize]) -> bool {
    y.iter().any(|&c| c != y[0])
}

/// Out-of-fold predictions for every row at each of `round_grid` (ascending)
/// ensemble sizes, fitting one model per fold with the largest size.
pub fn out_of_fold_predictions(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    params: &GbcParams,
    round_grid: &[usize],
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let max_rounds = round_grid.iter().copied().max().unwrap_or(0);
    let split = stratified_folds(y, folds, seed);
    let per_fold: Vec<Result<Vec<(usize, Vec<usize>)>>> = split
        .par_iter()
        .map(|held| {
            let train: Vec<usize> = (0..y.len()).filter(|i| held.binary_search(i).is_err()).collect();
            let ty = subset(y, &train);
            let model = if has_two_classes(&ty) {
                Some(gbc_fit(&subset(x, &train), &ty, n_classes, "", &GbcParams { rounds: max_rounds, ..*params })?)
            } else {
                None
            };
            held.iter()
                .map(|&i| {
                    let labels = round_grid
                        .iter()
                        .map(|&r| match &model {
                            Some(m) => m.predict_at(&x[i], r).map(|p| p.label),
                            None => Ok(ty[0]),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok((i, labels))
                })
                .collect()
        })
        .collect();
    let mut out = vec![Vec::new(); y.len()];
    for fold in per_fold {
        for (i, labels) in fold? {
            out[i] = labels;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMode {
    /// Cross-validation picks rounds and depth from the grid.
    Select,
    /// Cross-validation only estimates accuracy of the base parameters.
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    pub test_fraction: f64,
    pub folds: usize,
    pub seed: u64,
    pub cv_mode: CvMode,
    pub rounds_grid: Vec<usize>,
    pub depth_grid: Vec<usize>,
    pub base: GbcParams,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            folds: 5,
            seed: 0,
            cv_mode: CvMode::Select,
            rounds_grid: vec![50, 100, 200],
            depth_grid: vec![2, 3, 4],
            base: GbcParams::default(),
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        if self.folds < 2 {
            return Err(Error::Config("at least two folds are needed".into()));
        }
        if self.cv_mode == CvMode::Select && (self.rounds_grid.is_empty() || self.depth_grid.is_empty()) {
            return Err(Error::Config("selection needs non-empty rounds and depth grids".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: SkillLevel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectReport {
    pub aspect: String,
    pub n_train: usize,
    pub n_test: usize,
    pub rounds: usize,
    pub max_depth: usize,
    pub cv_accuracy: f64,
    pub accuracy: f64,
    /// Good, Moderate, Poor.
    pub levels: Vec<LevelReport>,
    pub confusion: ConfusionMatrix,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillReport {
    pub format: String,
    pub aspects: Vec<AspectReport>,
    pub mean_accuracy: f64,
}

impl SkillReport {
    pub fn new(aspects: Vec<AspectReport>) -> Self {
        let mean_accuracy = if aspects.is_empty() {
            0.0
        } else {
            aspects.iter().map(|a| a.accuracy).sum::<f64>() / aspects.len() as f64
        };
        Self { format: REPORT_FORMAT.into(), aspects, mean_accuracy }
    }

    /// Plain-text table: one block of levels per aspect, then accuracies.
    pub fn render(&self) -> String {
        let mut s = String::from("aspect  level     precision  recall  f1\n");
        for a in &self.aspects {
            for l in &a.levels {
                s += &format!("{:<7} {:<9} {:>9.2} {:>7.2} {:>5.2}\n", a.aspect, l.level.name(), l.precision, l.recall, l.f1);
            }
        }
        for a in &self.aspects {
            s += &format!("{} accuracy {:.1}%\n", a.aspect, 100.0 * a.accuracy);
        }
        s += &format!("mean accuracy {:.1}%\n", 100.0 * self.mean_accuracy);
        s
    }
}

/// Outcome of evaluating one aspect, with the model refit on the whole
/// training portion.
pub struct AspectEvaluation {
    pub report: AspectReport,
    pub model: GbcModel,
}

/// Stratified holdout, cross-validation on the training part, refit and
/// test-set scoring for one aspect.
pub fn evaluate_aspect(
    aspect: &str,
    feature_schema: &str,
    x: &[Vec<f64>],
    y: &[SkillLevel],
    protocol: &Protocol,
) -> Result<AspectEvaluation> {
    protocol.validate()?;
    if x.is_empty() {
        return Err(Error::Empty("evaluation dataset"));
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let yi: Vec<usize> = y.iter().map(|l| l.index()).collect();
    let mut warnings = Vec::new();
    for level in SkillLevel::ALL {
        let n = yi.iter().filter(|&&c| c == level.index()).count();
        if n > 0 && n < protocol.folds {
            warnings.push(format!("{aspect}: {n} {} samples, fewer than {} folds; stratification relaxed", level.name(), protocol.folds));
        }
    }
    let (train, test) = stratified_split(&yi, protocol.test_fraction, protocol.seed);
    let (tx, ty) = (subset(x, &train), subset(&yi, &train));
    if !has_two_classes(&ty) {
        return Err(Error::InvalidArgument(format!("{aspect}: training portion holds a single skill level")));
    }
    let cv_seed = protocol.seed.wrapping_add(1);
    let folds = protocol.folds.min(train.len());
    let mut best = (protocol.base.rounds, protocol.base.max_depth, f64::NEG_INFINITY);
    let depths = match protocol.cv_mode {
        CvMode::Select => protocol.depth_grid.clone(),
        CvMode::Estimate => vec![protocol.base.max_depth],
    };
    let rounds = match protocol.cv_mode {
        CvMode::Select => protocol.rounds_grid.clone(),
        CvMode::Estimate => vec![protocol.base.rounds],
    };
    // grid order decides ties: fewer rounds, then shallower trees
    for &depth in &depths {
        let params = GbcParams { max_depth: depth, ..protocol.base };
        let oof = out_of_fold_predictions(&tx, &ty, NUM_LEVELS, &params, &rounds, folds, cv_seed)?;
        for (j, &r) in rounds.iter().enumerate() {
            let acc = oof.iter().zip(&ty).filter(|(p, &t)| p[j] == t).count() as f64 / ty.len() as f64;
            let better = acc > best.2 || (acc == best.2 && (r, depth) < (best.0, best.1));
            if better {
                best = (r, depth, acc);
            }
        }
    }
    let params = GbcParams { rounds: best.0, max_depth: best.1, ..protocol.base };
    let model = gbc_fit(&tx, &ty, NUM_LEVELS, feature_schema, &params)?;
    let pred = test.iter().map(|&i| model.predict(&x[i]).map(|p| p.label)).collect::<Result<Vec<_>>>()?;
    let truth = subset(&yi, &test);
    let confusion = ConfusionMatrix::from_predictions(&truth, &pred, NUM_LEVELS);
    let levels = SkillLevel::ALL
        .iter()
        .rev()
        .map(|&level| {
            let s = confusion.class_scores(level.index());
            LevelReport { level, precision: s.precision, recall: s.recall, f1: s.f1, support: s.support }
        })
        .collect();
    Ok(AspectEvaluation {
        report: AspectReport {
            aspect: aspect.into(),
            n_train: train.len(),
            n_test: test.len(),
            rounds: best.0,
            max_depth: best.1,
            cv_accuracy: best.2,
            accuracy: confusion.accuracy(),
            levels,
            confusion,
            warnings,
        },
        model,
    })
}
