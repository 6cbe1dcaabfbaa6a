use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::series::{differentiate, relative_features, KinematicSeries, Quantity, RelativeSeries};
use super::stats::ActionStats;
use crate::error::{Error, Result};
use crate::timeline::{Action, ActionTimeline};
use crate::tip::TipTrajectory;

pub const FEATURE_SCHEMA: &str = "microseg-features/v1";

pub const NEEDLE_ACTIONS: [Action; 3] = [Action::NeedleHandling, Action::NeedleTouchVessel, Action::NeedleWithdrawing];
pub const KNOT_ACTIONS: [Action; 1] = [Action::KnotTying];

/// Graded skill aspects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Aspect {
    /// Overall handling of instruments.
    #[serde(rename = "HSI")]
    Hsi,
    /// Needle handling motion quality.
    #[serde(rename = "NHC")]
    Nhc,
    /// Knot tying motion quality.
    #[serde(rename = "KT")]
    Kt,
    /// Efficiency of needle actions.
    #[serde(rename = "MEN")]
    Men,
    /// Efficiency of knot tying.
    #[serde(rename = "MEKT")]
    Mekt,
}

impl Aspect {
    pub const ALL: [Aspect; 5] = [Aspect::Hsi, Aspect::Nhc, Aspect::Kt, Aspect::Men, Aspect::Mekt];

    pub fn code(self) -> &'static str {
        match self {
            Aspect::Hsi => "HSI",
            Aspect::Nhc => "NHC",
            Aspect::Kt => "KT",
            Aspect::Men => "MEN",
            Aspect::Mekt => "MEKT",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.code().eq_ignore_ascii_case(code))
    }

    /// Actions the aspect is restricted to; `None` means the whole procedure.
    pub fn actions(self) -> Option<&'static [Action]> {
        match self {
            Aspect::Hsi => None,
            Aspect::Nhc | Aspect::Men => Some(&NEEDLE_ACTIONS),
            Aspect::Kt | Aspect::Mekt => Some(&KNOT_ACTIONS),
        }
    }

    /// Motion aspects summarise kinematics, the others action statistics.
    pub fn is_motion(self) -> bool {
        matches!(self, Aspect::Hsi | Aspect::Nhc | Aspect::Kt)
    }
}

impl std::fmt::Display for Aspect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

const STATS: [&str; 4] = ["mean", "std", "max", "p95"];
const QUANTITIES: [(&str, Quantity); 3] =
    [("speed", Quantity::Speed), ("accel", Quantity::Acceleration), ("jerk", Quantity::Jerk)];
const ACTION_FIELDS: [&str; 6] = ["count", "mean_s", "std_s", "max_s", "total_s", "share"];

/// Column names of an aspect's vector, in order.
pub fn feature_names(aspect: Aspect) -> Vec<String> {
    let mut names = Vec::new();
    if aspect.is_motion() {
        for slot in ["inst1", "inst2"] {
            for (q, _) in QUANTITIES {
                names.extend(STATS.iter().map(|s| format!("{slot}_{q}_{s}")));
            }
        }
        for r in ["distance", "rel_speed", "angle"] {
            names.extend(STATS.iter().map(|s| format!("pair_{r}_{s}")));
        }
    } else {
        for a in aspect.actions().unwrap_or(&[]) {
            names.extend(ACTION_FIELDS.iter().map(|f| format!("{}_{f}", a.name())));
        }
    }
    names.push("present".into());
    names
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Mean, population standard deviation, maximum and 95th percentile; zeros
/// for no data.
pub fn summarize(values: &[f64]) -> [f64; 4] {
    if values.is_empty() {
        return [0.0; 4];
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    [mean, var.sqrt(), sorted[sorted.len() - 1], percentile(&sorted, 0.95)]
}

/// Kinematics of one procedure: the two instruments with the most tip
/// samples (longest first) and their relation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcedureKinematics {
    pub fps: f64,
    pub instruments: Vec<KinematicSeries>,
    pub relative: RelativeSeries,
}

impl ProcedureKinematics {
    pub fn from_trajectory(traj: &TipTrajectory, fps: f64, smooth: usize) -> Result<Self> {
        let mut tracks: Vec<_> = traj.track_ids().into_iter().map(|id| traj.track(id)).collect();
        // stable sort keeps lower track ids first among equals
        tracks.sort_by_key(|t| std::cmp::Reverse(t.len()));
        tracks.truncate(2);
        let instruments = tracks.iter().map(|t| differentiate(t, fps, smooth)).collect::<Result<Vec<_>>>()?;
        let relative = match tracks.as_slice() {
            [a, b] => relative_features(a, b, fps)?,
            _ => RelativeSeries::default(),
        };
        Ok(Self { fps, instruments, relative })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillFeatureVector {
    pub schema: String,
    pub aspect: Aspect,
    pub values: Vec<f64>,
}

impl SkillFeatureVector {
    /// Error unless the vector follows the current schema for `aspect`.
    pub fn check(&self, aspect: Aspect) -> Result<()> {
        if self.schema != FEATURE_SCHEMA {
            return Err(Error::Schema { expected: FEATURE_SCHEMA.into(), got: self.schema.clone() });
        }
        let want = feature_names(aspect).len();
        if self.aspect != aspect || self.values.len() != want {
            return Err(Error::Schema {
                expected: format!("{aspect} with {want} values"),
                got: format!("{} with {} values", self.aspect, self.values.len()),
            });
        }
        Ok(())
    }
}

fn restricted(samples: Vec<(u64, f64)>, keep: &dyn Fn(u64) -> bool) -> Vec<f64> {
    samples.into_iter().filter(|(f, _)| keep(*f)).map(|(_, v)| v).collect()
}

pub fn build_feature_vector(
    kin: &ProcedureKinematics,
    stats: &ActionStats,
    timeline: &ActionTimeline,
    aspect: Aspect,
) -> Result<SkillFeatureVector> {
    if kin.fps != timeline.fps() || stats.fps != timeline.fps() || stats.total_frames != timeline.len() {
        return Err(Error::Schema {
            expected: format!("inputs at {} fps over {} frames", timeline.fps(), timeline.len()),
            got: format!("kinematics at {} fps, statistics at {} fps over {} frames", kin.fps, stats.fps, stats.total_frames),
        });
    }
    let labels = timeline.labels();
    let mut values = Vec::new();
    let present = if aspect.is_motion() {
        let keep = |f: u64| match aspect.actions() {
            None => true,
            Some(set) => labels.get(f as usize).is_some_and(|l| set.iter().any(|a| a.id() == *l)),
        };
        for slot in 0..2 {
            for (_, q) in QUANTITIES {
                let v = kin.instruments.get(slot).map(|k| restricted(k.samples(q), &keep)).unwrap_or_default();
                values.extend(summarize(&v));
            }
        }
        let rel = &kin.relative;
        let abs = |v: Vec<f64>| v.into_iter().map(f64::abs).collect::<Vec<_>>();
        values.extend(summarize(&restricted(rel.distance_samples(), &keep)));
        values.extend(summarize(&abs(restricted(rel.relative_speed_samples(), &keep))));
        values.extend(summarize(&abs(restricted(rel.angular_samples(), &keep))));
        match aspect.actions() {
            None => kin.instruments.iter().any(|k| !k.segments.is_empty()),
            Some(set) => set.iter().any(|a| stats.count(a.id()) > 0),
        }
    } else {
        let set = aspect.actions().unwrap_or(&[]);
        for a in set {
            let d = stats.durations_s(a.id());
            let s = summarize(&d);
            let share = if stats.total_frames > 0 { stats.cumulative_s(a.id()) / stats.total_s() } else { 0.0 };
            values.extend([d.len() as f64, s[0], s[1], s[2], stats.cumulative_s(a.id()), share]);
        }
        set.iter().any(|a| stats.count(a.id()) > 0)
    };
    if !present {
        values.iter_mut().for_each(|v| *v = 0.0);
    }
    values.push(if present { 1.0 } else { 0.0 });
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature vector"));
    }
    Ok(SkillFeatureVector { schema: FEATURE_SCHEMA.into(), aspect, values })
}

/// One row per procedure for a single aspect. Rows carry the schema
/// version and aspect code so mismatched files are rejected on read.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub aspect: Aspect,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl FeatureTable {
    pub fn new(aspect: Aspect) -> Self {
        Self { aspect, rows: Vec::new() }
    }

    pub fn push(&mut self, procedure: &str, v: &SkillFeatureVector) -> Result<()> {
        v.check(self.aspect)?;
        self.rows.push((procedure.to_string(), v.values.clone()));
        Ok(())
    }

    fn header(aspect: Aspect) -> Vec<String> {
        let mut h = vec!["schema".to_string(), "aspect".to_string(), "procedure".to_string()];
        h.extend(feature_names(aspect));
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(Self::header(self.aspect))?;
        for (p, v) in &self.rows {
            let mut rec = vec![FEATURE_SCHEMA.to_string(), self.aspect.code().to_string(), p.clone()];
            rec.extend(v.iter().map(|x| x.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, aspect: Aspect) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let want = Self::header(aspect);
        let got: Vec<String> = rd.headers()?.iter().map(String::from).collect();
        if got != want {
            return Err(Error::Schema { expected: want.join(","), got: got.join(",") });
        }
        let mut t = Self::new(aspect);
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let bad = |m: String| Error::Parse { path: format!("{aspect} features"), line: i + 2, message: m };
            if &rec[0] != FEATURE_SCHEMA {
                return Err(Error::Schema { expected: FEATURE_SCHEMA.into(), got: rec[0].to_string() });
            }
            if &rec[1] != aspect.code() {
                return Err(Error::Schema { expected: aspect.code().into(), got: rec[1].to_string() });
            }
            let values = rec
                .iter()
                .skip(3)
                .map(|s| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            t.rows.push((rec[2].to_string(), values));
        }
        Ok(t)
    }
}
