use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::tip::TipPoint;

/// Derivative of evenly spaced samples: central differences inside,
/// second-order one-sided differences at the ends (first-order for two
/// samples). Exact for polynomials up to degree two.
pub fn derivative(x: &[f64], fps: f64) -> Vec<f64> {
    let n = x.len();
    match n {
        0 | 1 => Vec::new(),
        2 => vec![(x[1] - x[0]) * fps; 2],
        _ => {
            let mut d = vec![0.0; n];
            d[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) * fps / 2.0;
            for i in 1..n - 1 {
                d[i] = (x[i + 1] - x[i - 1]) * fps / 2.0;
            }
            d[n - 1] = (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) * fps / 2.0;
            d
        }
    }
}

/// Centred moving average whose window shrinks symmetrically near the ends.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let half = window.max(1) / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            x[i - h..=i + h].iter().sum::<f64>() / (2 * h + 1) as f64
        })
        .collect()
}

/// Map an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let y = a.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Runs of consecutive frames.
pub fn split_runs<T, F: Fn(&T) -> u64>(items: &[T], frame: F) -> Vec<&[T]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=items.len() {
        if i == items.len() || frame(&items[i]) != frame(&items[i - 1]) + 1 {
            if i > start {
                out.push(&items[start..i]);
            }
            start = i;
        }
    }
    out
}

/// Derivative magnitudes over one gap-free run of a track.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicSegment {
    pub frames: Vec<u64>,
    /// px/s; empty below two samples.
    pub speed: Vec<f64>,
    /// px/s²; empty below three samples.
    pub acceleration: Vec<f64>,
    /// px/s³; empty below four samples.
    pub jerk: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicSeries {
    pub track_id: u64,
    pub class_id: u8,
    pub fps: f64,
    pub segments: Vec<KinematicSegment>,
}

impl KinematicSeries {
    /// `(frame, value)` pairs of one quantity across all segments.
    pub fn samples(&self, which: Quantity) -> Vec<(u64, f64)> {
        let mut out = Vec::new();
        for s in &self.segments {
            let v = match which {
                Quantity::Speed => &s.speed,
                Quantity::Acceleration => &s.acceleration,
                Quantity::Jerk => &s.jerk,
            };
            out.extend(s.frames.iter().copied().zip(v.iter().copied()));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Speed,
    Acceleration,
    Jerk,
}

fn magnitudes(dx: &[f64], dy: &[f64]) -> Vec<f64> {
    dx.iter().zip(dy).map(|(a, b)| a.hypot(*b)).collect()
}

fn check_fps(fps: f64) -> Result<()> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
    }
    Ok(())
}

fn check_order(points: &[TipPoint]) -> Result<()> {
    for w in points.windows(2) {
        if w[1].frame <= w[0].frame {
            return Err(Error::NonMonotonicFrame { previous: w[0].frame, got: w[1].frame });
        }
    }
    Ok(())
}

/// Speed, acceleration and jerk of one track's tip, never differencing
/// across missing frames. `smooth` is the moving-average window applied to
/// positions first (1 disables it).
pub fn differentiate(points: &[TipPoint], fps: f64, smooth: usize) -> Result<KinematicSeries> {
    check_fps(fps)?;
    check_order(points)?;
    let (track_id, class_id) = points.first().map(|p| (p.track_id, p.class_id)).unwrap_or((0, 0));
    let mut segments = Vec::new();
    for run in split_runs(points, |p| p.frame) {
        if run.len() < 2 {
            continue;
        }
        let x = moving_average(&run.iter().map(|p| p.x).collect::<Vec<_>>(), smooth);
        let y = moving_average(&run.iter().map(|p| p.y).collect::<Vec<_>>(), smooth);
        let (vx, vy) = (derivative(&x, fps), derivative(&y, fps));
        let (ax, ay) = (derivative(&vx, fps), derivative(&vy, fps));
        let (jx, jy) = (derivative(&ax, fps), derivative(&ay, fps));
        let n = run.len();
        segments.push(KinematicSegment {
            frames: run.iter().map(|p| p.frame).collect(),
            speed: magnitudes(&vx, &vy),
            acceleration: if n >= 3 { magnitudes(&ax, &ay) } else { Vec::new() },
            jerk: if n >= 4 { magnitudes(&jx, &jy) } else { Vec::new() },
        });
    }
    Ok(KinematicSeries { track_id, class_id, fps, segments })
}

/// Relations between two instruments over one run of shared frames.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeSegment {
    pub frames: Vec<u64>,
    /// px
    pub distance: Vec<f64>,
    /// Rate of change of distance, px/s.
    pub relative_speed: Vec<f64>,
    /// Change of the bearing from B to A since the previous frame, in
    /// `(−π, π]` radians per frame; one shorter than `frames`, aligned with
    /// `frames[1..]`.
    pub angular_displacement: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelativeSeries {
    pub segments: Vec<RelativeSegment>,
}

impl RelativeSeries {
    pub fn distance_samples(&self) -> Vec<(u64, f64)> {
        self.segments.iter().flat_map(|s| s.frames.iter().copied().zip(s.distance.iter().copied())).collect()
    }

    pub fn relative_speed_samples(&self) -> Vec<(u64, f64)> {
        self.segments
            .iter()
            .flat_map(|s| s.frames.iter().copied().zip(s.relative_speed.iter().copied()))
            .collect()
    }

    pub fn angular_samples(&self) -> Vec<(u64, f64)> {
        self.segments
            .iter()
            .flat_map(|s| s.frames[1..].iter().copied().zip(s.angular_displacement.iter().copied()))
            .collect()
    }
}

pub fn relative_features(a: &[TipPoint], b: &[TipPoint], fps: f64) -> Result<RelativeSeries> {
    check_fps(fps)?;
    check_order(a)?;
    check_order(b)?;
    let mut shared: Vec<(u64, f64, f64)> = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].frame.cmp(&b[j].frame) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared.push((a[i].frame, a[i].x - b[j].x, a[i].y - b[j].y));
                i += 1;
                j += 1;
            }
        }
    }
    let mut segments = Vec::new();
    for run in split_runs(&shared, |s| s.0) {
        let distance: Vec<f64> = run.iter().map(|s| s.1.hypot(s.2)).collect();
        let bearing: Vec<f64> = run.iter().map(|s| s.2.atan2(s.1)).collect();
        segments.push(RelativeSegment {
            frames: run.iter().map(|s| s.0).collect(),
            relative_speed: if run.len() >= 2 { derivative(&distance, fps) } else { vec![0.0] },
            distance,
            angular_displacement: bearing.windows(2).map(|w| wrap_angle(w[1] - w[0])).collect(),
        });
    }
    Ok(RelativeSeries { segments })
}
