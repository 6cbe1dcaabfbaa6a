use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::hull::Point;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TipPoint {
    pub frame: u64,
    pub track_id: u64,
    #[serde(rename = "class")]
    pub class_id: u8,
    pub x: f64,
    pub y: f64,
}

pub fn to_global(local: Point, origin: Point) -> Point {
    (origin.0 + local.0, origin.1 + local.1)
}

/// Tip positions over time, at most one per frame and track.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TipTrajectory {
    points: Vec<TipPoint>,
    seen: HashSet<(u64, u64)>,
    bounds: Option<(f64, f64)>,
}

impl TipTrajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reject points outside `[0, width] × [0, height]`.
    pub fn with_bounds(width: f64, height: f64) -> Self {
        Self { bounds: Some((width, height)), ..Self::default() }
    }

    pub fn push(&mut self, p: TipPoint) -> Result<()> {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(Error::NonFinite("tip point"));
        }
        if let Some((w, h)) = self.bounds {
            if !(0.0..=w).contains(&p.x) || !(0.0..=h).contains(&p.y) {
                return Err(Error::InvalidArgument(format!("tip ({}, {}) outside the {w}x{h} frame", p.x, p.y)));
            }
        }
        if !self.seen.insert((p.frame, p.track_id)) {
            return Err(Error::DuplicatePoint { frame: p.frame, track_id: p.track_id });
        }
        self.points.push(p);
        Ok(())
    }

    pub fn points(&self) -> &[TipPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points of one track in frame order.
    pub fn track(&self, track_id: u64) -> Vec<TipPoint> {
        let mut v: Vec<TipPoint> = self.points.iter().filter(|p| p.track_id == track_id).copied().collect();
        v.sort_by_key(|p| p.frame);
        v
    }

    pub fn track_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.seen.iter().map(|&(_, t)| t).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for p in &self.points {
            wr.serialize(p)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut t = Self::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            t.push(row?)?;
        }
        Ok(t)
    }
}
