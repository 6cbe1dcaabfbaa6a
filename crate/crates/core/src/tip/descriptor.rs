use serde::{Deserialize, Serialize};

use std::f64::consts::SQRT_2;

use super::hull::{polygon_centroid, Point};
use crate::error::{Error, Result};

pub const DESCRIPTOR_LEN: usize = 8;
pub const ANGLE: usize = 0;
pub const CENTROID_DISTANCE: usize = 1;
pub const CORNER_DISTANCES: std::ops::Range<usize> = 2..6;
pub const POSITION: std::ops::Range<usize> = 6..8;

/// Geometry around one hull vertex, scale-free:
///
/// - `[0]` cosine of the interior hull angle, near 1 at sharp vertices
/// - `[1]` distance to the hull centroid over the box diagonal
/// - `[2..6]` distances to the four box corners over the diagonal, ascending,
///   halved
/// - `[6..8]` offsets from the box centre over the half extents, absolute
///   and larger first, divided by √2
///
/// The block scalings give each cue about the same weight in a cosine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShapeDescriptor(pub Vec<f64>);

impl ShapeDescriptor {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &ShapeDescriptor) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        dot / (self.norm() * other.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub point: Point,
    pub descriptor: ShapeDescriptor,
}

fn interior_angle(prev: Point, v: Point, next: Point) -> f64 {
    let a = (prev.0 - v.0, prev.1 - v.1);
    let b = (next.0 - v.0, next.1 - v.1);
    let (na, nb) = ((a.0 * a.0 + a.1 * a.1).sqrt(), (b.0 * b.0 + b.1 * b.1).sqrt());
    ((a.0 * b.0 + a.1 * b.1) / (na * nb)).clamp(-1.0, 1.0).acos()
}

fn dist(a: Point, b: Point) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// One descriptor per hull vertex, for a hull in box-local coordinates of a
/// `width × height` box. Hulls with fewer than three vertices count as
/// perfectly sharp.
pub fn candidate_descriptors(hull: &[Point], width: f64, height: f64) -> Vec<Candidate> {
    let n = hull.len();
    let diag = (width * width + height * height).sqrt();
    let centroid = polygon_centroid(hull);
    let corners = [(0.0, 0.0), (width, 0.0), (width, height), (0.0, height)];
    (0..n)
        .map(|i| {
            let v = hull[i];
            let angle = if n >= 3 {
                interior_angle(hull[(i + n - 1) % n], v, hull[(i + 1) % n]).cos()
            } else {
                1.0
            };
            let mut cd: Vec<f64> = corners.iter().map(|&c| dist(v, c) / diag / 2.0).collect();
            cd.sort_by(f64::total_cmp);
            let px = ((v.0 - width / 2.0) / (width / 2.0)).abs();
            let py = ((v.1 - height / 2.0) / (height / 2.0)).abs();
            let mut d = Vec::with_capacity(DESCRIPTOR_LEN);
            d.push(angle);
            d.push(dist(v, centroid) / diag);
            d.extend(cd);
            d.push(px.max(py) / SQRT_2);
            d.push(px.min(py) / SQRT_2);
            Candidate {
                point: v,
                descriptor: ShapeDescriptor(d),
            }
        })
        .collect()
}

/// Index, point and similarity of the candidate most similar to `reference`
/// by cosine; the earliest wins ties, zero descriptors are skipped.
pub fn select_tip(candidates: &[Candidate], reference: &ShapeDescriptor) -> Result<(usize, Point, f64)> {
    if reference.norm() == 0.0 || !reference.norm().is_finite() {
        return Err(Error::InvalidArgument("reference descriptor has zero norm".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        if c.descriptor.0.len() != reference.0.len() {
            return Err(Error::Shape(format!(
                "descriptor length {} differs from reference {}",
                c.descriptor.0.len(),
                reference.0.len()
            )));
        }
        if c.descriptor.norm() == 0.0 {
            continue;
        }
        let s = reference.cosine(&c.descriptor);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    let (i, s) = best.ok_or(Error::Empty("no candidate with a non-zero descriptor"))?;
    Ok((i, candidates[i].point, s))
}
