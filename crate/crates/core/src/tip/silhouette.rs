use serde::{Deserialize, Serialize};

use super::descriptor::{candidate_descriptors, select_tip, Candidate, ShapeDescriptor};
use super::hull::{convex_hull, cross, Point};
use crate::error::{Error, Result};

/// Binary instrument mask over a box-local pixel grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Silhouette {
    pub frame: u64,
    pub track_id: u64,
    /// Top-left corner of the grid in frame coordinates.
    pub origin: Point,
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
}

/// Serialized form: run lengths alternating background and foreground,
/// starting with background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RleSilhouette {
    pub frame: u64,
    pub track_id: u64,
    pub origin: [f64; 2],
    pub width: usize,
    pub height: usize,
    pub rle: Vec<usize>,
}

impl Silhouette {
    pub fn new(frame: u64, track_id: u64, origin: Point, width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::Shape(format!("mask has {} pixels, grid is {width}x{height}", mask.len())));
        }
        if !origin.0.is_finite() || !origin.1.is_finite() {
            return Err(Error::NonFinite("silhouette origin"));
        }
        Ok(Self { frame, track_id, origin, width, height, mask })
    }

    /// Foreground pixel centres in box-local coordinates.
    pub fn foreground_points(&self) -> Vec<Point> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| ((i % self.width) as f64 + 0.5, (i / self.width) as f64 + 0.5))
            .collect()
    }

    pub fn candidates(&self) -> Result<Vec<Candidate>> {
        let pts = self.foreground_points();
        if pts.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "silhouette at frame {} has {} foreground pixels, need 3",
                self.frame,
                pts.len()
            )));
        }
        let hull = convex_hull(&pts)?;
        Ok(candidate_descriptors(&hull, self.width as f64, self.height as f64))
    }

    /// Box-local tip position.
    pub fn locate_tip(&self, reference: &ShapeDescriptor) -> Result<Point> {
        Ok(select_tip(&self.candidates()?, reference)?.1)
    }

    pub fn to_rle(&self) -> RleSilhouette {
        let mut rle = Vec::new();
        let mut current = false;
        let mut run = 0;
        for &on in &self.mask {
            if on == current {
                run += 1;
            } else {
                rle.push(run);
                current = on;
                run = 1;
            }
        }
        rle.push(run);
        RleSilhouette {
            frame: self.frame,
            track_id: self.track_id,
            origin: [self.origin.0, self.origin.1],
            width: self.width,
            height: self.height,
            rle,
        }
    }

    pub fn from_rle(r: &RleSilhouette) -> Result<Self> {
        let mut mask = Vec::with_capacity(r.width * r.height);
        for (k, &n) in r.rle.iter().enumerate() {
            mask.extend(std::iter::repeat_n(k % 2 == 1, n));
        }
        Self::new(r.frame, r.track_id, (r.origin[0], r.origin[1]), r.width, r.height, mask)
    }
}

/// Tool outline: a rectangular shaft of `length × width` tapering over the
/// last `taper` pixels to a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WedgeTemplate {
    pub length: f64,
    pub width: f64,
    pub taper: f64,
}

impl WedgeTemplate {
    pub const NEEDLE_DRIVER: Self = Self { length: 44.0, width: 10.0, taper: 18.0 };
    pub const SCISSORS: Self = Self { length: 36.0, width: 12.0, taper: 12.0 };

    /// Counter-clockwise outline with the apex at `apex` pointing along
    /// `angle` radians.
    pub fn polygon(&self, apex: Point, angle: f64) -> Vec<Point> {
        let hw = self.width / 2.0;
        let local = [
            (0.0, 0.0),
            (-self.taper, hw),
            (-self.length, hw),
            (-self.length, -hw),
            (-self.taper, -hw),
        ];
        let (s, c) = angle.sin_cos();
        local
            .iter()
            .map(|&(x, y)| (apex.0 + x * c - y * s, apex.1 + x * s + y * c))
            .collect()
    }
}

fn inside_convex(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    let sign = cross(poly[0], poly[1], poly[2]).signum();
    (0..n).all(|i| sign * cross(poly[i], poly[(i + 1) % n], p) >= -1e-9)
}

/// Pixels whose centres lie in a convex polygon (boundary included), on the
/// tight integer grid around it. Returns grid origin, size and mask.
pub fn rasterize_convex(poly: &[Point]) -> Result<(Point, usize, usize, Vec<bool>)> {
    if poly.len() < 3 {
        return Err(Error::InvalidArgument("polygon needs three vertices".into()));
    }
    let x0 = poly.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor();
    let y0 = poly.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor();
    let x1 = poly.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil();
    let y1 = poly.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil();
    let (w, h) = ((x1 - x0) as usize + 1, (y1 - y0) as usize + 1);
    let mut mask = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            mask[r * w + c] = inside_convex(poly, (x0 + c as f64 + 0.5, y0 + r as f64 + 0.5));
        }
    }
    Ok(((x0, y0), w, h, mask))
}
