use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INSTRUMENT_NAMES: [&str; 4] = [
    "straight_needle_driver",
    "curved_needle_driver",
    "straight_scissors",
    "curved_scissors",
];

/// Axis-aligned box, top-left corner plus size, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        Self { x: v[0], y: v[1], w: v[2], h: v[3] }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("bounding box"));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidArgument(format!("box size {}x{} must be positive", self.w, self.h)));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self { x: self.x + dx, y: self.y + dy, ..*self }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        inter / (self.area() + other.area() - inter)
    }

    /// Shape descriptor used as an appearance stand-in.
    pub fn descriptor(&self) -> [f64; 3] {
        [self.w, self.h, self.area().sqrt()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u64,
    pub bbox: BBox,
    #[serde(rename = "class")]
    pub class_id: u8,
    pub confidence: f64,
    /// Ground-truth object, present in scenario files only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_id: Option<u64>,
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidArgument(format!("confidence {} outside [0, 1]", self.confidence)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Detection,
    Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub frame: u64,
    pub bbox: BBox,
    pub source: Source,
}

/// One track's state at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    pub frame: u64,
    pub track_id: u64,
    #[serde(rename = "class")]
    pub class_id: u8,
    pub bbox: BBox,
    pub source: Source,
    /// Motion-model box before any refinement.
    pub predicted: BBox,
    /// Index of the associated detection within its frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_cases() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(10.0, 0.0, 5.0, 5.0)), 0.0);
        let b = BBox::new(5.0, 0.0, 10.0, 10.0);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-15);
    }

    #[test]
    fn detection_json_shape() {
        let d = Detection {
            frame: 3,
            bbox: BBox::new(1.0, 2.0, 3.0, 4.0),
            class_id: 1,
            confidence: 0.5,
            object_id: None,
        };
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"frame":3,"bbox":[1.0,2.0,3.0,4.0],"class":1,"confidence":0.5}"#);
        assert_eq!(serde_json::from_str::<Detection>(&s).unwrap(), d);
    }

    #[test]
    fn invalid_detections() {
        let mut d = Detection {
            frame: 0,
            bbox: BBox::new(0.0, 0.0, 0.0, 4.0),
            class_id: 0,
            confidence: 0.5,
            object_id: None,
        };
        assert!(d.validate().is_err());
        d.bbox.w = 1.0;
        d.confidence = 1.5;
        assert!(d.validate().is_err());
    }
}
