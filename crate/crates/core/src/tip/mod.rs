//! Instrument-tip localisation from silhouettes.
//!
//! Each hull vertex of the silhouette is described by a short geometric
//! vector; the tip is the vertex whose descriptor is most cosine-similar to
//! a per-class reference measured on synthetic tool templates.

pub mod descriptor;
pub mod hull;
pub mod silhouette;
pub mod trajectory;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use descriptor::{candidate_descriptors, select_tip, Candidate, ShapeDescriptor, DESCRIPTOR_LEN};
pub use hull::{convex_hull, Point};
pub use silhouette::{rasterize_convex, RleSilhouette, Silhouette, WedgeTemplate};
pub use trajectory::{to_global, TipPoint, TipTrajectory};

use crate::error::{Error, Result};
use crate::tracker::INSTRUMENT_NAMES;

pub const REFERENCE_FORMAT: &str = "microseg-tip-reference/v1";

/// Reference descriptors keyed by instrument name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipReference {
    pub format: String,
    pub descriptors: BTreeMap<String, ShapeDescriptor>,
}

/// Template outline used for each instrument class.
pub fn template_for(class_id: u8) -> WedgeTemplate {
    if class_id < 2 {
        WedgeTemplate::NEEDLE_DRIVER
    } else {
        WedgeTemplate::SCISSORS
    }
}

/// A template drawn at `angle` with its apex on the pixel centre `apex`.
pub fn render_template(t: &WedgeTemplate, apex: Point, angle: f64, frame: u64, track_id: u64) -> Result<Silhouette> {
    let (origin, w, h, mask) = rasterize_convex(&t.polygon(apex, angle))?;
    Silhouette::new(frame, track_id, origin, w, h, mask)
}

/// Mean descriptor of the hull vertex at the apex over `rotations` evenly
/// spaced orientations, offset by half a step.
pub fn measure_reference(t: &WedgeTemplate, rotations: usize) -> Result<ShapeDescriptor> {
    let mut sum = vec![0.0; DESCRIPTOR_LEN];
    for k in 0..rotations {
        let angle = std::f64::consts::TAU * (k as f64 + 0.5) / rotations as f64;
        let apex = (64.5, 64.5);
        let s = render_template(t, apex, angle, 0, 0)?;
        let local = (apex.0 - s.origin.0, apex.1 - s.origin.1);
        let c = s
            .candidates()?
            .into_iter()
            .find(|c| c.point == local)
            .ok_or_else(|| Error::InvalidArgument("apex is not a hull vertex".into()))?;
        for (a, v) in sum.iter_mut().zip(&c.descriptor.0) {
            *a += v;
        }
    }
    Ok(ShapeDescriptor(sum.into_iter().map(|v| v / rotations as f64).collect()))
}

impl TipReference {
    /// References measured from the built-in templates.
    pub fn from_templates() -> Result<Self> {
        let mut descriptors = BTreeMap::new();
        for (c, name) in INSTRUMENT_NAMES.iter().enumerate() {
            descriptors.insert(name.to_string(), measure_reference(&template_for(c as u8), 36)?);
        }
        Ok(Self { format: REFERENCE_FORMAT.into(), descriptors })
    }

    /// The reference file bundled with the crate.
    pub fn bundled() -> Self {
        Self::from_json(include_str!("../../data/tip_reference.json")).expect("bundled reference parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.format != REFERENCE_FORMAT {
            return Err(Error::Schema { expected: REFERENCE_FORMAT.into(), got: r.format });
        }
        for (name, d) in &r.descriptors {
            if d.0.len() != DESCRIPTOR_LEN || d.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("reference `{name}` must hold {DESCRIPTOR_LEN} finite values")));
            }
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reference serializes")
    }

    pub fn for_class(&self, class_id: u8) -> Result<&ShapeDescriptor> {
        let name = INSTRUMENT_NAMES
            .get(class_id as usize)
            .ok_or_else(|| Error::InvalidArgument(format!("instrument class {class_id} out of range")))?;
        self.descriptors
            .get(*name)
            .ok_or_else(|| Error::Config(format!("no reference descriptor for `{name}`")))
    }
}
