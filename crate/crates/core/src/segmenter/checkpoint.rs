//! Self-describing JSON weight checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::SegmenterConfig;
use super::model::Segmenter;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "microseg-segmenter/v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredParameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub layer_index: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: SegmenterConfig,
    pub parameters: Vec<StoredParameter>,
}

impl Checkpoint {
    pub fn from_model(model: &Segmenter) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            config: model.config().clone(),
            parameters: model
                .store()
                .params()
                .iter()
                .map(|p| StoredParameter {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    layer_index: p.layer_index(),
                    values: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<Segmenter> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Schema {
                expected: CHECKPOINT_FORMAT.into(),
                got: self.format,
            });
        }
        let mut model = Segmenter::new(self.config)?;
        let expected = model.store().params().len();
        if self.parameters.len() != expected {
            return Err(Error::Shape(format!(
                "checkpoint has {} parameters, model expects {expected}",
                self.parameters.len()
            )));
        }
        for stored in self.parameters {
            let p = model
                .store_mut()
                .by_name_mut(&stored.name)
                .ok_or_else(|| Error::Shape(format!("unknown parameter `{}`", stored.name)))?;
            if p.value.shape() != stored.shape.as_slice() || stored.values.len() != p.value.len() {
                return Err(Error::Shape(format!(
                    "parameter `{}` has shape {:?}, checkpoint says {:?}",
                    stored.name,
                    p.value.shape(),
                    stored.shape
                )));
            }
            p.value.data_mut().copy_from_slice(&stored.values);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
