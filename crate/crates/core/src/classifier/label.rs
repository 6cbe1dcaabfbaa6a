use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LEVELS: usize = 3;

/// Three-level grade derived from a five-point rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SkillLevel {
    Poor = 0,
    Moderate = 1,
    Good = 2,
}

impl SkillLevel {
    pub const ALL: [SkillLevel; NUM_LEVELS] = [SkillLevel::Poor, SkillLevel::Moderate, SkillLevel::Good];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("skill level {i} out of range")))
    }

    pub fn name(self) -> &'static str {
        match self {
            SkillLevel::Poor => "Poor",
            SkillLevel::Moderate => "Moderate",
            SkillLevel::Good => "Good",
        }
    }
}

/// Scores on the boundaries go to the upper level.
pub fn discretize(score: f64) -> Result<SkillLevel> {
    if !(1.0..=5.0).contains(&score) {
        return Err(Error::InvalidArgument(format!("score {score} outside [1, 5]")));
    }
    Ok(if score < 2.5 {
        SkillLevel::Poor
    } else if score < 3.5 {
        SkillLevel::Moderate
    } else {
        SkillLevel::Good
    })
}
