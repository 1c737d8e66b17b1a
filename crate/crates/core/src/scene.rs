//! Object proposals: the per-object input to the relationship model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Box2D;

/// One category-agnostic detected object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectProposal {
    pub index: u32,
    #[serde(rename = "box")]
    pub bbox: Box2D,
    pub confidence: f64,
    pub appearance: Vec<f64>,
}

impl ObjectProposal {
    pub fn new(index: u32, bbox: Box2D, confidence: f64, appearance: Vec<f64>) -> Result<Self> {
        let p = Self {
            index,
            bbox,
            confidence,
            appearance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::Data(format!(
                "proposal {} confidence {} outside [0, 1]",
                self.index, self.confidence
            )));
        }
        if self.appearance.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("appearance of proposal {}", self.index)));
        }
        Ok(())
    }
}

/// Checks that indices are unique and every proposal is well formed.
pub fn validate_proposals(proposals: &[ObjectProposal]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(proposals.len());
    for p in proposals {
        p.validate()?;
        if !seen.insert(p.index) {
            return Err(Error::Data(format!("duplicate proposal index {}", p.index)));
        }
    }
    Ok(())
}
