use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Box2D;
use crate::scene::ObjectProposal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub index: u32,
    #[serde(rename = "box")]
    pub bbox: Box2D,
    pub confidence: f64,
    pub is_object: bool,
    pub feature: Vec<f64>,
    pub attributes: Vec<u8>,
}

/// Ground-truth `(subject, relationship, object)` with relationship ids
/// starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GtTriplet {
    pub subject: u32,
    pub relationship: usize,
    pub object: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub objects: Vec<SceneObject>,
    pub gt_triplets: Vec<GtTriplet>,
}

impl SceneRecord {
    pub fn proposals(&self) -> Vec<ObjectProposal> {
        self.objects
            .iter()
            .map(|o| ObjectProposal {
                index: o.index,
                bbox: o.bbox,
                confidence: o.confidence,
                appearance: o.feature.clone(),
            })
            .collect()
    }

    pub fn object(&self, index: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.index == index)
    }

    /// Structural checks: unique indices, consistent dimensions, valid
    /// confidences, and GT triplets referencing real in-scene objects.
    pub fn validate(&self, num_relations: usize) -> Result<()> {
        let bad = |msg: String| Error::Data(format!("scene {}: {msg}", self.scene_id));
        let mut seen = std::collections::HashSet::new();
        let dim = self.objects.first().map(|o| o.feature.len());
        for o in &self.objects {
            if !seen.insert(o.index) {
                return Err(bad(format!("duplicate object index {}", o.index)));
            }
            if Some(o.feature.len()) != dim {
                return Err(bad(format!("object {} has inconsistent feature length", o.index)));
            }
            if o.feature.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("object {} has non-finite features", o.index)));
            }
            if !(0.0..=1.0).contains(&o.confidence) {
                return Err(bad(format!("object {} confidence outside [0, 1]", o.index)));
            }
            if o.attributes.len() != num_relations || o.attributes.iter().any(|&a| a > 1) {
                return Err(bad(format!("object {} attributes must be {num_relations} 0/1 flags", o.index)));
            }
        }
        let mut pairs = std::collections::HashSet::new();
        for t in &self.gt_triplets {
            if !(1..=num_relations).contains(&t.relationship) {
                return Err(bad(format!("relationship id {} out of range", t.relationship)));
            }
            for idx in [t.subject, t.object] {
                match self.object(idx) {
                    None => return Err(bad(format!("triplet references unknown object {idx}"))),
                    Some(o) if !o.is_object => {
                        return Err(bad(format!("triplet references distractor {idx}")))
                    }
                    _ => {}
                }
            }
            if t.subject == t.object {
                return Err(bad(format!("self relationship on {}", t.subject)));
            }
            if !pairs.insert((t.subject, t.object)) {
                return Err(bad(format!("duplicate ground truth for pair ({}, {})", t.subject, t.object)));
            }
        }
        Ok(())
    }
}
