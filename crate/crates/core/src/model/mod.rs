//! The relationship model: object/subgraph projections, spatial attention
//! context aggregation, and the attribute, objectness and relationship heads.

mod backward;
mod context;
mod forward;
mod params;

pub use backward::{backward, OutputGrads};
pub use context::{
    aggregate_subgraph, attention_weights, rasterize_subgraph, weighted_object_features,
    SubgraphFeatureMap,
};
pub use forward::{
    forward_scene, predict_attributes, predict_objectness, predict_relationship, project_objects,
    ForwardCache, PairPrediction, SceneOutput,
};
pub use params::{ContextParams, GradientTape, ModelConfig, ModelParameters, ModelFile};

/// Distribution over `R + 1` relationship classes; index 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationshipPrediction(pub Vec<f64>);

impl RelationshipPrediction {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Highest-probability class, ties to the lowest id.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}
