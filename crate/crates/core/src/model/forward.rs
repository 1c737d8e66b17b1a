use crate::error::{Error, Result};
use crate::geometry::Box2D;
use crate::nn::{relu, sigmoid, sigmoid_scalar, softmax};
use crate::pairs::{build_pair_graph, cluster_subgraphs, Clustering, PairEdge, SubgraphRegion};
use crate::scene::{validate_proposals, ObjectProposal};

use super::context::{accumulate, attend, rasterize_cells, SubgraphFeatureMap};
use super::{ModelParameters, RelationshipPrediction};

/// `o_i = ReLU(W a_i + b)` for each proposal, in order.
pub fn project_objects(params: &ModelParameters, proposals: &[ObjectProposal]) -> Result<Vec<Vec<f64>>> {
    proposals
        .iter()
        .map(|p| params.object_projection.forward(&p.appearance).map(|v| relu(&v)))
        .collect()
}

/// Independent per-relationship "can enact" probabilities.
pub fn predict_attributes(params: &ModelParameters, object: &[f64]) -> Result<Vec<f64>> {
    Ok(sigmoid(&params.attribute_head.forward(object)?))
}

pub fn predict_objectness(params: &ModelParameters, object: &[f64]) -> Result<f64> {
    Ok(sigmoid_scalar(params.objectness_head.forward(object)?[0]))
}

/// `softmax(FC₂(ReLU(FC₁(ReLU(o_s + Ŝ + o_o)))))` over background plus R classes.
///
/// Symmetric in subject and object: the two object features are summed
/// before the aggregated feature is added, so swapping them is bit-identical.
pub fn predict_relationship(
    params: &ModelParameters,
    subject: &[f64],
    aggregated: &[f64],
    object: &[f64],
) -> Result<RelationshipPrediction> {
    let d = params.config.feature_dim;
    for (what, v) in [("subject", subject), ("aggregated", aggregated), ("object", object)] {
        if v.len() != d {
            return Err(Error::shape(format!("{what} feature"), d, v.len()));
        }
    }
    let z_pre = fuse(subject, aggregated, object);
    let (_, _, probs) = relationship_head(params, &relu(&z_pre));
    Ok(RelationshipPrediction(probs))
}

fn fuse(subject: &[f64], aggregated: &[f64], object: &[f64]) -> Vec<f64> {
    aggregated
        .iter()
        .zip(subject.iter().zip(object))
        .map(|(g, (s, o))| g + (s + o))
        .collect()
}

/// Returns (hidden pre-activation, hidden activation, probabilities).
fn relationship_head(params: &ModelParameters, z: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h_pre = params.relationship_hidden.apply(z);
    let h = relu(&h_pre);
    let probs = softmax(&params.relationship_out.apply(&h));
    (h_pre, h, probs)
}

/// Prediction for one ordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPrediction {
    pub subject_index: u32,
    pub object_index: u32,
    pub subgraph_id: usize,
    pub prediction: RelationshipPrediction,
}

/// Per-scene model outputs; per-proposal vectors follow input order.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneOutput {
    pub objectness: Vec<f64>,
    pub attributes: Vec<Vec<f64>>,
    pub pairs: Vec<PairPrediction>,
    pub regions: Vec<SubgraphRegion>,
}

/// Full forward pass over every ordered pair of the scene.
pub fn forward_scene(params: &ModelParameters, proposals: &[ObjectProposal]) -> Result<SceneOutput> {
    let cache = ForwardCache::run(params, proposals, |_| true)?;
    Ok(cache.into_output())
}

pub(crate) struct RegionCache {
    pub contained: Vec<usize>,
    pub cell_members: Vec<Vec<usize>>,
    pub map: SubgraphFeatureMap,
    pub queries: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub attended: Vec<Vec<f64>>,
    pub aggregated: Vec<f64>,
}

pub(crate) struct PairCache {
    pub edge: PairEdge,
    pub subject: usize,
    pub object: usize,
    pub region: usize,
    pub z_pre: Vec<f64>,
    pub z: Vec<f64>,
    pub h_pre: Vec<f64>,
    pub h: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Intermediate values of a forward pass, kept for the backward pass.
pub struct ForwardCache {
    pub(crate) appearance: Vec<Vec<f64>>,
    pub(crate) object_pre: Vec<Vec<f64>>,
    pub(crate) objects: Vec<Vec<f64>>,
    pub(crate) init_pre: Vec<Vec<f64>>,
    pub(crate) keys: Vec<Vec<f64>>,
    pub(crate) values: Vec<Vec<f64>>,
    pub(crate) attribute_probs: Vec<Vec<f64>>,
    pub(crate) objectness: Vec<f64>,
    pub(crate) regions: Vec<Option<RegionCache>>,
    pub(crate) pairs: Vec<PairCache>,
    indices: Vec<u32>,
    clustering: Clustering,
}

impl ForwardCache {
    /// Runs the model, evaluating relationship heads only for pairs accepted
    /// by `keep` (clustering always sees every pair).
    pub fn run(
        params: &ModelParameters,
        proposals: &[ObjectProposal],
        keep: impl Fn(&PairEdge) -> bool,
    ) -> Result<Self> {
        let cfg = params.config;
        validate_proposals(proposals)?;
        if let Some(p) = proposals.iter().find(|p| p.appearance.len() != cfg.input_dim) {
            return Err(Error::shape(
                format!("appearance of proposal {}", p.index),
                cfg.input_dim,
                p.appearance.len(),
            ));
        }
        let appearance: Vec<Vec<f64>> = proposals.iter().map(|p| p.appearance.clone()).collect();
        let object_pre: Vec<Vec<f64>> = appearance.iter().map(|a| params.object_projection.apply(a)).collect();
        let objects: Vec<Vec<f64>> = object_pre.iter().map(|v| relu(v)).collect();
        let init_pre: Vec<Vec<f64>> = appearance
            .iter()
            .map(|a| params.subgraph_init_projection.apply(a))
            .collect();
        let init: Vec<Vec<f64>> = init_pre.iter().map(|v| relu(v)).collect();
        let ctx = &params.context;
        let keys: Vec<Vec<f64>> = objects.iter().map(|o| ctx.key_projection.apply(o)).collect();
        let values: Vec<Vec<f64>> = objects.iter().map(|o| ctx.value_projection.apply(o)).collect();
        let attribute_probs = objects.iter().map(|o| sigmoid(&params.attribute_head.apply(o))).collect();
        let objectness = objects
            .iter()
            .map(|o| sigmoid_scalar(params.objectness_head.apply(o)[0]))
            .collect();

        let indices: Vec<u32> = proposals.iter().map(|p| p.index).collect();
        let position = |idx: u32| indices.iter().position(|&i| i == idx).expect("validated index");
        let boxes: Vec<Box2D> = proposals.iter().map(|p| p.bbox).collect();

        let edges = build_pair_graph(proposals);
        let clustering = cluster_subgraphs(&edges, proposals, cfg.cluster_threshold)?;
        let mut regions: Vec<Option<RegionCache>> = clustering.regions.iter().map(|_| None).collect();
        let mut pairs = Vec::new();
        for edge in clustering.edges.iter().filter(|e| keep(e)) {
            let rid = edge.subgraph_id.expect("clustered");
            if regions[rid].is_none() {
                let region_box = clustering.regions[rid].region_box;
                let (map, cell_members) =
                    rasterize_cells(&region_box, cfg.grid, cfg.feature_dim, &boxes, &init);
                let contained: Vec<usize> = (0..boxes.len()).filter(|&i| boxes[i].overlaps(&region_box)).collect();
                let k: Vec<&[f64]> = contained.iter().map(|&i| keys[i].as_slice()).collect();
                let v: Vec<&[f64]> = contained.iter().map(|&i| values[i].as_slice()).collect();
                let mut queries = Vec::with_capacity(map.cells.len());
                let mut weights = Vec::with_capacity(map.cells.len());
                let mut attended = Vec::with_capacity(map.cells.len());
                for cell in &map.cells {
                    let q = ctx.query_projection.apply(cell);
                    let (w, o_hat) = attend(&k, &v, &q);
                    queries.push(q);
                    weights.push(w);
                    attended.push(o_hat);
                }
                let aggregated = accumulate(&map, &attended, ctx.alpha);
                regions[rid] = Some(RegionCache {
                    contained,
                    cell_members,
                    map,
                    queries,
                    weights,
                    attended,
                    aggregated,
                });
            }
            let agg = &regions[rid].as_ref().expect("just built").aggregated;
            let (s, o) = (position(edge.subject_index), position(edge.object_index));
            let z_pre = fuse(&objects[s], agg, &objects[o]);
            let z = relu(&z_pre);
            let (h_pre, h, probs) = relationship_head(params, &z);
            pairs.push(PairCache {
                edge: *edge,
                subject: s,
                object: o,
                region: rid,
                z_pre,
                z,
                h_pre,
                h,
                probs,
            });
        }

        Ok(Self {
            appearance,
            object_pre,
            objects,
            init_pre,
            keys,
            values,
            attribute_probs,
            objectness,
            regions,
            pairs,
            indices,
            clustering,
        })
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn object_features(&self) -> &[Vec<f64>] {
        &self.objects
    }

    pub fn attribute_probs(&self) -> &[Vec<f64>] {
        &self.attribute_probs
    }

    pub fn objectness(&self) -> &[f64] {
        &self.objectness
    }

    /// Evaluated pairs as `(subject index, object index, probabilities)`.
    pub fn pair_probs(&self) -> impl Iterator<Item = (u32, u32, &[f64])> {
        self.pairs
            .iter()
            .map(|p| (p.edge.subject_index, p.edge.object_index, p.probs.as_slice()))
    }

    /// Smallest |pre-activation| over every ReLU in the pass. Finite differences
    /// with a step well below this margin never cross a kink.
    pub fn relu_margin(&self) -> f64 {
        self.object_pre
            .iter()
            .chain(&self.init_pre)
            .chain(self.pairs.iter().flat_map(|p| [&p.z_pre, &p.h_pre]))
            .flatten()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    pub fn position_of(&self, index: u32) -> Option<usize> {
        self.indices.iter().position(|&i| i == index)
    }

    pub fn into_output(self) -> SceneOutput {
        SceneOutput {
            objectness: self.objectness,
            attributes: self.attribute_probs,
            pairs: self
                .pairs
                .into_iter()
                .map(|p| PairPrediction {
                    subject_index: p.edge.subject_index,
                    object_index: p.edge.object_index,
                    subgraph_id: p.region,
                    prediction: RelationshipPrediction(p.probs),
                })
                .collect(),
            regions: self.clustering.regions,
        }
    }
}
