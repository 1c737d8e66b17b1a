//! From per-pair predictions to a manipulation relationship graph: triplet
//! formation and scoring, triplet NMS, graph assembly, task queries, and
//! JSON / DOT export.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, Box2D};
use crate::model::{forward_scene, ModelParameters, RelationshipPrediction};
use crate::scene::ObjectProposal;

pub const DEFAULT_NMS_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MIN_SCORE: f64 = 0.05;

/// A typed, scored, directed statement about two proposals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationshipTriplet {
    pub subject_index: u32,
    /// 1-based relationship class; never background.
    pub relationship_class: usize,
    pub object_index: u32,
    pub score: f64,
    pub subject_box: Box2D,
    pub object_box: Box2D,
}

impl RelationshipTriplet {
    pub fn key(&self) -> (u32, usize, u32) {
        (self.subject_index, self.relationship_class, self.object_index)
    }
}

/// Descending score, then ascending (subject, class, object).
pub fn score_order(a: &RelationshipTriplet, b: &RelationshipTriplet) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.key().cmp(&b.key()))
}

/// Relationship names by id; id 0 is `"none"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationshipClassTable {
    names: Vec<String>,
}

impl Default for RelationshipClassTable {
    fn default() -> Self {
        Self::new(crate::datagen::DEFAULT_RELATIONSHIPS.iter().map(|s| s.to_string()).collect())
            .expect("default names are unique")
    }
}

impl RelationshipClassTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        if names.iter().any(|n| n == "none" || !seen.insert(n.clone())) {
            return Err(Error::Data("relationship names must be unique and not \"none\"".into()));
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        match id {
            0 => Some("none"),
            _ => self.names.get(id - 1).map(String::as_str),
        }
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        if name == "none" {
            return Some(0);
        }
        self.names.iter().position(|n| n == name).map(|p| p + 1)
    }
}

/// Subject and object of one candidate pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEndpoints {
    pub subject_index: u32,
    pub subject_box: Box2D,
    pub object_index: u32,
    pub object_box: Box2D,
}

/// Top-1 class of the distribution; background yields no triplet. Score is
/// `subject_conf × p(class) × object_conf`.
pub fn form_triplet(
    pair: &PairEndpoints,
    prediction: &RelationshipPrediction,
    subject_conf: f64,
    object_conf: f64,
) -> Option<RelationshipTriplet> {
    let class = prediction.argmax();
    if class == 0 {
        return None;
    }
    Some(RelationshipTriplet {
        subject_index: pair.subject_index,
        relationship_class: class,
        object_index: pair.object_index,
        score: subject_conf * prediction.probs()[class] * object_conf,
        subject_box: pair.subject_box,
        object_box: pair.object_box,
    })
}

/// Greedy triplet NMS. A triplet is dropped when an already kept one has the
/// same class and both its subject and object boxes overlap at IoU ≥
/// `iou_threshold`. Output is in [`score_order`].
pub fn triplet_nms(triplets: &[RelationshipTriplet], iou_threshold: f64) -> Vec<RelationshipTriplet> {
    let mut sorted = triplets.to_vec();
    sorted.sort_by(score_order);
    let mut kept: Vec<RelationshipTriplet> = Vec::with_capacity(sorted.len());
    for t in sorted {
        let suppressed = kept.iter().any(|k| {
            k.relationship_class == t.relationship_class
                && iou(&k.subject_box, &t.subject_box) >= iou_threshold
                && iou(&k.object_box, &t.object_box) >= iou_threshold
        });
        if !suppressed {
            kept.push(t);
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrgNode {
    pub index: u32,
    #[serde(rename = "box")]
    pub bbox: Box2D,
    pub confidence: f64,
}

impl From<&ObjectProposal> for MrgNode {
    fn from(p: &ObjectProposal) -> Self {
        Self {
            index: p.index,
            bbox: p.bbox,
            confidence: p.confidence,
        }
    }
}

/// Directed graph: proposals as nodes, triplets as typed edges weighted by
/// score. Nodes are sorted by index, edges by [`score_order`].
#[derive(Debug, Clone, PartialEq)]
pub struct ManipulationRelationshipGraph {
    pub nodes: Vec<MrgNode>,
    pub edges: Vec<RelationshipTriplet>,
}

/// Keeps triplets scoring at least `min_score` as edges. Duplicate
/// (subject, class, object) edges keep the highest score.
pub fn build_mrg(
    nodes: Vec<MrgNode>,
    triplets: &[RelationshipTriplet],
    min_score: f64,
) -> Result<ManipulationRelationshipGraph> {
    let mut nodes = nodes;
    nodes.sort_by_key(|n| n.index);
    if nodes.windows(2).any(|w| w[0].index == w[1].index) {
        return Err(Error::Data("duplicate node index".into()));
    }
    let mut edges: Vec<RelationshipTriplet> =
        triplets.iter().filter(|t| t.score >= min_score).copied().collect();
    edges.sort_by(score_order);
    let mut seen = std::collections::HashSet::new();
    edges.retain(|e| seen.insert(e.key()));
    for e in &edges {
        for idx in [e.subject_index, e.object_index] {
            if nodes.binary_search_by_key(&idx, |n| n.index).is_err() {
                return Err(Error::Internal(format!("edge references unknown node {idx}")));
            }
        }
    }
    Ok(ManipulationRelationshipGraph { nodes, edges })
}

/// Where subject/object confidences for triplet scoring come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceSource {
    /// The model's objectness probability.
    #[default]
    Objectness,
    /// The proposal's own detection confidence.
    Proposal,
    /// Objectness, with the subject's further multiplied by its attribute
    /// probability for the predicted class. This is what tells `(i, j)` from
    /// `(j, i)`: the relationship head itself is symmetric in the two.
    Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub nms_threshold: f64,
    pub min_score: f64,
    pub confidence: ConfidenceSource,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            nms_threshold: DEFAULT_NMS_THRESHOLD,
            min_score: DEFAULT_MIN_SCORE,
            confidence: ConfidenceSource::Objectness,
        }
    }
}

/// Model → triplets → NMS, sorted by [`score_order`]. Nodes carry the
/// confidence used for scoring.
pub fn infer_triplets(
    params: &ModelParameters,
    proposals: &[ObjectProposal],
    cfg: &InferenceConfig,
) -> Result<(Vec<MrgNode>, Vec<RelationshipTriplet>)> {
    let out = forward_scene(params, proposals)?;
    let nodes: Vec<MrgNode> = proposals
        .iter()
        .enumerate()
        .map(|(i, p)| MrgNode {
            index: p.index,
            bbox: p.bbox,
            confidence: match cfg.confidence {
                ConfidenceSource::Objectness | ConfidenceSource::Role => out.objectness[i],
                ConfidenceSource::Proposal => p.confidence,
            },
        })
        .collect();
    let position = |idx: u32| nodes.iter().position(|n| n.index == idx).expect("pair of known nodes");
    let triplets: Vec<RelationshipTriplet> = out
        .pairs
        .iter()
        .filter_map(|pp| {
            let (si, oi) = (position(pp.subject_index), position(pp.object_index));
            let (s, o) = (&nodes[si], &nodes[oi]);
            let ends = PairEndpoints {
                subject_index: s.index,
                subject_box: s.bbox,
                object_index: o.index,
                object_box: o.bbox,
            };
            let class = pp.prediction.argmax();
            let subject_conf = match cfg.confidence {
                ConfidenceSource::Role if class > 0 => s.confidence * out.attributes[si][class - 1],
                _ => s.confidence,
            };
            form_triplet(&ends, &pp.prediction, subject_conf, o.confidence)
        })
        .collect();
    Ok((nodes, triplet_nms(&triplets, cfg.nms_threshold)))
}

pub fn infer_mrg(
    params: &ModelParameters,
    proposals: &[ObjectProposal],
    cfg: &InferenceConfig,
) -> Result<ManipulationRelationshipGraph> {
    let (nodes, triplets) = infer_triplets(params, proposals, cfg)?;
    build_mrg(nodes, &triplets, cfg.min_score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskQuery {
    pub subject: u32,
    pub relationship: usize,
    pub object: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskMatch {
    pub found: bool,
    /// 1-based position among edges in score order.
    pub rank: Option<usize>,
    pub score: Option<f64>,
}

/// Exact-match lookup of a task triplet among the graph's edges.
pub fn query_task(mrg: &ManipulationRelationshipGraph, task: &TaskQuery) -> TaskMatch {
    let key = (task.subject, task.relationship, task.object);
    let mut edges: Vec<&RelationshipTriplet> = mrg.edges.iter().collect();
    edges.sort_by(|a, b| score_order(a, b));
    match edges.iter().position(|e| e.key() == key) {
        Some(p) => TaskMatch {
            found: true,
            rank: Some(p + 1),
            score: Some(edges[p].score),
        },
        None => TaskMatch {
            found: false,
            rank: None,
            score: None,
        },
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRelationship {
    id: usize,
    name: String,
}

#[derive(Serialize, Deserialize)]
struct JsonEdge {
    subject: u32,
    relationship: JsonRelationship,
    object: u32,
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct JsonGraph {
    nodes: Vec<MrgNode>,
    edges: Vec<JsonEdge>,
}

pub fn export_json(mrg: &ManipulationRelationshipGraph, classes: &RelationshipClassTable) -> Result<String> {
    let doc = JsonGraph {
        nodes: mrg.nodes.clone(),
        edges: mrg
            .edges
            .iter()
            .map(|e| {
                let name = classes
                    .name(e.relationship_class)
                    .ok_or_else(|| Error::Data(format!("no name for relationship {}", e.relationship_class)))?;
                Ok(JsonEdge {
                    subject: e.subject_index,
                    relationship: JsonRelationship {
                        id: e.relationship_class,
                        name: name.to_string(),
                    },
                    object: e.object_index,
                    score: e.score,
                })
            })
            .collect::<Result<_>>()?,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Parses a document written by [`export_json`]. Edge boxes come from the
/// referenced nodes.
pub fn parse_json(text: &str, classes: &RelationshipClassTable) -> Result<ManipulationRelationshipGraph> {
    let doc: JsonGraph = serde_json::from_str(text)?;
    let find = |idx: u32| {
        doc.nodes
            .iter()
            .find(|n| n.index == idx)
            .map(|n| n.bbox)
            .ok_or_else(|| Error::Data(format!("edge references unknown node {idx}")))
    };
    let mut edges = Vec::with_capacity(doc.edges.len());
    for e in &doc.edges {
        if classes.name(e.relationship.id) != Some(e.relationship.name.as_str()) || e.relationship.id == 0 {
            return Err(Error::Data(format!(
                "relationship {} / {} does not match the class table",
                e.relationship.id, e.relationship.name
            )));
        }
        edges.push(RelationshipTriplet {
            subject_index: e.subject,
            relationship_class: e.relationship.id,
            object_index: e.object,
            score: e.score,
            subject_box: find(e.subject)?,
            object_box: find(e.object)?,
        });
    }
    build_mrg(doc.nodes, &edges, f64::NEG_INFINITY)
}

/// Graphviz digraph: one line per node and per edge between the header and
/// closing brace.
pub fn export_dot(mrg: &ManipulationRelationshipGraph, classes: &RelationshipClassTable) -> Result<String> {
    let mut out = String::from("digraph mrg {\n");
    for n in &mrg.nodes {
        writeln!(out, "  {0} [label=\"{0}\"];", n.index).expect("string write");
    }
    for e in &mrg.edges {
        let name = classes
            .name(e.relationship_class)
            .ok_or_else(|| Error::Data(format!("no name for relationship {}", e.relationship_class)))?;
        writeln!(
            out,
            "  {} -> {} [label=\"{} ({:.3})\"];",
            e.subject_index, e.object_index, name, e.score
        )
        .expect("string write");
    }
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64, y: f64) -> Box2D {
        Box2D::new(x, y, x + 10.0, y + 10.0).unwrap()
    }

    fn trip(s: u32, c: usize, o: u32, score: f64) -> RelationshipTriplet {
        RelationshipTriplet {
            subject_index: s,
            relationship_class: c,
            object_index: o,
            score,
            subject_box: bx(20.0 * s as f64, 0.0),
            object_box: bx(20.0 * o as f64, 0.0),
        }
    }

    fn ends() -> PairEndpoints {
        PairEndpoints {
            subject_index: 1,
            subject_box: bx(0., 0.),
            object_index: 2,
            object_box: bx(30., 0.),
        }
    }

    #[test]
    fn triplet_formation() {
        let bg = RelationshipPrediction(vec![0.6, 0.1, 0.1, 0.1, 0.05, 0.05, 0.0]);
        assert!(form_triplet(&ends(), &bg, 1.0, 1.0).is_none());
        let sure = RelationshipPrediction(vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let t = form_triplet(&ends(), &sure, 1.0, 1.0).unwrap();
        assert_eq!((t.relationship_class, t.score), (2, 1.0));
        let half = RelationshipPrediction(vec![0.1, 0.0, 0.0, 0.5, 0.4, 0.0, 0.0]);
        let t = form_triplet(&ends(), &half, 0.9, 0.8).unwrap();
        assert_eq!(t.relationship_class, 3);
        assert!((t.score - 0.36).abs() < 1e-12);
        // tie goes to the lowest id (background here)
        let tie = RelationshipPrediction(vec![0.4, 0.4, 0.2, 0.0, 0.0, 0.0, 0.0]);
        assert!(form_triplet(&ends(), &tie, 1.0, 1.0).is_none());
    }

    #[test]
    fn nms_examples() {
        let one = [trip(1, 2, 2, 0.3)];
        assert_eq!(triplet_nms(&one, 0.5), one.to_vec());
        let dup = [trip(1, 2, 2, 0.4), trip(1, 2, 2, 0.9)];
        let kept = triplet_nms(&dup, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);
        let classes = [trip(1, 1, 2, 0.4), trip(1, 2, 2, 0.9), trip(1, 3, 2, 0.5)];
        assert_eq!(triplet_nms(&classes, 0.5).len(), 3);
    }

    #[test]
    fn graph_and_query() {
        let nodes: Vec<MrgNode> = (1..=3)
            .map(|i| MrgNode { index: i, bbox: bx(20.0 * i as f64, 0.0), confidence: 0.9 })
            .collect();
        let empty = build_mrg(nodes.clone(), &[], 0.05).unwrap();
        assert_eq!((empty.nodes.len(), empty.edges.len()), (3, 0));
        assert!(!query_task(&empty, &TaskQuery { subject: 1, relationship: 1, object: 2 }).found);

        let ts = [trip(1, 3, 2, 0.2), trip(2, 1, 3, 0.7), trip(3, 4, 1, 0.01)];
        assert_eq!(build_mrg(nodes.clone(), &ts, 0.0).unwrap().edges.len(), 3);
        let g = build_mrg(nodes.clone(), &ts, 0.05).unwrap();
        assert_eq!(g.edges.len(), 2);
        let top = query_task(&g, &TaskQuery { subject: 2, relationship: 1, object: 3 });
        assert_eq!((top.found, top.rank, top.score), (true, Some(1), Some(0.7)));
        let second = query_task(&g, &TaskQuery { subject: 1, relationship: 3, object: 2 });
        assert_eq!(second.rank, Some(2));

        let bad = [trip(1, 3, 9, 0.5)];
        assert!(matches!(build_mrg(nodes, &bad, 0.0), Err(Error::Internal(_))));
    }

    #[test]
    fn exports() {
        let classes = RelationshipClassTable::default();
        let nodes: Vec<MrgNode> = (1..=4)
            .map(|i| MrgNode { index: i, bbox: bx(20.0 * i as f64, 0.0), confidence: 0.5 + 0.1 * i as f64 })
            .collect();
        let empty = build_mrg(nodes.clone(), &[], 0.0).unwrap();
        assert_eq!(parse_json(&export_json(&empty, &classes).unwrap(), &classes).unwrap(), empty);

        let g = build_mrg(nodes.clone(), &[trip(1, 3, 2, 0.25), trip(2, 1, 3, 0.123456789), trip(4, 6, 1, 0.9)], 0.0).unwrap();
        let json = export_json(&g, &classes).unwrap();
        assert_eq!(parse_json(&json, &classes).unwrap(), g);
        assert_eq!(json, export_json(&g, &classes).unwrap());
        assert!(json.contains("\"name\": \"dump\""));

        let dot = export_dot(&g, &classes).unwrap();
        assert_eq!(dot.lines().count(), g.nodes.len() + g.edges.len() + 2);
        assert!(dot.contains("  2 -> 3 [label=\"scoop (0.123)\"];"));
        assert_eq!(export_dot(&empty, &classes).unwrap().lines().count(), 6);
    }

    #[test]
    fn class_table() {
        let t = RelationshipClassTable::default();
        assert_eq!(t.name(0), Some("none"));
        assert_eq!(t.name(1), Some("scoop"));
        assert_eq!(t.name(6), Some("dump"));
        assert_eq!(t.name(7), None);
        assert_eq!(t.id("cut"), Some(3));
        assert!(RelationshipClassTable::new(vec!["a".into(), "a".into()]).is_err());
    }

    // Object 1 can "cut", object 2 cannot; every pair predicts "cut".
    fn cutter_model() -> (ModelParameters, Vec<ObjectProposal>) {
        use crate::model::ModelConfig;
        let cfg = ModelConfig {
            input_dim: 2,
            feature_dim: 2,
            hidden_dim: 2,
            grid: 1,
            num_relations: 6,
            cluster_threshold: 0.5,
        };
        let mut p = ModelParameters::zeros(cfg);
        p.object_projection.weight_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let w = p.attribute_head.weight_mut();
        w[2 * 2] = 20.0;
        w[2 * 2 + 1] = -20.0;
        p.relationship_out.bias_mut()[3] = 5.0;
        let props = vec![
            ObjectProposal::new(1, bx(0., 0.), 0.9, vec![1.0, 0.0]).unwrap(),
            ObjectProposal::new(2, bx(30., 0.), 0.9, vec![0.0, 1.0]).unwrap(),
        ];
        (p, props)
    }

    #[test]
    fn objectness_scoring_is_direction_blind() {
        let (p, props) = cutter_model();
        let (nodes, t) = infer_triplets(&p, &props, &InferenceConfig::default()).unwrap();
        assert_eq!(nodes.iter().map(|n| n.confidence).collect::<Vec<_>>(), [0.5, 0.5]);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].score, t[1].score);
        assert_eq!(t[0].relationship_class, 3);
    }

    #[test]
    fn role_scoring_prefers_the_capable_subject() {
        let (p, props) = cutter_model();
        let cfg = InferenceConfig {
            confidence: ConfidenceSource::Role,
            ..Default::default()
        };
        let (_, t) = infer_triplets(&p, &props, &cfg).unwrap();
        assert_eq!((t[0].subject_index, t[0].object_index), (1, 2));
        assert!(t[0].score > 0.2 && t[1].score < 1e-6, "{t:?}");
        let mrg = infer_mrg(&p, &props, &cfg).unwrap();
        assert_eq!(mrg.edges.len(), 1);
    }
}
