//! Directed pair graph over proposals and greedy clustering of pair union
//! boxes into shared subgraph regions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, union_box, Box2D};
use crate::scene::ObjectProposal;

/// Clustering threshold used throughout training and inference.
pub const DEFAULT_CLUSTER_THRESHOLD: f64 = 0.5;

/// An ordered (subject, object) candidate pair, by proposal index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairEdge {
    pub subject_index: u32,
    pub object_index: u32,
    /// Region serving this pair; `None` until clustered.
    pub subgraph_id: Option<usize>,
}

impl PairEdge {
    pub fn new(subject_index: u32, object_index: u32) -> Self {
        Self {
            subject_index,
            object_index,
            subgraph_id: None,
        }
    }

    pub fn key(&self) -> (u32, u32) {
        (self.subject_index, self.object_index)
    }
}

/// A candidate relationship region shared by one or more pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphRegion {
    pub id: usize,
    pub region_box: Box2D,
    pub member_pairs: Vec<(u32, u32)>,
}

/// Every ordered pair `(i, j)`, `i != j`, ascending by subject then object.
pub fn build_pair_graph(proposals: &[ObjectProposal]) -> Vec<PairEdge> {
    let mut indices: Vec<u32> = proposals.iter().map(|p| p.index).collect();
    indices.sort_unstable();
    let mut edges = Vec::with_capacity(indices.len() * indices.len().saturating_sub(1));
    for &s in &indices {
        for &o in &indices {
            if s != o {
                edges.push(PairEdge::new(s, o));
            }
        }
    }
    edges
}

/// Result of [`cluster_subgraphs`]: the input edges with `subgraph_id` set,
/// and the regions in creation order (region `id` = position).
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub edges: Vec<PairEdge>,
    pub regions: Vec<SubgraphRegion>,
}

/// Greedy seed-and-absorb clustering of pair union boxes.
///
/// Pairs are visited in descending order of subject × object confidence
/// (ties by subject then object index). A pair joins the existing region
/// whose box has the highest IoU with its union box, provided that IoU is at
/// least `threshold` (ties go to the older region); otherwise it seeds a new
/// region whose box is its own union box.
pub fn cluster_subgraphs(
    edges: &[PairEdge],
    proposals: &[ObjectProposal],
    threshold: f64,
) -> Result<Clustering> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!(
            "cluster threshold {threshold} outside (0, 1]"
        )));
    }
    let by_index: HashMap<u32, &ObjectProposal> =
        proposals.iter().map(|p| (p.index, p)).collect();
    let lookup = |idx: u32| {
        by_index
            .get(&idx)
            .copied()
            .ok_or_else(|| Error::Data(format!("pair references unknown proposal {idx}")))
    };

    let mut order = Vec::with_capacity(edges.len());
    for (pos, e) in edges.iter().enumerate() {
        if e.subject_index == e.object_index {
            return Err(Error::Data(format!("self pair on proposal {}", e.subject_index)));
        }
        let s = lookup(e.subject_index)?;
        let o = lookup(e.object_index)?;
        order.push((pos, s.confidence * o.confidence, union_box(&s.bbox, &o.bbox)));
    }
    order.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| edges[a.0].key().cmp(&edges[b.0].key()))
    });

    let mut regions: Vec<SubgraphRegion> = Vec::new();
    let mut out = edges.to_vec();
    for (pos, _, ubox) in order {
        let mut best: Option<(usize, f64)> = None;
        for r in &regions {
            let v = iou(&ubox, &r.region_box);
            if v >= threshold && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((r.id, v));
            }
        }
        let id = match best {
            Some((id, _)) => id,
            None => {
                let id = regions.len();
                regions.push(SubgraphRegion {
                    id,
                    region_box: ubox,
                    member_pairs: Vec::new(),
                });
                id
            }
        };
        regions[id].member_pairs.push(out[pos].key());
        out[pos].subgraph_id = Some(id);
    }
    Ok(Clustering {
        edges: out,
        regions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prop(index: u32, b: [f64; 4], conf: f64) -> ObjectProposal {
        ObjectProposal::new(index, Box2D::try_from(b).unwrap(), conf, vec![0.0]).unwrap()
    }

    #[test]
    fn pair_graph_counts_and_order() {
        let ps: Vec<_> = (1..=4).map(|i| prop(i, [0., 0., 1., 1.], 0.9)).collect();
        assert_eq!(build_pair_graph(&ps).len(), 12);
        assert!(build_pair_graph(&ps[..1]).is_empty());
        assert!(build_pair_graph(&[]).is_empty());

        let three = [prop(3, [0., 0., 1., 1.], 1.), prop(1, [0., 0., 1., 1.], 1.), prop(2, [0., 0., 1., 1.], 1.)];
        let keys: Vec<_> = build_pair_graph(&three).iter().map(|e| e.key()).collect();
        assert_eq!(keys, vec![(1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2)]);
    }

    #[test]
    fn identical_union_boxes_share_a_region() {
        // Pairs (1,2) and (2,1) always share a union box.
        let ps = [prop(1, [0., 0., 2., 2.], 0.9), prop(2, [1., 1., 3., 3.], 0.8)];
        let c = cluster_subgraphs(&build_pair_graph(&ps), &ps, 0.5).unwrap();
        assert_eq!(c.regions.len(), 1);
        assert_eq!(c.regions[0].member_pairs.len(), 2);
    }

    #[test]
    fn disjoint_union_boxes_split() {
        let ps = [
            prop(1, [0., 0., 1., 1.], 0.9),
            prop(2, [1., 0., 2., 1.], 0.9),
            prop(3, [100., 100., 101., 101.], 0.9),
            prop(4, [101., 100., 102., 101.], 0.9),
        ];
        let edges = vec![PairEdge::new(1, 2), PairEdge::new(3, 4)];
        let c = cluster_subgraphs(&edges, &ps, 0.5).unwrap();
        assert_eq!(c.regions.len(), 2);
        assert_eq!(c.edges[0].subgraph_id, Some(0));
        assert_eq!(c.edges[1].subgraph_id, Some(1));
    }

    #[test]
    fn seeding_follows_confidence_product() {
        let ps = [
            prop(1, [0., 0., 10., 10.], 0.2),
            prop(2, [10., 0., 20., 10.], 0.2),
            prop(3, [0., 50., 10., 60.], 0.9),
            prop(4, [10., 50., 20., 60.], 0.9),
        ];
        let edges = vec![PairEdge::new(1, 2), PairEdge::new(3, 4)];
        let c = cluster_subgraphs(&edges, &ps, 0.5).unwrap();
        // (3,4) has the larger confidence product and seeds region 0.
        assert_eq!(c.regions[0].member_pairs, vec![(3, 4)]);
        assert_eq!(c.edges[0].subgraph_id, Some(1));
    }

    #[test]
    fn bad_threshold_and_dangling_index() {
        let ps = [prop(1, [0., 0., 1., 1.], 0.9), prop(2, [0., 0., 1., 1.], 0.9)];
        let edges = build_pair_graph(&ps);
        assert!(cluster_subgraphs(&edges, &ps, 0.0).is_err());
        assert!(cluster_subgraphs(&edges, &ps, 1.5).is_err());
        assert!(cluster_subgraphs(&[PairEdge::new(1, 9)], &ps, 0.5).is_err());
    }
}
