//! Phrase- and relationship-detection Recall@K.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datagen::SceneRecord;
use crate::error::{Error, Result};
use crate::geometry::{iou, union_box};
use crate::inference::{score_order, RelationshipTriplet};

/// Minimum IoU for a localisation to count (inclusive).
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Class plus union box of subject and object.
    Phrase,
    /// Class plus subject box and object box separately.
    Relationship,
}

impl MatchMode {
    pub fn prefix(&self) -> &'static str {
        match self {
            MatchMode::Phrase => "PR",
            MatchMode::Relationship => "RR",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MatchMode::Phrase => "phrase",
            MatchMode::Relationship => "relationship",
        }
    }
}

impl std::str::FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phrase" | "p" => Ok(MatchMode::Phrase),
            "relationship" | "r" => Ok(MatchMode::Relationship),
            other => Err(Error::Config(format!("unknown match mode {other:?}"))),
        }
    }
}

pub fn match_phrase(pred: &RelationshipTriplet, gt: &RelationshipTriplet) -> bool {
    pred.relationship_class == gt.relationship_class
        && iou(
            &union_box(&pred.subject_box, &pred.object_box),
            &union_box(&gt.subject_box, &gt.object_box),
        ) >= MATCH_IOU
}

pub fn match_relationship(pred: &RelationshipTriplet, gt: &RelationshipTriplet) -> bool {
    pred.relationship_class == gt.relationship_class
        && iou(&pred.subject_box, &gt.subject_box) >= MATCH_IOU
        && iou(&pred.object_box, &gt.object_box) >= MATCH_IOU
}

pub fn matches(mode: MatchMode, pred: &RelationshipTriplet, gt: &RelationshipTriplet) -> bool {
    match mode {
        MatchMode::Phrase => match_phrase(pred, gt),
        MatchMode::Relationship => match_relationship(pred, gt),
    }
}

/// One-to-one matching of the top `k` predictions (already in score order)
/// against ground truth. Each prediction is inserted in order with
/// augmenting paths, so the matched count is the maximum possible for that
/// prefix. Returns `(matched, gt count)`.
pub fn recall_at_k(
    predictions: &[RelationshipTriplet],
    gt: &[RelationshipTriplet],
    k: usize,
    mode: MatchMode,
) -> Result<(usize, usize)> {
    if k < 1 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let top = &predictions[..k.min(predictions.len())];
    let adj: Vec<Vec<usize>> = top
        .iter()
        .map(|p| (0..gt.len()).filter(|&g| matches(mode, p, &gt[g])).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; gt.len()];

    fn augment(p: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
        for &g in &adj[p] {
            if seen[g] {
                continue;
            }
            seen[g] = true;
            if owner[g].is_none_or(|q| augment(q, adj, owner, seen)) {
                owner[g] = Some(p);
                return true;
            }
        }
        false
    }

    let mut matched = 0;
    for p in 0..top.len() {
        let mut seen = vec![false; gt.len()];
        if augment(p, &adj, &mut owner, &mut seen) {
            matched += 1;
        }
    }
    Ok((matched, gt.len()))
}

/// Ground-truth triplets of a scene with boxes from its objects.
pub fn gt_triplets(scene: &SceneRecord) -> Result<Vec<RelationshipTriplet>> {
    scene
        .gt_triplets
        .iter()
        .map(|t| {
            let find = |idx: u32| {
                scene
                    .object(idx)
                    .map(|o| o.bbox)
                    .ok_or_else(|| Error::Data(format!("scene {}: unknown object {idx}", scene.scene_id)))
            };
            Ok(RelationshipTriplet {
                subject_index: t.subject,
                relationship_class: t.relationship,
                object_index: t.object,
                score: 1.0,
                subject_box: find(t.subject)?,
                object_box: find(t.object)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub mode: MatchMode,
    pub k: usize,
    pub matched: usize,
    pub total: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetric {
    pub scene_id: String,
    pub mode: MatchMode,
    pub k: usize,
    pub matched: usize,
    pub total: usize,
}

/// Micro-averaged recalls: pooled matched / pooled ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
    pub per_scene: Vec<SceneMetric>,
}

impl MetricsReport {
    pub fn recall(&self, mode: MatchMode, k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.mode == mode && r.k == k).map(|r| r.recall)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,k,matched,total,recall\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.mode.name(), r.k, r.matched, r.total, r.recall).expect("string write");
        }
        out
    }

    /// Two-line table with one column per metric (e.g. `PR@1  RR@5`),
    /// values in percent.
    pub fn to_table(&self) -> String {
        let mut header = String::new();
        let mut values = String::new();
        for r in &self.rows {
            let label = format!("{}@{}", r.mode.prefix(), r.k);
            let value = format!("{:.3}", 100.0 * r.recall);
            let w = label.len().max(value.len()) + 2;
            write!(header, "{label:>w$}").expect("string write");
            write!(values, "{value:>w$}").expect("string write");
        }
        format!("# Recall@K (%), micro-averaged over scenes; top-K per scene\n{header}\n{values}\n")
    }
}

/// Recall@K over a dataset. `predictions[i]` belongs to `dataset[i]`; each
/// list is put in [`score_order`] before matching.
pub fn evaluate_dataset(
    predictions: &[Vec<RelationshipTriplet>],
    dataset: &[SceneRecord],
    k_list: &[usize],
    modes: &[MatchMode],
) -> Result<MetricsReport> {
    if predictions.len() != dataset.len() {
        return Err(Error::shape("prediction lists", dataset.len(), predictions.len()));
    }
    if k_list.iter().any(|&k| k < 1) {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut rows = Vec::new();
    let mut per_scene = Vec::new();
    let gts = dataset.iter().map(gt_triplets).collect::<Result<Vec<_>>>()?;
    let sorted: Vec<Vec<RelationshipTriplet>> = predictions
        .iter()
        .map(|p| {
            let mut v = p.clone();
            v.sort_by(score_order);
            v
        })
        .collect();
    for &mode in modes {
        for &k in k_list {
            let (mut matched, mut total) = (0, 0);
            for ((scene, preds), gt) in dataset.iter().zip(&sorted).zip(&gts) {
                let (m, t) = recall_at_k(preds, gt, k, mode)?;
                matched += m;
                total += t;
                per_scene.push(SceneMetric {
                    scene_id: scene.scene_id.clone(),
                    mode,
                    k,
                    matched: m,
                    total: t,
                });
            }
            let recall = if total == 0 { 0.0 } else { matched as f64 / total as f64 };
            rows.push(MetricRow {
                mode,
                k,
                matched,
                total,
                recall,
            });
        }
    }
    Ok(MetricsReport { rows, per_scene })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Box2D;

    fn t(s: u32, c: usize, o: u32, sb: [f64; 4], ob: [f64; 4], score: f64) -> RelationshipTriplet {
        RelationshipTriplet {
            subject_index: s,
            relationship_class: c,
            object_index: o,
            score,
            subject_box: Box2D::try_from(sb).unwrap(),
            object_box: Box2D::try_from(ob).unwrap(),
        }
    }

    #[test]
    fn phrase_matching() {
        let g = t(1, 2, 2, [0., 0., 10., 10.], [20., 0., 30., 10.], 1.0);
        assert!(match_phrase(&g, &g));
        let wrong = RelationshipTriplet { relationship_class: 3, ..g };
        assert!(!match_phrase(&wrong, &g));
        // Shift the object right by dx: union widths 30 vs 30+dx overlap on 30.
        for dx in [5.0, 20.0, 30.0, 31.0] {
            let p = t(1, 2, 2, [0., 0., 10., 10.], [20. + dx, 0., 30. + dx, 10.], 0.5);
            let u1 = union_box(&p.subject_box, &p.object_box);
            let u2 = union_box(&g.subject_box, &g.object_box);
            let direct = u1.intersection_area(&u2) / (u1.area() + u2.area() - u1.intersection_area(&u2));
            assert_eq!(match_phrase(&p, &g), direct >= 0.5, "dx={dx}");
        }
    }

    #[test]
    fn relationship_matching_boundary_is_inclusive() {
        let g = t(1, 2, 2, [0., 0., 10., 10.], [20., 0., 30., 10.], 1.0);
        assert!(match_relationship(&g, &g));
        let far = t(1, 2, 2, [0., 0., 10., 10.], [200., 0., 210., 10.], 1.0);
        assert!(!match_relationship(&far, &g));
        // [0,0,10,10] vs [0,0,10,5]: IoU exactly 0.5
        let half = t(1, 2, 2, [0., 0., 10., 5.], [20., 0., 30., 10.], 1.0);
        assert_eq!(iou(&half.subject_box, &g.subject_box), 0.5);
        assert!(match_relationship(&half, &g));
    }

    #[test]
    fn recall_examples() {
        let g = t(1, 2, 2, [0., 0., 10., 10.], [20., 0., 30., 10.], 1.0);
        assert_eq!(recall_at_k(&[g], &[g], 1, MatchMode::Relationship).unwrap(), (1, 1));
        assert_eq!(recall_at_k(&[], &[g, g], 5, MatchMode::Phrase).unwrap(), (0, 2));
        assert!(recall_at_k(&[g], &[g], 0, MatchMode::Phrase).is_err());
    }

    #[test]
    fn augmenting_matching_beats_first_come_claims() {
        // Two GTs share one union box; the first prediction matches both,
        // the second only the first GT.
        let a = t(1, 2, 2, [0., 0., 10., 10.], [20., 0., 30., 10.], 1.0);
        let b = t(2, 2, 1, [20., 0., 30., 10.], [0., 0., 10., 10.], 1.0);
        let p1 = RelationshipTriplet { score: 0.9, ..a };
        let p2 = RelationshipTriplet { score: 0.8, ..a };
        assert_eq!(recall_at_k(&[p1, p2], &[a, b], 2, MatchMode::Phrase).unwrap(), (2, 2));
        assert_eq!(recall_at_k(&[p1, p2], &[a, b], 2, MatchMode::Relationship).unwrap(), (1, 2));
    }

    #[test]
    fn report_formats() {
        let report = MetricsReport {
            rows: vec![
                MetricRow { mode: MatchMode::Phrase, k: 1, matched: 1, total: 4, recall: 0.25 },
                MetricRow { mode: MatchMode::Relationship, k: 5, matched: 3, total: 4, recall: 0.75 },
            ],
            per_scene: vec![],
        };
        assert_eq!(report.to_csv(), "mode,k,matched,total,recall\nphrase,1,1,4,0.25\nrelationship,5,3,4,0.75\n");
        let table = report.to_table();
        assert!(table.contains("PR@1") && table.contains("RR@5") && table.contains("75.000"));
        assert_eq!("R".parse::<MatchMode>().unwrap(), MatchMode::Relationship);
        assert!("x".parse::<MatchMode>().is_err());
    }
}
