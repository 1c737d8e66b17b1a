//! WebAssembly bindings behind `www/index.html`.
//!
//! Every entry point takes plain numbers or strings and returns a JSON string,
//! so the page needs nothing beyond `JSON.parse`. Scenes come from the default
//! synthetic taxonomy (seed 42, 32-dim features), which is what `arnet gen`
//! uses by default, so a model trained from the CLI can be pasted in as is.

use arnet::datagen::{default_taxonomy, gen_scene, GenConfig, SceneRecord, Taxonomy};
use arnet::inference::{export_dot, export_json, infer_mrg, InferenceConfig, RelationshipClassTable};
use arnet::model::{attention_weights, project_objects, rasterize_subgraph, ModelConfig, ModelParameters};
use arnet::pairs::{build_pair_graph, cluster_subgraphs};
use arnet::{Box2D, Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

const TAXONOMY_SEED: u64 = 42;
const FEATURE_DIM: usize = 32;

fn taxonomy() -> Taxonomy {
    default_taxonomy(TAXONOMY_SEED, FEATURE_DIM)
}

fn scene(seed: u64) -> Result<SceneRecord> {
    let tax = taxonomy();
    let all: Vec<usize> = (0..tax.archetypes.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_scene(&tax, &GenConfig::default(), &all, &format!("demo-{seed}"), &mut rng)
}

/// Untrained parameters, used whenever no model is supplied.
fn random_model(seed: u64) -> Result<ModelParameters> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParameters::init(ModelConfig::default(), &mut rng)
}

#[derive(Serialize)]
struct ObjectView {
    index: u32,
    #[serde(rename = "box")]
    bbox: Box2D,
    confidence: f64,
    is_object: bool,
}

pub fn scene_view(seed: u64) -> Result<String> {
    let s = scene(seed)?;
    let classes = RelationshipClassTable::default();
    let objects: Vec<ObjectView> = s
        .objects
        .iter()
        .map(|o| ObjectView { index: o.index, bbox: o.bbox, confidence: o.confidence, is_object: o.is_object })
        .collect();
    let gt: Vec<_> = s
        .gt_triplets
        .iter()
        .map(|t| json!({"subject": t.subject, "relationship": classes.name(t.relationship), "object": t.object}))
        .collect();
    Ok(json!({"scene_id": s.scene_id, "objects": objects, "gt": gt}).to_string())
}

pub fn clustering_view(seed: u64, threshold: f64) -> Result<String> {
    let props = scene(seed)?.proposals();
    let edges = build_pair_graph(&props);
    let clustering = cluster_subgraphs(&edges, &props, threshold)?;
    let regions: Vec<_> = clustering
        .regions
        .iter()
        .map(|r| json!({"id": r.id, "box": r.region_box, "pairs": r.member_pairs}))
        .collect();
    Ok(json!({"pairs": edges.len(), "regions": regions}).to_string())
}

/// Per-cell attention over the objects a region contains, from an untrained
/// model seeded by `model_seed`.
pub fn attention_view(seed: u64, region: usize, model_seed: u64) -> Result<String> {
    let props = scene(seed)?.proposals();
    let params = random_model(model_seed)?;
    let clustering = cluster_subgraphs(&build_pair_graph(&props), &props, params.config.cluster_threshold)?;
    let r = clustering
        .regions
        .get(region)
        .ok_or_else(|| Error::Data(format!("scene has {} regions, no region {region}", clustering.regions.len())))?;
    let objects = project_objects(&params, &props)?;
    let (contained, features): (Vec<u32>, Vec<Vec<f64>>) = props
        .iter()
        .zip(objects)
        .filter(|(p, _)| p.bbox.overlaps(&r.region_box))
        .map(|(p, o)| (p.index, o))
        .unzip();
    let map = rasterize_subgraph(&params, r, &props)?;
    let g = params.config.grid;
    let mut cells = Vec::with_capacity(g * g);
    for (i, rect) in r.region_box.grid_cells(g).into_iter().enumerate() {
        let w = attention_weights(&params.context, &features, &map, (i % g, i / g))?;
        cells.push(json!({"box": rect, "weights": w}));
    }
    Ok(json!({"region": r.region_box, "grid": g, "contained": contained, "cells": cells}).to_string())
}

pub fn mrg_view(seed: u64, model_json: &str, min_score: f64) -> Result<String> {
    let params = if model_json.trim().is_empty() {
        random_model(0)?
    } else {
        ModelParameters::from_json(model_json)?
    };
    let s = scene(seed)?;
    let cfg = InferenceConfig { min_score, ..InferenceConfig::default() };
    let mrg = infer_mrg(&params, &s.proposals(), &cfg)?;
    let classes = RelationshipClassTable::default();
    let graph: serde_json::Value = serde_json::from_str(&export_json(&mrg, &classes)?)?;
    Ok(json!({"graph": graph, "dot": export_dot(&mrg, &classes)?}).to_string())
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

/// Objects and ground truth of the synthetic scene drawn from `seed`.
#[wasm_bindgen]
pub fn scene_json(seed: u32) -> std::result::Result<String, JsError> {
    js(scene_view(seed.into()))
}

#[wasm_bindgen]
pub fn cluster_scene(seed: u32, threshold: f64) -> std::result::Result<String, JsError> {
    js(clustering_view(seed.into(), threshold))
}

#[wasm_bindgen]
pub fn attention_map(seed: u32, region: usize, model_seed: u32) -> std::result::Result<String, JsError> {
    js(attention_view(seed.into(), region, model_seed.into()))
}

/// Pass an empty string for `model_json` to use an untrained model.
#[wasm_bindgen]
pub fn infer_graph(seed: u32, model_json: &str, min_score: f64) -> std::result::Result<String, JsError> {
    js(mrg_view(seed.into(), model_json, min_score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn scene_has_objects_and_ground_truth() {
        let v = parse(scene_view(3).unwrap());
        assert!(v["objects"].as_array().unwrap().len() >= 2);
        assert!((3..=7).contains(&v["gt"].as_array().unwrap().len()));
        assert_eq!(scene_view(3).unwrap(), scene_view(3).unwrap());
    }

    #[test]
    fn clustering_covers_every_pair() {
        let v = parse(clustering_view(5, 0.5).unwrap());
        let members: usize = v["regions"].as_array().unwrap().iter().map(|r| r["pairs"].as_array().unwrap().len()).sum();
        assert_eq!(members as u64, v["pairs"].as_u64().unwrap());
        // Threshold 1 only merges identical union boxes, so never fewer regions.
        let strict = parse(clustering_view(5, 1.0).unwrap());
        assert!(strict["regions"].as_array().unwrap().len() >= v["regions"].as_array().unwrap().len());
        assert!(clustering_view(5, 0.0).is_err());
    }

    #[test]
    fn attention_weights_sum_to_one_per_cell() {
        let v = parse(attention_view(1, 0, 7).unwrap());
        let cells = v["cells"].as_array().unwrap();
        assert_eq!(cells.len(), 25);
        for c in cells {
            let s: f64 = c["weights"].as_array().unwrap().iter().map(|w| w.as_f64().unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert!(attention_view(1, 10_000, 7).is_err());
    }

    #[test]
    fn graph_from_untrained_and_supplied_models() {
        let v = parse(mrg_view(2, "", 0.0).unwrap());
        assert!(v["dot"].as_str().unwrap().starts_with("digraph"));
        let model = random_model(0).unwrap().to_json().unwrap();
        assert_eq!(mrg_view(2, &model, 0.0).unwrap(), mrg_view(2, "", 0.0).unwrap());
        let none = parse(mrg_view(2, "", 1.1).unwrap());
        assert!(none["graph"]["edges"].as_array().unwrap().is_empty());
        assert!(mrg_view(2, "{", 0.0).is_err());
    }
}
