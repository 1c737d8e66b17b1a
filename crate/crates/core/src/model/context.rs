//! Subgraph feature maps and the spatial attention context module.

use crate::error::{Error, Result};
use crate::geometry::Box2D;
use crate::nn::{dot, relu, softmax};
use crate::pairs::SubgraphRegion;
use crate::scene::ObjectProposal;

use super::{ContextParams, ModelParameters};

/// `grid × grid` cells of feature vectors, row-major: cell `(x, y)` is at
/// `y * grid + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphFeatureMap {
    pub grid: usize,
    pub dim: usize,
    pub cells: Vec<Vec<f64>>,
}

impl SubgraphFeatureMap {
    pub fn zeros(grid: usize, dim: usize) -> Self {
        Self {
            grid,
            dim,
            cells: vec![vec![0.0; dim]; grid * grid],
        }
    }

    pub fn cell(&self, x: usize, y: usize) -> &[f64] {
        &self.cells[y * self.grid + x]
    }

    /// Plain spatial sum `Σ_{x,y} S(x, y)`.
    pub fn spatial_sum(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for c in &self.cells {
            for (a, v) in acc.iter_mut().zip(c) {
                *a += v;
            }
        }
        acc
    }
}

/// Region map plus, per cell, the positions of the objects averaged into it.
pub(crate) fn rasterize_cells(
    region_box: &Box2D,
    grid: usize,
    dim: usize,
    boxes: &[Box2D],
    init_features: &[Vec<f64>],
) -> (SubgraphFeatureMap, Vec<Vec<usize>>) {
    let mut map = SubgraphFeatureMap::zeros(grid, dim);
    let mut members = Vec::with_capacity(grid * grid);
    for (cell, rect) in map.cells.iter_mut().zip(region_box.grid_cells(grid)) {
        let inside: Vec<usize> = boxes
            .iter()
            .enumerate()
            .filter(|(_, b)| b.overlaps(&rect))
            .map(|(i, _)| i)
            .collect();
        if !inside.is_empty() {
            for &i in &inside {
                for (c, v) in cell.iter_mut().zip(&init_features[i]) {
                    *c += v;
                }
            }
            let n = inside.len() as f64;
            cell.iter_mut().for_each(|c| *c /= n);
        }
        members.push(inside);
    }
    (map, members)
}

/// Attention of one query over `keys`, and the weighted sum of `values`.
pub(crate) fn attend(keys: &[&[f64]], values: &[&[f64]], query: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let logits: Vec<f64> = keys.iter().map(|k| dot(k, query)).collect();
    let weights = softmax(&logits);
    let mut out = vec![0.0; query.len()];
    for (w, v) in weights.iter().zip(values) {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += w * x;
        }
    }
    (weights, out)
}

/// `Σ_{x,y} [S(x,y) + α · Ô(x,y)]`, accumulated cell by cell.
pub(crate) fn accumulate(map: &SubgraphFeatureMap, attended: &[Vec<f64>], alpha: f64) -> Vec<f64> {
    let mut acc = vec![0.0; map.dim];
    for (s, o) in map.cells.iter().zip(attended) {
        for ((a, sv), ov) in acc.iter_mut().zip(s).zip(o) {
            *a += sv + alpha * ov;
        }
    }
    acc
}

fn check_dims(what: &str, vs: &[Vec<f64>], dim: usize) -> Result<()> {
    match vs.iter().find(|v| v.len() != dim) {
        Some(v) => Err(Error::shape(what, dim, v.len())),
        None => Ok(()),
    }
}

/// Projects every proposal with the subgraph initialisation layer and
/// averages the results over each grid cell of the region they overlap.
pub fn rasterize_subgraph(
    params: &ModelParameters,
    region: &SubgraphRegion,
    proposals: &[ObjectProposal],
) -> Result<SubgraphFeatureMap> {
    let feats = proposals
        .iter()
        .map(|p| params.subgraph_init_projection.forward(&p.appearance).map(|v| relu(&v)))
        .collect::<Result<Vec<_>>>()?;
    let boxes: Vec<Box2D> = proposals.iter().map(|p| p.bbox).collect();
    let (map, _) = rasterize_cells(
        &region.region_box,
        params.config.grid,
        params.config.feature_dim,
        &boxes,
        &feats,
    );
    Ok(map)
}

type KeysValues = (Vec<Vec<f64>>, Vec<Vec<f64>>);

impl ContextParams {
    fn keys_values(&self, objects: &[Vec<f64>]) -> Result<KeysValues> {
        if objects.is_empty() {
            return Err(Error::Data("attention needs at least one object".into()));
        }
        check_dims("context object feature", objects, self.key_projection.inputs())?;
        let keys = objects.iter().map(|o| self.key_projection.apply(o)).collect();
        let values = objects.iter().map(|o| self.value_projection.apply(o)).collect();
        Ok((keys, values))
    }

    fn query(&self, map: &SubgraphFeatureMap, cell: (usize, usize)) -> Result<Vec<f64>> {
        if cell.0 >= map.grid || cell.1 >= map.grid {
            return Err(Error::Data(format!("cell {cell:?} outside {0}×{0} grid", map.grid)));
        }
        self.query_projection.forward(map.cell(cell.0, cell.1))
    }
}

fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(Vec::as_slice).collect()
}

/// Softmax over the given objects of `⟨K(o_i), Q(S(x, y))⟩`.
pub fn attention_weights(
    context: &ContextParams,
    object_features: &[Vec<f64>],
    map: &SubgraphFeatureMap,
    cell: (usize, usize),
) -> Result<Vec<f64>> {
    let (keys, values) = context.keys_values(object_features)?;
    let q = context.query(map, cell)?;
    Ok(attend(&refs(&keys), &refs(&values), &q).0)
}

/// `Ô(x, y) = Σ_i W_i · V(o_i)`.
pub fn weighted_object_features(
    context: &ContextParams,
    object_features: &[Vec<f64>],
    map: &SubgraphFeatureMap,
    cell: (usize, usize),
) -> Result<Vec<f64>> {
    let (keys, values) = context.keys_values(object_features)?;
    let q = context.query(map, cell)?;
    Ok(attend(&refs(&keys), &refs(&values), &q).1)
}

/// Aggregated subgraph feature `Σ_{x,y} [S(x, y) + α · Ô(x, y)]`.
pub fn aggregate_subgraph(
    context: &ContextParams,
    object_features: &[Vec<f64>],
    map: &SubgraphFeatureMap,
) -> Result<Vec<f64>> {
    let (keys, values) = context.keys_values(object_features)?;
    let (k, v) = (refs(&keys), refs(&values));
    let mut attended = Vec::with_capacity(map.cells.len());
    for y in 0..map.grid {
        for x in 0..map.grid {
            let q = context.query(map, (x, y))?;
            attended.push(attend(&k, &v, &q).1);
        }
    }
    Ok(accumulate(map, &attended, context.alpha))
}
