use crate::error::{Error, Result};
use crate::nn::{axpy, dot, relu_backward, softmax_backward};

use super::forward::ForwardCache;
use super::{GradientTape, ModelParameters};

/// Upstream gradients with respect to the model's output logits.
///
/// `attribute_logits` and `objectness_logits` are indexed by proposal
/// position; `pair_logits` follows the pairs evaluated in the cache. Empty
/// vectors stand for zero gradient.
#[derive(Debug, Clone, Default)]
pub struct OutputGrads {
    pub attribute_logits: Vec<Vec<f64>>,
    pub objectness_logits: Vec<f64>,
    pub pair_logits: Vec<Vec<f64>>,
}

/// Reverse pass through [`ForwardCache`], returning parameter gradients.
pub fn backward(params: &ModelParameters, cache: &ForwardCache, grads: &OutputGrads) -> Result<GradientTape> {
    let cfg = params.config;
    let n = cache.num_objects();
    let d = cfg.feature_dim;
    if grads.pair_logits.len() != cache.pairs.len() && !grads.pair_logits.is_empty() {
        return Err(Error::shape("pair logit gradients", cache.pairs.len(), grads.pair_logits.len()));
    }
    let mut tape = params.zeros_like();
    let mut d_objects = vec![vec![0.0; d]; n];

    for (i, g) in grads.attribute_logits.iter().enumerate().filter(|(_, g)| !g.is_empty()) {
        let back = params.attribute_head.backward(&cache.objects[i], g, &mut tape.attribute_head);
        axpy(&mut d_objects[i], 1.0, &back);
    }
    for (i, &g) in grads.objectness_logits.iter().enumerate() {
        if g != 0.0 {
            let back = params.objectness_head.backward(&cache.objects[i], &[g], &mut tape.objectness_head);
            axpy(&mut d_objects[i], 1.0, &back);
        }
    }

    let mut d_agg: Vec<Option<Vec<f64>>> = cache.regions.iter().map(|_| None).collect();
    for (pair, g) in cache.pairs.iter().zip(&grads.pair_logits) {
        if g.is_empty() {
            continue;
        }
        let dh = params.relationship_out.backward(&pair.h, g, &mut tape.relationship_out);
        let dh_pre = relu_backward(&pair.h_pre, &dh);
        let dz = params.relationship_hidden.backward(&pair.z, &dh_pre, &mut tape.relationship_hidden);
        let dz_pre = relu_backward(&pair.z_pre, &dz);
        axpy(&mut d_objects[pair.subject], 1.0, &dz_pre);
        axpy(&mut d_objects[pair.object], 1.0, &dz_pre);
        let acc = d_agg[pair.region].get_or_insert_with(|| vec![0.0; d]);
        axpy(acc, 1.0, &dz_pre);
    }

    let ctx = &params.context;
    let mut d_keys = vec![vec![0.0; d]; n];
    let mut d_values = vec![vec![0.0; d]; n];
    let mut d_init = vec![vec![0.0; d]; n];
    for (region, g_agg) in cache.regions.iter().zip(&d_agg) {
        let (Some(region), Some(g_agg)) = (region, g_agg) else {
            continue;
        };
        let d_attended: Vec<f64> = g_agg.iter().map(|g| ctx.alpha * g).collect();
        for c in 0..region.map.cells.len() {
            tape.context.alpha += dot(g_agg, &region.attended[c]);
            let mut d_cell = g_agg.clone();

            let w = &region.weights[c];
            let mut d_w = vec![0.0; w.len()];
            for (j, &i) in region.contained.iter().enumerate() {
                axpy(&mut d_values[i], w[j], &d_attended);
                d_w[j] = dot(&d_attended, &cache.values[i]);
            }
            let d_logits = softmax_backward(w, &d_w);
            let q = &region.queries[c];
            let mut d_q = vec![0.0; d];
            for (j, &i) in region.contained.iter().enumerate() {
                axpy(&mut d_keys[i], d_logits[j], q);
                axpy(&mut d_q, d_logits[j], &cache.keys[i]);
            }
            let back = ctx
                .query_projection
                .backward(&region.map.cells[c], &d_q, &mut tape.context.query_projection);
            axpy(&mut d_cell, 1.0, &back);

            let members = &region.cell_members[c];
            if !members.is_empty() {
                let share = 1.0 / members.len() as f64;
                for &i in members {
                    axpy(&mut d_init[i], share, &d_cell);
                }
            }
        }
    }

    for i in 0..n {
        let o = &cache.objects[i];
        let back = ctx.key_projection.backward(o, &d_keys[i], &mut tape.context.key_projection);
        axpy(&mut d_objects[i], 1.0, &back);
        let back = ctx.value_projection.backward(o, &d_values[i], &mut tape.context.value_projection);
        axpy(&mut d_objects[i], 1.0, &back);

        let a = &cache.appearance[i];
        let g_init = relu_backward(&cache.init_pre[i], &d_init[i]);
        params
            .subgraph_init_projection
            .backward_params(a, &g_init, &mut tape.subgraph_init_projection);
        let g_obj = relu_backward(&cache.object_pre[i], &d_objects[i]);
        params.object_projection.backward_params(a, &g_obj, &mut tape.object_projection);
    }
    // Untrained parameter; keep its accumulator clean.
    tape.context.key_projection.bias_mut().fill(0.0);
    Ok(tape)
}
