mod common;

use arnet::nn::finite_difference_check;
use arnet::training::{scene_loss, LossWeights};

use common::{small_config, smooth_configuration};

const EPSILON: f64 = 3e-5;
// Central differences are meaningless across a ReLU kink, so every drawn
// configuration keeps its pre-activations this far from zero.
const RELU_MARGIN: f64 = 1e-3;

#[test]
fn full_model_gradients_match_central_differences() {
    let cfg = small_config();
    let weights = LossWeights::default();
    let mut failures = Vec::new();
    let mut next = 0;
    for _ in 0..12 {
        let (seed, params, scene, labels) = smooth_configuration(cfg, 3, next, RELU_MARGIN);
        next = seed + 1;
        let (_, tape) = scene_loss(&params, &scene, &labels, &weights).unwrap();
        let mut probe = params.clone();
        let report = finite_difference_check(
            |flat| {
                probe.set_flat(flat)?;
                Ok(scene_loss(&probe, &scene, &labels, &weights)?.0.total)
            },
            &params.to_flat(),
            &tape.to_flat(),
            EPSILON,
        )
        .unwrap();
        for (name, range) in params.groups() {
            let worst = report.max_over(range.clone());
            if worst >= 1e-4 {
                let i = range.clone().find(|&i| report.relative_error(i) == worst).unwrap();
                failures.push(format!(
                    "seed {seed} {name}[{}]: analytic {:e} numeric {:e}",
                    i - range.start,
                    report.analytic[i],
                    report.numeric[i]
                ));
            }
        }
        println!("seed {seed}: max relative error {:.2e}", report.max_relative_error);
    }
    assert!(failures.is_empty(), "{failures:#?}");
}
