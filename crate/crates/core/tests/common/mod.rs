#![allow(dead_code)]

use arnet::datagen::{GtTriplet, SceneObject, SceneRecord};
use arnet::model::{ForwardCache, ModelConfig, ModelParameters};
use arnet::training::{label_pairs, LabeledPair};
use arnet::Box2D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn small_config() -> ModelConfig {
    ModelConfig {
        input_dim: 16,
        feature_dim: 8,
        hidden_dim: 8,
        grid: 3,
        num_relations: 6,
        cluster_threshold: 0.5,
    }
}

/// Random parameters with every group (biases and alpha included) nonzero.
pub fn random_parameters(cfg: ModelConfig, seed: u64) -> ModelParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParameters::init(cfg, &mut rng).unwrap();
    let mut flat = p.to_flat();
    for v in flat.iter_mut() {
        *v += 0.05 * gauss(&mut rng);
    }
    p.set_flat(&flat).unwrap();
    p.context.alpha = 0.5 + rng.random::<f64>();
    p
}

/// `n` overlapping proposals with random features and labels.
pub fn random_scene(cfg: &ModelConfig, n: u32, seed: u64) -> (SceneRecord, Vec<LabeledPair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects: Vec<SceneObject> = (1..=n)
        .map(|i| {
            let x = rng.random_range(0.0..60.0);
            let y = rng.random_range(0.0..60.0);
            let w = rng.random_range(20.0..70.0);
            let h = rng.random_range(20.0..70.0);
            SceneObject {
                index: i,
                bbox: Box2D::new(x, y, x + w, y + h).unwrap(),
                confidence: rng.random_range(0.3..1.0),
                is_object: rng.random_bool(0.7),
                feature: (0..cfg.input_dim).map(|_| 0.25 * gauss(&mut rng)).collect(),
                attributes: (0..cfg.num_relations).map(|_| rng.random_range(0..2u8)).collect(),
            }
        })
        .collect();
    let mut gt = Vec::new();
    for s in 1..=n {
        for o in 1..=n {
            if s != o && rng.random_bool(0.5) {
                gt.push(GtTriplet {
                    subject: s,
                    relationship: rng.random_range(1..=cfg.num_relations),
                    object: o,
                });
            }
        }
    }
    let scene = SceneRecord {
        scene_id: format!("rand-{seed}"),
        objects,
        gt_triplets: gt,
    };
    let labels = label_pairs(&scene).unwrap();
    (scene, labels)
}

/// Draws configurations from `seed` onwards until every ReLU pre-activation
/// sits at least `margin` away from zero. Returns the seed that was used.
pub fn smooth_configuration(
    cfg: ModelConfig,
    n: u32,
    seed: u64,
    margin: f64,
) -> (u64, ModelParameters, SceneRecord, Vec<LabeledPair>) {
    (seed..)
        .find_map(|s| {
            let params = random_parameters(cfg, 100 + s);
            let (scene, labels) = random_scene(&cfg, n, 200 + s);
            let cache = ForwardCache::run(&params, &scene.proposals(), |_| true).unwrap();
            (cache.relu_margin() >= margin).then_some((s, params, scene, labels))
        })
        .unwrap()
}
