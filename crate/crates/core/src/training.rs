//! Supervised training: pair labelling, background subsampling, the
//! multi-task loss and its gradient, the step schedule, and the epoch loop.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::SceneRecord;
use crate::error::{Error, Result};
use crate::model::{backward, ForwardCache, GradientTape, ModelConfig, ModelParameters, OutputGrads};
use crate::nn::{
    adam_step, binary_cross_entropy, binary_cross_entropy_grad, cross_entropy, cross_entropy_grad,
    softmax_backward, AdamConfig, AdamState,
};
use crate::pairs::build_pair_graph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub relationship: f64,
    pub attribute: f64,
    pub objectness: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            relationship: 1.0,
            attribute: 1.0,
            objectness: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub initial_lr: f64,
    pub lr_decay_factor: f64,
    /// Epochs between learning-rate decays.
    pub lr_decay_every: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Background pairs kept per positive pair, at most.
    pub negative_ratio: f64,
    pub loss_weights: LossWeights,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            initial_lr: 1e-3,
            lr_decay_factor: 0.1,
            lr_decay_every: 5,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            negative_ratio: 3.0,
            loss_weights: LossWeights::default(),
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !pos(self.initial_lr) || !pos(self.lr_decay_factor) || self.lr_decay_every == 0 {
            return Err(Error::Config("learning-rate schedule values must be positive".into()));
        }
        if !(self.negative_ratio >= 0.0 && self.negative_ratio.is_finite()) {
            return Err(Error::Config("negative_ratio must be non-negative".into()));
        }
        if self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        self.model.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// `initial_lr × decay^⌊(epoch − 1) / every⌋` for 1-based `epoch`.
pub fn learning_rate(config: &TrainConfig, epoch: usize) -> f64 {
    let decays = (epoch.max(1) - 1) / config.lr_decay_every;
    config.initial_lr * config.lr_decay_factor.powi(decays as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    pub subject_index: u32,
    pub object_index: u32,
    /// 0 = background.
    pub relationship_class: usize,
}

/// Labels every ordered pair of the scene with its ground-truth class or
/// background.
pub fn label_pairs(scene: &SceneRecord) -> Result<Vec<LabeledPair>> {
    let mut gt: HashMap<(u32, u32), usize> = HashMap::new();
    for t in &scene.gt_triplets {
        for idx in [t.subject, t.object] {
            if scene.object(idx).is_none() {
                return Err(Error::Data(format!(
                    "scene {}: ground truth references unknown object {idx}",
                    scene.scene_id
                )));
            }
        }
        if gt.insert((t.subject, t.object), t.relationship).is_some() {
            return Err(Error::Data(format!(
                "scene {}: duplicate ground truth for pair ({}, {})",
                scene.scene_id, t.subject, t.object
            )));
        }
    }
    Ok(build_pair_graph(&scene.proposals())
        .into_iter()
        .map(|e| LabeledPair {
            subject_index: e.subject_index,
            object_index: e.object_index,
            relationship_class: gt.get(&e.key()).copied().unwrap_or(0),
        })
        .collect())
}

/// Keeps every positive and at most `⌊ratio × positives⌋` background pairs,
/// drawn uniformly without replacement. Output keeps the input order.
pub fn sample_training_pairs<R: Rng + ?Sized>(
    labeled: &[LabeledPair],
    negative_ratio: f64,
    rng: &mut R,
) -> Vec<LabeledPair> {
    let positives = labeled.iter().filter(|p| p.relationship_class != 0).count();
    let negatives: Vec<usize> = (0..labeled.len())
        .filter(|&i| labeled[i].relationship_class == 0)
        .collect();
    let budget = (negative_ratio * positives as f64).floor() as usize;
    let mut keep = vec![false; labeled.len()];
    for (i, p) in labeled.iter().enumerate() {
        keep[i] = p.relationship_class != 0;
    }
    if negatives.len() <= budget {
        negatives.iter().for_each(|&i| keep[i] = true);
    } else {
        for &i in negatives.choose_multiple(rng, budget) {
            keep[i] = true;
        }
    }
    labeled
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(p, _)| *p)
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub relationship: f64,
    pub attribute: f64,
    pub objectness: f64,
}

/// Multi-task loss over one scene and its gradient with respect to every
/// trainable parameter.
///
/// Relationship: mean cross-entropy over `labels`. Attribute: mean over
/// proposals of the per-proposal BCE against the attribute targets.
/// Objectness: mean BCE against the real-object flags.
pub fn scene_loss(
    params: &ModelParameters,
    scene: &SceneRecord,
    labels: &[LabeledPair],
    weights: &LossWeights,
) -> Result<(LossBreakdown, GradientTape)> {
    let wanted: HashMap<(u32, u32), usize> = labels
        .iter()
        .map(|l| ((l.subject_index, l.object_index), l.relationship_class))
        .collect();
    let proposals = scene.proposals();
    let cache = ForwardCache::run(params, &proposals, |e| wanted.contains_key(&e.key()))?;
    if cache.pairs.len() != wanted.len() {
        return Err(Error::Data(format!(
            "scene {}: labels reference pairs that are not in the scene",
            scene.scene_id
        )));
    }

    let n = proposals.len();
    let mut grads = OutputGrads {
        attribute_logits: Vec::with_capacity(n),
        objectness_logits: Vec::with_capacity(n),
        pair_logits: Vec::with_capacity(cache.pairs.len()),
    };
    let mut loss = LossBreakdown::default();
    let r = params.config.num_relations;
    for (i, obj) in scene.objects.iter().enumerate() {
        if obj.attributes.len() != r {
            return Err(Error::shape("attribute targets", r, obj.attributes.len()));
        }
        let targets: Vec<f64> = obj.attributes.iter().map(|&a| a as f64).collect();
        let probs = &cache.attribute_probs()[i];
        loss.attribute += binary_cross_entropy(probs, &targets) / n as f64;
        let scale = weights.attribute / n as f64;
        let g = binary_cross_entropy_grad(probs, &targets);
        grads
            .attribute_logits
            .push(g.iter().zip(probs).map(|(g, p)| scale * g * p * (1.0 - p)).collect());

        let p = cache.objectness()[i];
        let t = if obj.is_object { 1.0 } else { 0.0 };
        loss.objectness += binary_cross_entropy(&[p], &[t]) / n as f64;
        let g = binary_cross_entropy_grad(&[p], &[t])[0];
        grads
            .objectness_logits
            .push(weights.objectness / n as f64 * g * p * (1.0 - p));
    }
    let m = cache.pairs.len();
    for (s, o, probs) in cache.pair_probs() {
        let class = wanted[&(s, o)];
        loss.relationship += cross_entropy(probs, class) / m as f64;
        let scale = weights.relationship / m as f64;
        let g: Vec<f64> = cross_entropy_grad(probs, class).iter().map(|v| v * scale).collect();
        grads.pair_logits.push(softmax_backward(probs, &g));
    }
    loss.total = weights.relationship * loss.relationship
        + weights.attribute * loss.attribute
        + weights.objectness * loss.objectness;
    if !loss.total.is_finite() {
        return Err(Error::NonFinite(format!("loss on scene {}", scene.scene_id)));
    }
    let tape = backward(params, &cache, &grads)?;
    Ok((loss, tape))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub relationship_loss: f64,
    pub attribute_loss: f64,
    pub objectness_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParameters,
    pub history: Vec<EpochStats>,
    pub steps: u64,
}

/// Parameters before any update, derived from the configured seed.
pub fn initial_parameters(config: &TrainConfig) -> Result<ModelParameters> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    ModelParameters::init(config.model, &mut rng)
}

/// One Adam step per scene, scenes in a freshly shuffled order each epoch.
pub fn train(dataset: &[SceneRecord], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(dataset, config, |_| {})
}

pub fn train_with_progress(
    dataset: &[SceneRecord],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let labels = dataset
        .iter()
        .map(|s| {
            s.validate(config.model.num_relations)?;
            if let Some(o) = s.objects.iter().find(|o| o.feature.len() != config.model.input_dim) {
                return Err(Error::shape(
                    format!("feature of object {} in scene {}", o.index, s.scene_id),
                    config.model.input_dim,
                    o.feature.len(),
                ));
            }
            label_pairs(s)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut params = initial_parameters(config)?;
    let mut flat = params.to_flat();
    let mut state = AdamState::new(flat.len());
    let adam = config.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 1..=config.epochs {
        let lr = learning_rate(config, epoch);
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        for &si in &order {
            let scene = &dataset[si];
            let diverged = |message: String| Error::Diverged {
                epoch,
                scene: scene.scene_id.clone(),
                message,
            };
            let sampled = sample_training_pairs(&labels[si], config.negative_ratio, &mut rng);
            let (loss, tape) = scene_loss(&params, scene, &sampled, &config.loss_weights).map_err(|e| match e {
                Error::NonFinite(m) => diverged(m),
                other => other,
            })?;
            adam_step(&mut flat, &tape.to_flat(), &mut state, lr, &adam).map_err(|e| match e {
                Error::NonFinite(m) => diverged(m),
                other => other,
            })?;
            params.set_flat(&flat)?;
            sum.total += loss.total;
            sum.relationship += loss.relationship;
            sum.attribute += loss.attribute;
            sum.objectness += loss.objectness;
        }
        let n = dataset.len() as f64;
        let stats = EpochStats {
            epoch,
            mean_loss: sum.total / n,
            relationship_loss: sum.relationship / n,
            attribute_loss: sum.attribute / n,
            objectness_loss: sum.objectness / n,
            lr,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(TrainOutcome {
        params,
        history,
        steps: state.step_count,
    })
}

/// `epoch,mean_loss,relationship_loss,attribute_loss,objectness_loss,lr`
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,mean_loss,relationship_loss,attribute_loss,objectness_loss,lr\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            h.epoch, h.mean_loss, h.relationship_loss, h.attribute_loss, h.objectness_loss, h.lr
        ));
    }
    out
}
