use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DenseLayer, TensorDoc};
use crate::pairs::DEFAULT_CLUSTER_THRESHOLD;

/// Dimensions and fixed hyperparameters of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Appearance feature dimension of incoming proposals.
    pub input_dim: usize,
    /// Projected object / subgraph feature dimension.
    pub feature_dim: usize,
    /// Width of the relationship head's hidden layer.
    pub hidden_dim: usize,
    /// Side length of the subgraph feature grid.
    pub grid: usize,
    /// Number of relationship classes, excluding background.
    pub num_relations: usize,
    pub cluster_threshold: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 32,
            feature_dim: 32,
            hidden_dim: 32,
            grid: 5,
            num_relations: 6,
            cluster_threshold: DEFAULT_CLUSTER_THRESHOLD,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.feature_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.grid == 0 {
            return Err(Error::Config("grid must be at least 1".into()));
        }
        if self.num_relations == 0 {
            return Err(Error::Config("need at least one relationship class".into()));
        }
        if !(self.cluster_threshold > 0.0 && self.cluster_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "cluster threshold {} outside (0, 1]",
                self.cluster_threshold
            )));
        }
        Ok(())
    }
}

/// Key/query/value projections and the learnable attention scale.
///
/// The key projection's bias is held at zero and is not trained: a shared
/// offset on every key shifts all attention logits of a cell by the same
/// amount and cancels in the softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextParams {
    pub key_projection: DenseLayer,
    pub query_projection: DenseLayer,
    pub value_projection: DenseLayer,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub object_projection: DenseLayer,
    pub subgraph_init_projection: DenseLayer,
    pub context: ContextParams,
    pub attribute_head: DenseLayer,
    pub objectness_head: DenseLayer,
    pub relationship_hidden: DenseLayer,
    pub relationship_out: DenseLayer,
}

/// Gradient accumulators shaped exactly like [`ModelParameters`].
pub type GradientTape = ModelParameters;

impl ModelParameters {
    pub fn zeros(config: ModelConfig) -> Self {
        let (i, d, h, r) = (config.input_dim, config.feature_dim, config.hidden_dim, config.num_relations);
        Self {
            config,
            object_projection: DenseLayer::zeros(i, d),
            subgraph_init_projection: DenseLayer::zeros(i, d),
            context: ContextParams {
                key_projection: DenseLayer::zeros(d, d),
                query_projection: DenseLayer::zeros(d, d),
                value_projection: DenseLayer::zeros(d, d),
                alpha: 0.0,
            },
            attribute_head: DenseLayer::zeros(d, r),
            objectness_head: DenseLayer::zeros(d, 1),
            relationship_hidden: DenseLayer::zeros(d, h),
            relationship_out: DenseLayer::zeros(h, r + 1),
        }
    }

    /// Gaussian fan-in initialisation with zero biases and `alpha = 0`.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (i, d, h, r) = (config.input_dim, config.feature_dim, config.hidden_dim, config.num_relations);
        let relu_gain = 2f64.sqrt();
        Ok(Self {
            config,
            object_projection: DenseLayer::random(i, d, relu_gain, rng),
            // Scaled down because the aggregated map sums grid² cells.
            subgraph_init_projection: DenseLayer::random(i, d, relu_gain / config.grid as f64, rng),
            context: ContextParams {
                key_projection: DenseLayer::random(d, d, 1.0, rng),
                query_projection: DenseLayer::random(d, d, 1.0, rng),
                value_projection: DenseLayer::random(d, d, 1.0, rng),
                alpha: 0.0,
            },
            attribute_head: DenseLayer::random(d, r, 1.0, rng),
            objectness_head: DenseLayer::random(d, 1, 1.0, rng),
            relationship_hidden: DenseLayer::random(d, h, relu_gain, rng),
            relationship_out: DenseLayer::random(h, r + 1, 1.0, rng),
        })
    }

    pub fn zeros_like(&self) -> GradientTape {
        Self::zeros(self.config)
    }

    fn dense_layers(&self) -> [(&'static str, &DenseLayer); 8] {
        [
            ("object_projection", &self.object_projection),
            ("subgraph_init_projection", &self.subgraph_init_projection),
            ("context.key_projection", &self.context.key_projection),
            ("context.query_projection", &self.context.query_projection),
            ("context.value_projection", &self.context.value_projection),
            ("attribute_head", &self.attribute_head),
            ("objectness_head", &self.objectness_head),
            ("relationship_hidden", &self.relationship_hidden),
        ]
    }

    /// Visits every trainable tensor in a fixed order.
    pub fn visit(&self, mut f: impl FnMut(&str, Vec<usize>, &[f64])) {
        let mut layers = self.dense_layers().to_vec();
        layers.push(("relationship_out", &self.relationship_out));
        for (name, l) in layers {
            f(&format!("{name}.weight"), vec![l.outputs(), l.inputs()], l.weight());
            if name != "context.key_projection" {
                f(&format!("{name}.bias"), vec![l.outputs()], l.bias());
            }
        }
        f("context.alpha", vec![1], std::slice::from_ref(&self.context.alpha));
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        let layers: [(&str, &mut DenseLayer); 9] = [
            ("object_projection", &mut self.object_projection),
            ("subgraph_init_projection", &mut self.subgraph_init_projection),
            ("context.key_projection", &mut self.context.key_projection),
            ("context.query_projection", &mut self.context.query_projection),
            ("context.value_projection", &mut self.context.value_projection),
            ("attribute_head", &mut self.attribute_head),
            ("objectness_head", &mut self.objectness_head),
            ("relationship_hidden", &mut self.relationship_hidden),
            ("relationship_out", &mut self.relationship_out),
        ];
        for (name, l) in layers {
            f(&format!("{name}.weight"), l.weight_mut());
            if name != "context.key_projection" {
                f(&format!("{name}.bias"), l.bias_mut());
            }
        }
        f("context.alpha", std::slice::from_mut(&mut self.context.alpha));
    }

    /// Named ranges of the flat parameter vector.
    pub fn groups(&self) -> Vec<(String, Range<usize>)> {
        let mut out = Vec::new();
        let mut start = 0;
        self.visit(|name, _, v| {
            out.push((name.to_string(), start..start + v.len()));
            start += v.len();
        });
        out
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _, v| n += v.len());
        n
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        self.visit(|_, _, v| out.extend_from_slice(v));
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_parameters();
        if flat.len() != n {
            return Err(Error::shape("flat parameters", n, flat.len()));
        }
        let mut pos = 0;
        self.visit_mut(|_, v| {
            v.copy_from_slice(&flat[pos..pos + v.len()]);
            pos += v.len();
        });
        Ok(())
    }

    pub fn to_tensor_doc(&self) -> TensorDoc {
        let mut doc = TensorDoc::default();
        self.visit(|name, shape, v| doc.insert(name, shape, v.to_vec()));
        doc
    }

    pub fn from_tensor_doc(config: ModelConfig, mut doc: TensorDoc) -> Result<Self> {
        config.validate()?;
        let mut params = Self::zeros(config);
        let mut shapes = Vec::new();
        params.visit(|name, shape, _| shapes.push((name.to_string(), shape)));
        let mut flat = Vec::with_capacity(params.num_parameters());
        for (name, shape) in shapes {
            flat.extend(doc.take(&name, &shape)?);
        }
        if let Some(extra) = doc.0.keys().next() {
            return Err(Error::Data(format!("unexpected parameter {extra}")));
        }
        params.set_flat(&flat)?;
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            config: self.config,
            parameters: self.to_tensor_doc(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        Self::from_tensor_doc(file.config, file.parameters)
    }
}

/// On-disk model: the configuration plus the named parameter tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub config: ModelConfig,
    pub parameters: TensorDoc,
}
