use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected layer `y = W x + b` with `W` stored row-major `[out × in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    inputs: usize,
    outputs: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn from_parts(inputs: usize, outputs: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != inputs * outputs {
            return Err(Error::shape("dense weight", inputs * outputs, weight.len()));
        }
        if bias.len() != outputs {
            return Err(Error::shape("dense bias", outputs, bias.len()));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense layer parameters".into()));
        }
        Ok(Self {
            inputs,
            outputs,
            weight,
            bias,
        })
    }

    /// Gaussian weights with standard deviation `gain / sqrt(inputs)`, zero bias.
    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let std = gain / (inputs.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let weight = (0..inputs * outputs).map(|_| normal.sample(rng)).collect();
        Self {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weight[r * self.inputs..(r + 1) * self.inputs]
    }

    /// `W x + b`, shape-checked.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.inputs {
            return Err(Error::shape("dense input", self.inputs, input.len()));
        }
        Ok(self.apply(input))
    }

    /// Unchecked forward for internal hot paths (panics on mismatch in debug).
    pub(crate) fn apply(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.inputs);
        (0..self.outputs)
            .map(|r| super::dot(self.row(r), input) + self.bias[r])
            .collect()
    }

    /// Accumulates parameter gradients for upstream `grad_out` at `input` into
    /// `grads` and returns the gradient with respect to the input.
    pub(crate) fn backward(&self, input: &[f64], grad_out: &[f64], grads: &mut DenseLayer) -> Vec<f64> {
        debug_assert_eq!(grad_out.len(), self.outputs);
        let mut grad_in = vec![0.0; self.inputs];
        for (r, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads.bias[r] += g;
            let row = &mut grads.weight[r * self.inputs..(r + 1) * self.inputs];
            super::axpy(row, g, input);
            super::axpy(&mut grad_in, g, self.row(r));
        }
        grad_in
    }

    /// Backward pass that only accumulates parameter gradients.
    pub(crate) fn backward_params(&self, input: &[f64], grad_out: &[f64], grads: &mut DenseLayer) {
        for (r, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads.bias[r] += g;
            let row = &mut grads.weight[r * self.inputs..(r + 1) * self.inputs];
            super::axpy(row, g, input);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_bias_only() {
        let id = DenseLayer::from_parts(2, 2, vec![1., 0., 0., 1.], vec![0., 0.]).unwrap();
        assert_eq!(id.forward(&[1., 2.]).unwrap(), vec![1., 2.]);
        let b = DenseLayer::from_parts(4, 1, vec![0.; 4], vec![3.]).unwrap();
        assert_eq!(b.forward(&[9., -2., 0.5, 7.]).unwrap(), vec![3.]);
    }

    #[test]
    fn matches_naive_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut layer = DenseLayer::random(2, 3, 1.0, &mut rng);
        layer.bias_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        let x = [0.7, -1.3];
        let y = layer.forward(&x).unwrap();
        // triple-loop oracle over an explicit 2-D matrix
        let w: Vec<Vec<f64>> = (0..3).map(|r| (0..2).map(|c| layer.weight()[r * 2 + c]).collect()).collect();
        for r in 0..3 {
            let mut acc = layer.bias()[r];
            for c in 0..2 {
                acc += w[r][c] * x[c];
            }
            assert!((y[r] - acc).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors() {
        let l = DenseLayer::zeros(3, 2);
        assert!(matches!(l.forward(&[1.0]), Err(Error::Shape { .. })));
        assert!(DenseLayer::from_parts(2, 2, vec![0.; 3], vec![0.; 2]).is_err());
        assert!(DenseLayer::from_parts(1, 1, vec![f64::NAN], vec![0.]).is_err());
    }
}
