//! Small differentiable numeric core with hand-derived gradients.

mod activation;
mod adam;
mod dense;
mod gradcheck;
mod loss;
mod tensors;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_scalar, softmax, softmax_backward};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::DenseLayer;
pub use gradcheck::{central_difference, finite_difference_check, GradCheckReport};
pub use loss::{
    binary_cross_entropy, binary_cross_entropy_grad, cross_entropy, cross_entropy_grad, LOG_EPS,
};
pub use tensors::{NamedTensor, TensorDoc};

/// Dot product of equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `acc += scale * v`
pub fn axpy(acc: &mut [f64], scale: f64, v: &[f64]) {
    debug_assert_eq!(acc.len(), v.len());
    for (a, x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}
