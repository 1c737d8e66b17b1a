/// Elementwise `max(0, x)`.
pub fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()
}

/// Gradient through ReLU given the pre-activation input.
pub fn relu_backward(pre: &[f64], grad_out: &[f64]) -> Vec<f64> {
    pre.iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

/// Max-subtracted softmax.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Vector-Jacobian product of softmax: `p ⊙ (g - ⟨p, g⟩)`.
pub fn softmax_backward(probs: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let inner = super::dot(probs, grad_out);
    probs
        .iter()
        .zip(grad_out)
        .map(|(&p, &g)| p * (g - inner))
        .collect()
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    // Branch on sign so exp never overflows.
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| sigmoid_scalar(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&[-1., 0., 2.]), vec![0., 0., 2.]);
        assert_eq!(relu(&[-3., -0.5]), vec![0., 0.]);
        assert_eq!(relu(&[0.5, 4.]), vec![0.5, 4.]);
    }

    #[test]
    fn softmax_examples() {
        for p in softmax(&[2.5, 2.5, 2.5]) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(softmax(&[-7.0]), vec![1.0]);
        let p = softmax(&[0.0, 3f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        let big = softmax(&[1000.0, 0.0]);
        assert!(big.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!(sigmoid_scalar(800.0) > 1.0 - 1e-15);
        let lo = sigmoid_scalar(-800.0);
        assert!((0.0..1e-300).contains(&lo));
    }

    proptest! {
        #[test]
        fn softmax_normalized_and_shift_invariant(
            v in prop::collection::vec(-30.0..30.0f64, 1..12),
            c in -50.0..50.0f64,
        ) {
            let p = softmax(&v);
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x > 0.0));
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            for (a, b) in p.iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn sigmoid_symmetry(x in -40.0..40.0f64) {
            prop_assert!((sigmoid_scalar(-x) - (1.0 - sigmoid_scalar(x))).abs() < 1e-12);
        }
    }
}
