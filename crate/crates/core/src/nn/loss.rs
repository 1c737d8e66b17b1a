/// Additive clamp inside logarithms so saturated predictions stay finite.
pub const LOG_EPS: f64 = 1e-12;

/// `-ln(p[target] + ε)`.
pub fn cross_entropy(probs: &[f64], target: usize) -> f64 {
    -(probs[target] + LOG_EPS).ln()
}

/// Gradient of [`cross_entropy`] with respect to `probs`.
pub fn cross_entropy_grad(probs: &[f64], target: usize) -> Vec<f64> {
    let mut g = vec![0.0; probs.len()];
    g[target] = -1.0 / (probs[target] + LOG_EPS);
    g
}

/// Mean over components of `-[t ln(p + ε) + (1 - t) ln(1 - p + ε)]`.
pub fn binary_cross_entropy(probs: &[f64], targets: &[f64]) -> f64 {
    debug_assert_eq!(probs.len(), targets.len());
    if probs.is_empty() {
        return 0.0;
    }
    let total: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| -(t * (p + LOG_EPS).ln() + (1.0 - t) * (1.0 - p + LOG_EPS).ln()))
        .sum();
    total / probs.len() as f64
}

/// Gradient of [`binary_cross_entropy`] with respect to `probs`.
pub fn binary_cross_entropy_grad(probs: &[f64], targets: &[f64]) -> Vec<f64> {
    let n = probs.len() as f64;
    probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| (-t / (p + LOG_EPS) + (1.0 - t) / (1.0 - p + LOG_EPS)) / n)
        .collect()
}
