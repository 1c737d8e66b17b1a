use crate::error::Result;

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
    pub worst_index: Option<usize>,
}

impl GradCheckReport {
    pub fn relative_error(&self, i: usize) -> f64 {
        relative_error(self.analytic[i], self.numeric[i])
    }

    /// Maximum relative error over a sub-range of the parameter vector.
    pub fn max_over(&self, range: std::ops::Range<usize>) -> f64 {
        range.map(|i| self.relative_error(i)).fold(0.0, f64::max)
    }
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// `(f(θ + ε e_i) - f(θ - ε e_i)) / 2ε` for one coordinate.
pub fn central_difference<F>(loss: &mut F, params: &mut [f64], i: usize, epsilon: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let orig = params[i];
    params[i] = orig + epsilon;
    let plus = loss(params);
    params[i] = orig - epsilon;
    let minus = loss(params);
    params[i] = orig;
    Ok((plus? - minus?) / (2.0 * epsilon))
}

/// Compares `analytic` (the gradient of `loss` at `params`) against central
/// differences in every coordinate.
pub fn finite_difference_check<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    epsilon: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    assert_eq!(params.len(), analytic.len(), "gradient length must match parameters");
    let mut work = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        numeric.push(central_difference(&mut loss, &mut work, i, epsilon)?);
    }
    let mut max_relative_error = 0.0;
    let mut worst_index = None;
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = relative_error(a, n);
        if e > max_relative_error {
            max_relative_error = e;
            worst_index = Some(i);
        }
    }
    Ok(GradCheckReport {
        analytic: analytic.to_vec(),
        numeric,
        max_relative_error,
        worst_index,
    })
}
