//! Central-difference gradient checking in double precision.

use serde::Serialize;

/// Something with named parameter tensors, a scalar loss, and analytic
/// gradients of that loss.
pub trait Differentiable {
    fn param_names(&self) -> Vec<String>;
    fn param_mut(&mut self, index: usize) -> &mut [f64];
    fn loss(&mut self) -> f64;
    /// Analytic gradients in `param_names` order.
    fn gradients(&mut self) -> Vec<Vec<f64>>;
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub entries_checked: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// `(f(θ+ε) − f(θ−ε)) / 2ε` for every entry of `params`; entries are restored
/// afterwards.
pub fn numeric_gradient(params: &mut [f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..params.len())
        .map(|i| {
            let orig = params[i];
            params[i] = orig + eps;
            let up = f(params);
            params[i] = orig - eps;
            let down = f(params);
            params[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Compares analytic and central-difference gradients over every parameter
/// entry and reports the worst relative error.
#[allow(clippy::needless_range_loop)]
pub fn grad_check<M: Differentiable + ?Sized>(module: &mut M, eps: f64) -> GradCheckReport {
    let analytic = module.gradients();
    let names = module.param_names();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        entries_checked: 0,
    };
    for (k, name) in names.iter().enumerate() {
        let len = module.param_mut(k).len();
        for i in 0..len {
            let orig = module.param_mut(k)[i];
            module.param_mut(k)[i] = orig + eps;
            let up = module.loss();
            module.param_mut(k)[i] = orig - eps;
            let down = module.loss();
            module.param_mut(k)[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = relative_error(analytic[k][i], numeric);
            report.entries_checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = i;
            }
        }
    }
    report
}
