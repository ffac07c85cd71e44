use rand::SeedableRng;

use super::{Layer, Mode, NnError, Tensor};
use crate::rng::StreamRng;

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central-difference gradient of a scalar function at `x`.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let plus = f(&probe);
            probe[i] = x[i] - eps;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_input_error: f64,
    pub max_param_error: f64,
    /// Number of scalar gradients compared.
    pub checked: usize,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.max_input_error.max(self.max_param_error)
    }
}

/// Compares a layer's backward pass against central differences of
/// `L = Σ out ⊙ P` for a fixed random projection `P` drawn from `seed`.
/// Every input element and every parameter element is probed.
pub fn grad_check(layer: &mut dyn Layer, input: &Tensor, mode: Mode, eps: f64, seed: u64) -> Result<GradCheckReport, NnError> {
    check(layer, input, mode, eps, seed, 1.0)
}

/// As [`grad_check`], but with the analytic gradient scaled by 1.01 before
/// comparison; a sound harness must report an error above 1e-3.
pub fn grad_check_faulty(layer: &mut dyn Layer, input: &Tensor, mode: Mode, eps: f64, seed: u64) -> Result<GradCheckReport, NnError> {
    check(layer, input, mode, eps, seed, 1.01)
}

fn check(layer: &mut dyn Layer, input: &Tensor, mode: Mode, eps: f64, seed: u64, fault: f64) -> Result<GradCheckReport, NnError> {
    let out = layer.forward(input, mode)?;
    let mut rng = StreamRng::seed_from_u64(seed);
    let projection = Tensor::uniform(out.shape(), -1.0, 1.0, &mut rng);
    layer.zero_grad();
    let grad_input = layer.backward(&projection)?;
    let param_grads: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.data().to_vec()).collect();

    // Differencing the outputs before projecting keeps the roundoff relative
    // to the output magnitudes rather than to the summed loss.
    let central = |plus: Tensor, minus: Tensor| -> f64 {
        plus.data().iter().zip(minus.data()).zip(projection.data()).map(|((a, b), p)| (a - b) * p).sum::<f64>() / (2.0 * eps)
    };
    let mut report = GradCheckReport::default();

    let mut probe = input.clone();
    for i in 0..input.len() {
        let orig = input.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = layer.forward(&probe, mode)?;
        probe.data_mut()[i] = orig - eps;
        let minus = layer.forward(&probe, mode)?;
        probe.data_mut()[i] = orig;
        let numeric = central(plus, minus);
        report.max_input_error = report.max_input_error.max(relative_error(fault * grad_input.data()[i], numeric));
        report.checked += 1;
    }

    for (pi, grads) in param_grads.iter().enumerate() {
        for (j, &analytic) in grads.iter().enumerate() {
            let orig = layer.params()[pi].value.data()[j];
            layer.params_mut()[pi].value.data_mut()[j] = orig + eps;
            let plus = layer.forward(input, mode)?;
            layer.params_mut()[pi].value.data_mut()[j] = orig - eps;
            let minus = layer.forward(input, mode)?;
            layer.params_mut()[pi].value.data_mut()[j] = orig;
            let numeric = central(plus, minus);
            report.max_param_error = report.max_param_error.max(relative_error(fault * analytic, numeric));
            report.checked += 1;
        }
    }
    Ok(report)
}
