//! Central finite-difference check of the analytic gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::layer::{Activation, LayerSpec};
use super::loss::{LossWeights, Targets};
use super::model::{Arch, Model, NetDims};
use crate::error::Result;

/// Denominator floor of the relative error, so that gradients at round-off
/// level do not blow the ratio up.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub params: usize,
    pub checked: usize,
    /// Coordinates whose `+h` / `-h` evaluations changed a ReLU sign pattern.
    /// The central difference is meaningless across a kink, so these are skipped.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares every analytic partial derivative of the mean batch loss against
/// `(L(theta + h) - L(theta - h)) / 2h`.
pub fn gradient_check(
    model: &Model,
    x: &Array2<f64>,
    targets: &Targets,
    weights: LossWeights,
    step: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_gradients(x, targets, weights)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().map(<[f64]>::to_vec).collect();
    let base_pattern = model.forward_trace(x)?.relu_pattern(model);

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        params: model.count_params(),
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
    };
    let eval = |m: &Model| -> Result<(f64, bool)> {
        let trace = m.forward_trace(x)?;
        let loss = targets.mean_loss(&trace.output, weights)?;
        Ok((loss, trace.relu_pattern(m) == base_pattern))
    };
    for (t, grad) in analytic.iter().enumerate() {
        for (i, &g) in grad.iter().enumerate() {
            let original = probe.tensors().nth(t).expect("tensor")[i];
            set(&mut probe, t, i, original + step);
            let (plus, same_plus) = eval(&probe)?;
            set(&mut probe, t, i, original - step);
            let (minus, same_minus) = eval(&probe)?;
            set(&mut probe, t, i, original);
            if !(same_plus && same_minus) {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            report.max_rel_error = report.max_rel_error.max(relative_error(g, numeric));
            report.checked += 1;
        }
    }
    Ok(report)
}

fn set(model: &mut Model, tensor: usize, index: usize, value: f64) {
    model.tensors_mut().nth(tensor).expect("tensor")[index] = value;
}

/// A random model with two convolutions and a dense layer (at most 1000
/// parameters), plus a random batch and targets to check it on.
pub fn random_check_case(seed: u64) -> (Model, Array2<f64>, Targets) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let dims = NetDims {
            rows: rng.random_range(2..=4),
            cols: rng.random_range(3..=4),
            classes: rng.random_range(2..=6),
            powers: rng.random_range(1..=4),
        };
        let c1 = rng.random_range(1..=3);
        let c2 = rng.random_range(2..=3);
        let hidden = rng.random_range(4..=10);
        let kernel2 = if rng.random_bool(0.5) { 1 } else { 3 };
        let conv = |in_channels, out_channels, kernel| LayerSpec::Conv2d {
            in_channels,
            out_channels,
            height: dims.rows,
            width: dims.cols,
            kernel,
            activation: Activation::Relu,
        };
        let trunk = vec![
            conv(1, c1, 3),
            conv(c1, c2, kernel2),
            LayerSpec::Dense {
                inputs: c2 * dims.input_len(),
                outputs: hidden,
                activation: Activation::Relu,
            },
        ];
        let mut model = Model::from_trunk(Arch::Custom, dims, trunk).expect("consistent widths");
        if model.count_params() > 1000 {
            continue;
        }
        model.initialize(rng.random());
        for layer in model.layers_mut() {
            layer.bias.mapv_inplace(|_| 0.1 * rng.sample::<f64, _>(StandardNormal));
        }
        let batch = 3;
        let x = Array2::from_shape_fn((batch, dims.input_len()), |_| rng.sample(StandardNormal));
        let classes = (0..batch).map(|_| rng.random_range(0..dims.classes)).collect();
        let power = Array2::from_shape_fn((batch, dims.powers), |_| rng.random::<f64>());
        let targets = Targets::new(classes, power, dims.classes).expect("valid targets");
        return (model, x, targets);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_models_pass() {
        for seed in 0..5 {
            let (model, x, targets) = random_check_case(seed);
            assert!(model.count_params() <= 1000);
            let report = gradient_check(&model, &x, &targets, LossWeights { ce: 1.0, mse: 0.7 }, 1e-5).unwrap();
            assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");
            assert!(report.checked + report.skipped_kinks == report.params);
            assert!(report.checked > report.params / 2);
        }
    }

    #[test]
    fn relative_error_definition() {
        assert!(relative_error(1.0, 1.001) > 1e-4);
        assert!(relative_error(-2.0, -2.0000001) < 1e-4);
        assert_eq!(relative_error(0.0, 1e-9), 1e-3);
    }
}
