use serde::{Deserialize, Serialize};

use super::model::{Gradients, Model};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().map(|t| vec![0.0; t.len()]).collect();
        Self {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(model: &mut Model, grads: &Gradients, state: &mut AdamState, params: &AdamParams) {
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - params.beta1.powi(t);
    let correction2 = 1.0 - params.beta2.powi(t);
    for (((theta, g), m), v) in model
        .tensors_mut()
        .zip(grads.tensors())
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for i in 0..theta.len() {
            m[i] = params.beta1 * m[i] + (1.0 - params.beta1) * g[i];
            v[i] = params.beta2 * v[i] + (1.0 - params.beta2) * g[i] * g[i];
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            theta[i] -= params.learning_rate * m_hat / (v_hat.sqrt() + params.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{Arch, Model, NetDims};

    fn tiny() -> Model {
        let dims = NetDims {
            rows: 1,
            cols: 2,
            classes: 2,
            powers: 1,
        };
        let mut m = Model::from_trunk(Arch::Custom, dims, vec![]).unwrap();
        m.initialize(3);
        m
    }

    fn filled(model: &Model, value: f64) -> Gradients {
        let mut g = model.zero_grad();
        for l in &mut g.layers {
            l.weights.fill(value);
            l.bias.fill(value);
        }
        g
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = tiny();
        let before = m.clone();
        let mut state = AdamState::new(&m);
        let g = m.zero_grad();
        for _ in 0..10 {
            adam_step(&mut m, &g, &mut state, &AdamParams::default());
        }
        assert_eq!(m, before);
    }

    #[test]
    fn constant_gradient_steps_approach_learning_rate() {
        // with g constant, m_hat = g and v_hat = g^2 exactly, so every step is
        // lr * g / (|g| + eps) -> lr * sign(g)
        let params = AdamParams::default();
        for g in [0.5, -2.0] {
            let mut m = tiny();
            let mut state = AdamState::new(&m);
            let grads = filled(&m, g);
            for _ in 0..200 {
                let before: Vec<f64> = m.tensors().flat_map(|t| t.to_vec()).collect();
                adam_step(&mut m, &grads, &mut state, &params);
                let after: Vec<f64> = m.tensors().flat_map(|t| t.to_vec()).collect();
                let step = before[0] - after[0];
                if state.step > 10 {
                    assert!(
                        (step - params.learning_rate * g.signum()).abs() < 1e-6 * params.learning_rate,
                        "{step}"
                    );
                }
            }
        }
    }

    #[test]
    fn identical_runs_match() {
        let run = || {
            let mut m = tiny();
            let mut state = AdamState::new(&m);
            for i in 0..20 {
                let g = filled(&m, (i as f64).sin());
                adam_step(&mut m, &g, &mut state, &AdamParams::default());
            }
            m
        };
        assert_eq!(run(), run());
    }
}
