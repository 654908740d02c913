use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{BatchOutput, ModelOutput};
use crate::error::{Error, Result};

/// Clamp inside the crossentropy logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Relative weights of the crossentropy and squared-error terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub ce: f64,
    pub mse: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { ce: 1.0, mse: 1.0 }
    }
}

/// Training target of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub class: usize,
    pub power_norm: Vec<f64>,
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// `w_ce * -ln(p_class + 1e-12) + w_mse * sum_i (t_i - p_i)^2` for one sample.
pub fn loss_total(output: &ModelOutput, target: &Target, weights: LossWeights) -> Result<f64> {
    if target.class >= output.class_probs.len() {
        return Err(Error::Contract(format!(
            "target class {} outside a {}-way head",
            target.class,
            output.class_probs.len()
        )));
    }
    if target.power_norm.len() != output.power_norm.len() {
        return Err(Error::Contract(format!(
            "power target has {} entries, head has {}",
            target.power_norm.len(),
            output.power_norm.len()
        )));
    }
    let ce = -(output.class_probs[target.class] + LOG_CLAMP).ln();
    let mse: f64 = target
        .power_norm
        .iter()
        .zip(&output.power_norm)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    Ok(weights.ce * ce + weights.mse * mse)
}

/// Targets for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub classes: Vec<usize>,
    pub power_norm: Array2<f64>,
    pub n_classes: usize,
}

impl Targets {
    pub fn new(classes: Vec<usize>, power_norm: Array2<f64>, n_classes: usize) -> Result<Self> {
        if classes.len() != power_norm.nrows() {
            return Err(Error::Contract(format!(
                "{} class targets but {} power targets",
                classes.len(),
                power_norm.nrows()
            )));
        }
        if let Some(c) = classes.iter().find(|&&c| c >= n_classes) {
            return Err(Error::Contract(format!(
                "target class {c} outside a {n_classes}-way head"
            )));
        }
        Ok(Self {
            classes,
            power_norm,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn get(&self, i: usize) -> Target {
        Target {
            class: self.classes[i],
            power_norm: self.power_norm.row(i).to_vec(),
        }
    }

    /// Rows `indices` in order.
    pub fn select(&self, indices: &[usize]) -> Targets {
        Targets {
            classes: indices.iter().map(|&i| self.classes[i]).collect(),
            power_norm: self.power_norm.select(ndarray::Axis(0), indices),
            n_classes: self.n_classes,
        }
    }

    /// Mean of [`loss_total`] over the batch.
    pub fn mean_loss(&self, output: &BatchOutput, weights: LossWeights) -> Result<f64> {
        if output.len() != self.len() || output.class_probs.ncols() != self.n_classes {
            return Err(Error::Contract(format!(
                "batch of {} outputs ({} classes) against {} targets ({} classes)",
                output.len(),
                output.class_probs.ncols(),
                self.len(),
                self.n_classes
            )));
        }
        let mut total = 0.0;
        for i in 0..self.len() {
            total += loss_total(&output.row(i), &self.get(i), weights)?;
        }
        Ok(total / self.len() as f64)
    }

    /// Gradients of the mean loss with respect to the class logits and the
    /// power outputs.
    pub fn output_gradients(&self, output: &BatchOutput, weights: LossWeights) -> (Array2<f64>, Array2<f64>) {
        let b = self.len() as f64;
        let mut d_logits = output.class_probs.clone();
        for (i, mut row) in d_logits.rows_mut().into_iter().enumerate() {
            let c = self.classes[i];
            let pc = output.class_probs[[i, c]];
            // d/dz_j of -ln(s_c + delta) = s_c / (s_c + delta) * (s_j - [j == c])
            let scale = weights.ce * pc / (pc + LOG_CLAMP) / b;
            row[c] -= 1.0;
            row.mapv_inplace(|v| v * scale);
        }
        let d_power = (&output.power_norm - &self.power_norm) * (2.0 * weights.mse / b);
        (d_logits, d_power)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn output(probs: Vec<f64>, power: Vec<f64>) -> ModelOutput {
        ModelOutput {
            class_probs: probs,
            power_norm: power,
        }
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let mut probs = vec![0.0; 8];
        probs[3] = 1.0;
        let out = output(probs, vec![0.1, 0.2, 0.0, 0.0, 1.0, 0.5]);
        let target = Target {
            class: 3,
            power_norm: vec![0.1, 0.2, 0.0, 0.0, 1.0, 0.5],
        };
        let loss = loss_total(&out, &target, LossWeights::default()).unwrap();
        assert!(loss.abs() < 1e-11, "{loss}");
    }

    #[test]
    fn uniform_probabilities_cost_ln8() {
        let out = output(vec![0.125; 8], vec![0.0; 6]);
        let target = Target {
            class: 0,
            power_norm: vec![0.0; 6],
        };
        let loss = loss_total(&out, &target, LossWeights::default()).unwrap();
        assert!((loss - 8f64.ln()).abs() < 1e-10);
        assert!((loss - 2.0794).abs() < 1e-4);
    }

    #[test]
    fn squared_error_term() {
        let mut probs = vec![0.0; 8];
        probs[0] = 1.0;
        let out = output(probs, vec![0.0; 6]);
        let target = Target {
            class: 0,
            power_norm: vec![1.0; 6],
        };
        let loss = loss_total(&out, &target, LossWeights::default()).unwrap();
        assert!((loss - 6.0).abs() < 1e-11);
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let out = output(vec![0.5, 0.5], vec![0.0; 2]);
        let bad_class = Target {
            class: 2,
            power_norm: vec![0.0; 2],
        };
        assert!(matches!(
            loss_total(&out, &bad_class, LossWeights::default()),
            Err(Error::Contract(_))
        ));
        let bad_power = Target {
            class: 0,
            power_norm: vec![0.0; 3],
        };
        assert!(matches!(
            loss_total(&out, &bad_power, LossWeights::default()),
            Err(Error::Contract(_))
        ));
        assert!(Targets::new(vec![0, 1], Array2::zeros((1, 2)), 2).is_err());
    }

    #[test]
    fn softmax_handles_large_logits() {
        let logits = Array2::from_shape_vec((1, 3), vec![1000.0, 1000.0, -1000.0]).unwrap();
        let p = softmax_rows(&logits);
        assert!((p[[0, 0]] - 0.5).abs() < 1e-15);
        assert_eq!(p[[0, 2]], 0.0);
    }
}
