use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamParams, AdamState};
use super::io_map::training_tensors;
use super::loss::{LossWeights, Targets};
use super::model::Model;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamParams,
    /// Seeds the validation split and the per-epoch shuffles.
    pub seed: u64,
    pub loss_weights: LossWeights,
    /// Fraction of samples held out for validation, in `[0, 1)`.
    pub validation_fraction: f64,
    /// Finish with the parameters of the epoch with the lowest validation
    /// loss instead of the last epoch's. Needs a validation split.
    #[serde(default)]
    pub restore_best: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            adam: AdamParams::default(),
            seed: 0,
            loss_weights: LossWeights::default(),
            validation_fraction: 0.1,
            restore_best: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        let ok = self.epochs > 0
            && self.batch_size > 0
            && a.learning_rate > 0.0
            && (0.0..1.0).contains(&a.beta1)
            && (0.0..1.0).contains(&a.beta2)
            && a.epsilon > 0.0
            && self.loss_weights.ce >= 0.0
            && self.loss_weights.mse >= 0.0
            && (0.0..1.0).contains(&self.validation_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

/// Loss record of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch's mini-batches, measured before
    /// each batch's update.
    pub train_loss: f64,
    /// Mean per-sample loss on the held-out split after the epoch, if any.
    pub validation_loss: Option<f64>,
}

/// Trains `model` on a labeled dataset and records the per-epoch losses. The
/// dataset's normalization statistics are stored in the model.
pub fn train(model: &mut Model, data: &Dataset, tc: &TrainingConfig) -> Result<Vec<EpochStats>> {
    if data.is_empty() {
        return Err(Error::Contract("cannot train on an empty dataset".into()));
    }
    let (inputs, targets) = training_tensors(data)?;
    model.normalization = data.metadata.normalization;
    train_on(model, &inputs, &targets, tc)
}

/// Mini-batch Adam on preprocessed inputs, one sample per row.
pub fn train_on(
    model: &mut Model,
    inputs: &Array2<f64>,
    targets: &Targets,
    tc: &TrainingConfig,
) -> Result<Vec<EpochStats>> {
    tc.validate()?;
    let n = inputs.nrows();
    if n == 0 || targets.len() != n {
        return Err(Error::Contract(format!("{n} inputs against {} targets", targets.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let held_out = ((n as f64 * tc.validation_fraction) as usize).min(n - 1);
    let (train_idx, val_idx) = order.split_at(n - held_out);
    let mut train_idx = train_idx.to_vec();
    let validation = (!val_idx.is_empty()).then(|| (inputs.select(Axis(0), val_idx), targets.select(val_idx)));

    let mut state = AdamState::new(model);
    let mut history = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, Model)> = None;
    for epoch in 1..=tc.epochs {
        train_idx.shuffle(&mut rng);
        let mut weighted = 0.0;
        for batch in train_idx.chunks(tc.batch_size) {
            let x = inputs.select(Axis(0), batch);
            let t = targets.select(batch);
            let (loss, grads) = model.loss_and_gradients(&x, &t, tc.loss_weights)?;
            adam_step(model, &grads, &mut state, &tc.adam);
            weighted += loss * batch.len() as f64;
        }
        let validation_loss = match &validation {
            Some((x, t)) => Some(t.mean_loss(&model.forward(x)?, tc.loss_weights)?),
            None => None,
        };
        if let (true, Some(v)) = (tc.restore_best, validation_loss) {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, model.clone()));
            }
        }
        history.push(EpochStats {
            epoch,
            train_loss: weighted / train_idx.len() as f64,
            validation_loss,
        });
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NetworkConfig;
    use crate::dataset::{generate_dataset, OracleParams};
    use crate::nn::model::{build_dnn, NetDims};

    fn data(count: usize) -> Dataset {
        generate_dataset(
            &NetworkConfig::reference_scenario(),
            count,
            17,
            OracleParams { grid_levels: 3 },
        )
        .unwrap()
    }

    fn quick(epochs: usize) -> TrainingConfig {
        TrainingConfig {
            epochs,
            batch_size: 4,
            seed: 2,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn one_epoch_records_one_entry() {
        let ds = data(10);
        let mut m = build_dnn(NetDims::from_config(ds.config()));
        m.initialize(1);
        let history = train(&mut m, &ds, &quick(1)).unwrap();
        assert_eq!(history.len(), 1);
        assert_eq!(history[0].epoch, 1);
        assert!(history[0].train_loss.is_finite());
        assert!(history[0].validation_loss.is_some());
        assert_eq!(m.normalization, ds.metadata.normalization);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let ds = data(12);
        let run = || {
            let mut m = build_dnn(NetDims::from_config(ds.config()));
            m.initialize(1);
            let h = train(&mut m, &ds, &quick(2)).unwrap();
            (m, h)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let ds = data(0);
        let mut m = build_dnn(NetDims::from_config(ds.config()));
        assert!(matches!(train(&mut m, &ds, &quick(1)), Err(Error::Contract(_))));
    }

    #[test]
    fn loss_drops_on_a_small_set() {
        let ds = data(32);
        let mut m = build_dnn(NetDims::from_config(ds.config()));
        m.initialize(4);
        let tc = TrainingConfig {
            validation_fraction: 0.0,
            ..quick(60)
        };
        let history = train(&mut m, &ds, &tc).unwrap();
        assert!(history.last().unwrap().train_loss < 0.5 * history[0].train_loss);
        assert_eq!(history[0].validation_loss, None);
    }

    #[test]
    fn restore_best_keeps_the_lowest_validation_epoch() {
        let ds = data(40);
        let (inputs, targets) = training_tensors(&ds).unwrap();
        let tc = TrainingConfig {
            validation_fraction: 0.25,
            ..quick(25)
        };
        let mut m = build_dnn(NetDims::from_config(ds.config()));
        m.initialize(6);
        let history = train_on(&mut m, &inputs, &targets, &tc).unwrap();
        let best = history
            .iter()
            .filter_map(|h| h.validation_loss)
            .fold(f64::INFINITY, f64::min);
        // recompute on the same split
        let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
        let mut order: Vec<usize> = (0..inputs.nrows()).collect();
        order.shuffle(&mut rng);
        let val = &order[inputs.nrows() - 10..];
        let v = targets
            .select(val)
            .mean_loss(&m.forward(&inputs.select(Axis(0), val)).unwrap(), tc.loss_weights)
            .unwrap();
        assert_eq!(v, best);
    }

    #[test]
    fn bad_config_is_rejected() {
        let tc = TrainingConfig {
            batch_size: 0,
            ..TrainingConfig::default()
        };
        assert!(tc.validate().is_err());
    }
}
