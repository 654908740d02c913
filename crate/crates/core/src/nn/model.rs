use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, Layer, LayerCache, LayerGrad, LayerSpec};
use super::loss::{softmax_rows, LossWeights, Targets};
use crate::config::NetworkConfig;
use crate::dataset::NormStats;
use crate::error::{Error, Result};
use crate::solver::AssignmentCatalog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Cnn,
    Dnn,
    Custom,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Cnn => "cnn",
            Arch::Dnn => "dnn",
            Arch::Custom => "custom",
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(Arch::Cnn),
            "dnn" => Ok(Arch::Dnn),
            "custom" => Ok(Arch::Custom),
            other => Err(Error::Config(format!(
                "unknown architecture {other:?} (expected cnn or dnn)"
            ))),
        }
    }
}

/// Input and head sizes derived from a network configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    /// `N * K` input rows.
    pub rows: usize,
    /// `sum(U_n)` input columns.
    pub cols: usize,
    /// Width of the class head, the number of joint assignments.
    pub classes: usize,
    /// Width of the power head, `N * K`.
    pub powers: usize,
}

impl NetDims {
    pub fn from_config(cfg: &NetworkConfig) -> Self {
        Self {
            rows: cfg.n_bs() * cfg.n_subchannels,
            cols: cfg.n_users(),
            classes: AssignmentCatalog::new(cfg).len(),
            powers: cfg.n_bs() * cfg.n_subchannels,
        }
    }

    pub fn input_len(&self) -> usize {
        self.rows * self.cols
    }
}

/// One sample's prediction: softmax class probabilities and normalized powers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub class_probs: Vec<f64>,
    pub power_norm: Vec<f64>,
}

/// Predictions for a batch, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub class_probs: Array2<f64>,
    pub power_norm: Array2<f64>,
}

impl BatchOutput {
    pub fn len(&self) -> usize {
        self.class_probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> ModelOutput {
        ModelOutput {
            class_probs: self.class_probs.row(i).to_vec(),
            power_norm: self.power_norm.row(i).to_vec(),
        }
    }
}

/// A shared trunk feeding two linear heads: class logits (softmax applied on
/// output) and normalized powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Arch,
    pub dims: NetDims,
    pub trunk: Vec<Layer>,
    pub class_head: Layer,
    pub power_head: Layer,
    /// Input standardization the model was trained with.
    pub normalization: Option<NormStats>,
}

/// Parameter gradients, in the same layer order as [`Model::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|g| {
            [
                g.weights.as_slice().expect("standard layout"),
                g.bias.as_slice().expect("standard layout"),
            ]
        })
    }
}

/// Forward-pass record of one batch.
pub struct ForwardTrace {
    caches: Vec<LayerCache>,
    class_cache: LayerCache,
    power_cache: LayerCache,
    pub output: BatchOutput,
}

impl ForwardTrace {
    /// Sign pattern of every ReLU pre-activation, used to spot finite-difference
    /// steps that cross a kink.
    pub fn relu_pattern(&self, model: &Model) -> Vec<bool> {
        model
            .trunk
            .iter()
            .zip(&self.caches)
            .filter(|(l, _)| l.spec.activation() == Activation::Relu)
            .flat_map(|(_, c)| c.pre_activation().iter().map(|&z| z > 0.0))
            .collect()
    }
}

impl Model {
    /// Zero-initialized model from a trunk layout; heads are appended.
    pub fn from_trunk(arch: Arch, dims: NetDims, trunk: Vec<LayerSpec>) -> Result<Self> {
        let mut width = dims.input_len();
        for spec in &trunk {
            if spec.input_len() != width {
                return Err(Error::Shape(format!(
                    "layer {spec:?} expects {} inputs but receives {width}",
                    spec.input_len()
                )));
            }
            width = spec.output_len();
        }
        let head = |outputs| {
            Layer::zeros(LayerSpec::Dense {
                inputs: width,
                outputs,
                activation: Activation::Identity,
            })
        };
        Ok(Self {
            arch,
            dims,
            class_head: head(dims.classes),
            power_head: head(dims.powers),
            trunk: trunk.into_iter().map(Layer::zeros).collect(),
            normalization: None,
        })
    }

    /// All layers: trunk first, then class head, then power head.
    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.trunk.iter().chain([&self.class_head, &self.power_head])
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.trunk
            .iter_mut()
            .chain([&mut self.class_head, &mut self.power_head])
    }

    /// Parameter tensors in canonical order (each layer's weights, then bias).
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers().flat_map(|l| {
            [
                l.weights.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers_mut().flat_map(|l| {
            [
                l.weights.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
    }

    /// Number of trainable scalars.
    pub fn count_params(&self) -> usize {
        self.layers().map(|l| l.spec.param_count()).sum()
    }

    /// Re-draws every parameter from a seeded RNG.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in self.layers_mut() {
            layer.initialize(&mut rng);
        }
    }

    pub fn zero_grad(&self) -> Gradients {
        Gradients {
            layers: self.layers().map(Layer::zero_grad).collect(),
        }
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.dims.input_len() {
            return Err(Error::Shape(format!(
                "model expects {} input features, batch has {}",
                self.dims.input_len(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Batch inference; one input sample per row.
    pub fn forward(&self, x: &Array2<f64>) -> Result<BatchOutput> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.trunk {
            h = layer.forward(&h);
        }
        Ok(BatchOutput {
            class_probs: softmax_rows(&self.class_head.forward(&h)),
            power_norm: self.power_head.forward(&h),
        })
    }

    /// Single-sample inference.
    pub fn predict(&self, input: &[f64]) -> Result<ModelOutput> {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.forward(&x)?.row(0))
    }

    pub fn forward_trace(&self, x: &Array2<f64>) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.trunk.len());
        let mut h = x.clone();
        for layer in &self.trunk {
            let (cache, out) = layer.forward_cached(&h);
            caches.push(cache);
            h = out;
        }
        let (class_cache, logits) = self.class_head.forward_cached(&h);
        let (power_cache, power) = self.power_head.forward_cached(&h);
        Ok(ForwardTrace {
            caches,
            class_cache,
            power_cache,
            output: BatchOutput {
                class_probs: softmax_rows(&logits),
                power_norm: power,
            },
        })
    }

    /// Mean batch loss and its exact gradient with respect to every parameter.
    pub fn loss_and_gradients(
        &self,
        x: &Array2<f64>,
        targets: &Targets,
        weights: LossWeights,
    ) -> Result<(f64, Gradients)> {
        let trace = self.forward_trace(x)?;
        let loss = targets.mean_loss(&trace.output, weights)?;
        let (d_logits, d_power) = targets.output_gradients(&trace.output, weights);
        Ok((loss, self.backward(&trace, &d_logits, &d_power)))
    }

    /// Backpropagates head gradients through the recorded forward pass.
    pub fn backward(&self, trace: &ForwardTrace, d_logits: &Array2<f64>, d_power: &Array2<f64>) -> Gradients {
        let mut grads = self.zero_grad();
        let n = self.trunk.len();
        let mut dh = self
            .class_head
            .backward(&trace.class_cache, d_logits, &mut grads.layers[n]);
        dh += &self
            .power_head
            .backward(&trace.power_cache, d_power, &mut grads.layers[n + 1]);
        for (i, layer) in self.trunk.iter().enumerate().rev() {
            dh = layer.backward(&trace.caches[i], &dh, &mut grads.layers[i]);
        }
        grads
    }
}

/// Fully connected allocator: four ReLU dense layers (256, 256, 128, 128).
pub fn build_dnn(dims: NetDims) -> Model {
    let dense = |inputs, outputs| LayerSpec::Dense {
        inputs,
        outputs,
        activation: Activation::Relu,
    };
    let trunk = vec![
        dense(dims.input_len(), 256),
        dense(256, 256),
        dense(256, 128),
        dense(128, 128),
    ];
    Model::from_trunk(Arch::Dnn, dims, trunk).expect("consistent layer widths")
}

/// Convolutional allocator: four same-padding ReLU convolutions with
/// 16, 16, 32, 32 channels and a `kernel x kernel` window, then ReLU dense
/// layers of 256, 256 and 128 units.
pub fn build_cnn(dims: NetDims, kernel: usize) -> Model {
    let conv = |in_channels, out_channels| LayerSpec::Conv2d {
        in_channels,
        out_channels,
        height: dims.rows,
        width: dims.cols,
        kernel,
        activation: Activation::Relu,
    };
    let dense = |inputs, outputs| LayerSpec::Dense {
        inputs,
        outputs,
        activation: Activation::Relu,
    };
    let trunk = vec![
        conv(1, 16),
        conv(16, 16),
        conv(16, 32),
        conv(32, 32),
        dense(32 * dims.input_len(), 256),
        dense(256, 256),
        dense(256, 128),
    ];
    Model::from_trunk(Arch::Cnn, dims, trunk).expect("consistent layer widths")
}

/// Default convolution window.
pub const DEFAULT_KERNEL: usize = 3;

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{} ({} parameters)", self.arch.name(), self.count_params())?;
        for layer in &self.trunk {
            match layer.spec {
                LayerSpec::Dense {
                    outputs, activation, ..
                } => writeln!(f, "  dense {outputs} {activation:?}")?,
                LayerSpec::Conv2d {
                    out_channels,
                    height,
                    width,
                    kernel,
                    activation,
                    ..
                } => writeln!(f, "  conv2d {height}x{width}x{out_channels} k{kernel} {activation:?}")?,
            }
        }
        write!(
            f,
            "  heads: {}-way softmax, {}-way linear",
            self.dims.classes, self.dims.powers
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Axis};

    fn scenario_dims() -> NetDims {
        NetDims::from_config(&NetworkConfig::reference_scenario())
    }

    #[test]
    fn scenario_dims_are_six_by_six() {
        let d = scenario_dims();
        assert_eq!((d.rows, d.cols, d.classes, d.powers), (6, 6, 8, 6));
    }

    #[test]
    fn dnn_parameter_count() {
        let m = build_dnn(scenario_dims());
        assert_eq!(m.count_params(), 126_478);
        assert_eq!(m.tensors().map(<[f64]>::len).sum::<usize>(), 126_478);
        assert_eq!(m.class_head.bias.len(), 8);
        assert_eq!(m.power_head.bias.len(), 6);
    }

    #[test]
    fn cnn_parameter_count_matches_hand_formula() {
        for kernel in [1usize, 3, 5] {
            let m = build_cnn(scenario_dims(), kernel);
            let kk = kernel * kernel;
            let conv = (kk + 1) * 16 + (16 * kk + 1) * 16 + (16 * kk + 1) * 32 + (32 * kk + 1) * 32;
            let dense = (32 * 36 + 1) * 256 + (256 + 1) * 256 + (256 + 1) * 128;
            let heads = (128 + 1) * 8 + (128 + 1) * 6;
            assert_eq!(m.count_params(), conv + dense + heads, "kernel {kernel}");
        }
        assert_eq!(build_cnn(scenario_dims(), 3).count_params(), 412_030);
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let m = build_dnn(scenario_dims());
        let x = Array2::from_elem((3, 36), 0.7);
        let out = m.forward(&x).unwrap();
        assert!(out.class_probs.iter().all(|&p| (p - 0.125).abs() < 1e-15));
        assert!(out.power_norm.iter().all(|&p| p == 0.0));
        assert_eq!(out.class_probs.dim(), (3, 8));
        assert_eq!(out.power_norm.dim(), (3, 6));
    }

    #[test]
    fn forward_is_deterministic_and_normalized() {
        let mut m = build_cnn(scenario_dims(), 3);
        m.initialize(5);
        let x = Array2::from_shape_fn((4, 36), |(i, j)| ((i * 36 + j) as f64 * 0.37).sin());
        let a = m.forward(&x).unwrap();
        let b = m.forward(&x).unwrap();
        assert_eq!(a, b);
        for row in a.class_probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
        let single = m.predict(x.row(2).as_slice().unwrap()).unwrap();
        let batched = a.row(2);
        for (s, b) in single.class_probs.iter().zip(&batched.class_probs) {
            assert!((s - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_input_width() {
        let m = build_dnn(scenario_dims());
        assert!(matches!(m.forward(&Array2::zeros((1, 35))), Err(Error::Shape(_))));
    }

    #[test]
    fn one_parameter_gradient_matches_hand_formula() {
        // single input, no trunk, power head p = w*x + b with MSE to target t:
        // dL/dw = 2 (p - t) x, dL/db = 2 (p - t)
        let dims = NetDims {
            rows: 1,
            cols: 1,
            classes: 1,
            powers: 1,
        };
        let mut m = Model::from_trunk(Arch::Custom, dims, vec![]).unwrap();
        m.power_head.weights[[0, 0]] = 0.5;
        m.power_head.bias[0] = 0.25;
        let x = Array2::from_elem((1, 1), 2.0);
        let targets = Targets::new(vec![0], Array2::from_elem((1, 1), 3.0), 1).unwrap();
        let (loss, g) = m.loss_and_gradients(&x, &targets, LossWeights::default()).unwrap();
        let p = 0.5 * 2.0 + 0.25;
        assert!((loss - (p - 3.0f64).powi(2)).abs() < 1e-10);
        assert!((g.layers[1].weights[[0, 0]] - 2.0 * (p - 3.0) * 2.0).abs() < 1e-12);
        assert!((g.layers[1].bias[0] - 2.0 * (p - 3.0)).abs() < 1e-12);
        // a one-class softmax is constant, so its gradient vanishes
        assert_eq!(g.layers[0].weights[[0, 0]], 0.0);
    }

    #[test]
    fn zero_input_gives_zero_first_layer_weight_gradient() {
        let mut m = build_dnn(scenario_dims());
        m.initialize(1);
        let x = Array2::zeros((4, 36));
        let targets = Targets::new(vec![1, 2, 3, 4], Array2::from_elem((4, 6), 0.3), 8).unwrap();
        let (_, g) = m.loss_and_gradients(&x, &targets, LossWeights::default()).unwrap();
        assert!(g.layers[0].weights.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_trunk_output_width() {
        let dims = NetDims {
            rows: 2,
            cols: 3,
            classes: 4,
            powers: 2,
        };
        let m = Model::from_trunk(Arch::Custom, dims, vec![]).unwrap();
        assert_eq!(m.count_params(), 6 * 4 + 4 + 6 * 2 + 2);
        let _: Array1<f64> = m.class_head.bias.clone();
        let out = m.forward(&Array2::zeros((1, 6))).unwrap();
        assert_eq!(out.class_probs.sum_axis(Axis(1))[0], 1.0);
    }
}
