use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

/// Shape and activation of one layer.
///
/// Feature vectors of convolutional layers are laid out channel-major
/// (`[c][row][col]`), so a flatten between a convolution and a dense layer
/// is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    /// Stride-1 convolution with zero "same" padding; the kernel must be odd.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn input_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv2d {
                in_channels,
                height,
                width,
                ..
            } => in_channels * height * width,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { outputs, .. } => outputs,
            LayerSpec::Conv2d {
                out_channels,
                height,
                width,
                ..
            } => out_channels * height * width,
        }
    }

    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv2d { activation, .. } => activation,
        }
    }

    /// `(rows, cols)` of the weight matrix.
    pub fn weight_shape(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { inputs, outputs, .. } => (inputs, outputs),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (in_channels * kernel * kernel, out_channels),
        }
    }

    pub fn param_count(&self) -> usize {
        let (r, c) = self.weight_shape();
        r * c + c
    }
}

/// Values kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// Layer input (dense) or its im2col expansion (conv).
    input: Array2<f64>,
    pre_activation: Array2<f64>,
}

impl LayerCache {
    pub fn pre_activation(&self) -> &Array2<f64> {
        &self.pre_activation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(spec: LayerSpec) -> Self {
        if let LayerSpec::Conv2d { kernel, .. } = spec {
            assert!(kernel % 2 == 1, "same padding needs an odd kernel (got {kernel})");
        }
        let (r, c) = spec.weight_shape();
        Self {
            spec,
            weights: Array2::zeros((r, c)),
            bias: Array1::zeros(c),
        }
    }

    /// He-normal weights for ReLU layers, Glorot-normal otherwise; zero bias.
    pub fn initialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (fan_in, fan_out) = self.weights.dim();
        let std = match self.spec.activation() {
            Activation::Relu => (2.0 / fan_in as f64).sqrt(),
            Activation::Identity => (2.0 / (fan_in + fan_out) as f64).sqrt(),
        };
        self.weights
            .mapv_inplace(|_| std * rng.sample::<f64, _>(StandardNormal));
        self.bias.fill(0.0);
    }

    pub fn zero_grad(&self) -> LayerGrad {
        LayerGrad {
            weights: Array2::zeros(self.weights.dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(x).1
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (LayerCache, Array2<f64>) {
        assert_eq!(x.ncols(), self.spec.input_len(), "layer input width");
        let (input, pre_activation) = match self.spec {
            LayerSpec::Dense { .. } => {
                let z = x.dot(&self.weights) + &self.bias;
                (x.clone(), z)
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                height,
                width,
                kernel,
                ..
            } => {
                let cols = im2col(x, in_channels, height, width, kernel);
                let z_cols = cols.dot(&self.weights) + &self.bias;
                (cols, pixels_to_chw(&z_cols, x.nrows(), out_channels, height * width))
            }
        };
        let out = match self.spec.activation() {
            Activation::Identity => pre_activation.clone(),
            Activation::Relu => pre_activation.mapv(|v| v.max(0.0)),
        };
        (LayerCache { input, pre_activation }, out)
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the layer input.
    pub fn backward(&self, cache: &LayerCache, d_out: &Array2<f64>, grad: &mut LayerGrad) -> Array2<f64> {
        let mut dz = d_out.clone();
        if self.spec.activation() == Activation::Relu {
            dz.zip_mut_with(&cache.pre_activation, |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        match self.spec {
            LayerSpec::Dense { .. } => {
                grad.weights += &cache.input.t().dot(&dz);
                grad.bias += &dz.sum_axis(Axis(0));
                dz.dot(&self.weights.t())
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                height,
                width,
                kernel,
                ..
            } => {
                let batch = dz.nrows();
                let dz_cols = chw_to_pixels(&dz, batch, out_channels, height * width);
                grad.weights += &cache.input.t().dot(&dz_cols);
                grad.bias += &dz_cols.sum_axis(Axis(0));
                let d_cols = dz_cols.dot(&self.weights.t());
                col2im(&d_cols, batch, in_channels, height, width, kernel)
            }
        }
    }
}

/// Expands a `(batch, C*H*W)` input into `(batch*H*W, C*k*k)` patches with
/// zero padding of `k/2` on every side.
fn im2col(x: &Array2<f64>, channels: usize, height: usize, width: usize, kernel: usize) -> Array2<f64> {
    let batch = x.nrows();
    let pad = (kernel / 2) as isize;
    let patch = channels * kernel * kernel;
    let mut cols = Array2::zeros((batch * height * width, patch));
    for b in 0..batch {
        let row = x.row(b);
        for i in 0..height {
            for j in 0..width {
                let mut dst = cols.row_mut((b * height + i) * width + j);
                for c in 0..channels {
                    for di in 0..kernel {
                        let si = i as isize + di as isize - pad;
                        if si < 0 || si >= height as isize {
                            continue;
                        }
                        for dj in 0..kernel {
                            let sj = j as isize + dj as isize - pad;
                            if sj < 0 || sj >= width as isize {
                                continue;
                            }
                            dst[(c * kernel + di) * kernel + dj] =
                                row[(c * height + si as usize) * width + sj as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
fn col2im(
    d_cols: &Array2<f64>,
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
) -> Array2<f64> {
    let pad = (kernel / 2) as isize;
    let mut dx = Array2::zeros((batch, channels * height * width));
    for b in 0..batch {
        let mut dst = dx.row_mut(b);
        for i in 0..height {
            for j in 0..width {
                let src = d_cols.row((b * height + i) * width + j);
                for c in 0..channels {
                    for di in 0..kernel {
                        let si = i as isize + di as isize - pad;
                        if si < 0 || si >= height as isize {
                            continue;
                        }
                        for dj in 0..kernel {
                            let sj = j as isize + dj as isize - pad;
                            if sj < 0 || sj >= width as isize {
                                continue;
                            }
                            dst[(c * height + si as usize) * width + sj as usize] +=
                                src[(c * kernel + di) * kernel + dj];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// `(batch*P, C)` pixel-major rows to `(batch, C*P)` channel-major features.
fn pixels_to_chw(z: &Array2<f64>, batch: usize, channels: usize, pixels: usize) -> Array2<f64> {
    let mut out = Array2::zeros((batch, channels * pixels));
    for b in 0..batch {
        for p in 0..pixels {
            let src = z.row(b * pixels + p);
            for c in 0..channels {
                out[[b, c * pixels + p]] = src[c];
            }
        }
    }
    out
}

fn chw_to_pixels(d: &Array2<f64>, batch: usize, channels: usize, pixels: usize) -> Array2<f64> {
    let mut out = Array2::zeros((batch * pixels, channels));
    for b in 0..batch {
        let src = d.row(b);
        for p in 0..pixels {
            for c in 0..channels {
                out[[b * pixels + p, c]] = src[c * pixels + p];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution used as an oracle for the im2col path.
    fn naive_conv(layer: &Layer, x: &Array2<f64>) -> Array2<f64> {
        let LayerSpec::Conv2d {
            in_channels,
            out_channels,
            height,
            width,
            kernel,
            ..
        } = layer.spec
        else {
            unreachable!()
        };
        let pad = (kernel / 2) as isize;
        let mut out = Array2::zeros((x.nrows(), out_channels * height * width));
        for b in 0..x.nrows() {
            for co in 0..out_channels {
                for i in 0..height {
                    for j in 0..width {
                        let mut acc = layer.bias[co];
                        for ci in 0..in_channels {
                            for di in 0..kernel {
                                for dj in 0..kernel {
                                    let si = i as isize + di as isize - pad;
                                    let sj = j as isize + dj as isize - pad;
                                    if si >= 0 && si < height as isize && sj >= 0 && sj < width as isize {
                                        let v = x[[b, (ci * height + si as usize) * width + sj as usize]];
                                        acc += v * layer.weights[[(ci * kernel + di) * kernel + dj, co]];
                                    }
                                }
                            }
                        }
                        out[[b, (co * height + i) * width + j]] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kernel in [1, 3, 5] {
            let spec = LayerSpec::Conv2d {
                in_channels: 2,
                out_channels: 3,
                height: 4,
                width: 5,
                kernel,
                activation: Activation::Identity,
            };
            let mut layer = Layer::zeros(spec);
            layer.initialize(&mut rng);
            layer.bias.mapv_inplace(|_| rng.random::<f64>());
            let x = Array2::from_shape_fn((3, 40), |_| rng.random::<f64>() - 0.5);
            let fast = layer.forward(&x);
            let slow = naive_conv(&layer, &x);
            assert!(fast.iter().zip(slow.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
            assert_eq!(fast.ncols(), 3 * 4 * 5);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((2, 3 * 4 * 4), |_| rng.random::<f64>());
        let cols = im2col(&x, 3, 4, 4, 3);
        let y = Array2::from_shape_fn(cols.dim(), |_| rng.random::<f64>());
        let lhs = (&cols * &y).sum();
        let rhs = (&x * &col2im(&y, 2, 3, 4, 4, 3)).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs());
    }

    #[test]
    fn dense_param_count() {
        let spec = LayerSpec::Dense {
            inputs: 36,
            outputs: 8,
            activation: Activation::Identity,
        };
        assert_eq!(spec.param_count(), 296);
    }

    #[test]
    fn same_padding_keeps_spatial_shape() {
        let spec = LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 16,
            height: 6,
            width: 6,
            kernel: 3,
            activation: Activation::Relu,
        };
        assert_eq!(spec.output_len(), 16 * 6 * 6);
        let layer = Layer::zeros(spec);
        assert_eq!(layer.forward(&Array2::zeros((2, 36))).dim(), (2, 576));
    }
}
