//! Minimal dense compute engine for the two structure-output regressors:
//! forward/backward for the five layer kinds, an l2 regression loss, SGD
//! with momentum and weight decay, and finite-difference verification.

mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod sgd;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use gradcheck::{gradcheck, GradCheckReport, LayerCheck};
pub use loss::l2_loss;
pub use sgd::{sgd_step, SgdConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// One layer of a regression net. Convolutions and pooling use square
/// kernels; padding is explicit so an architecture is a pure configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    /// Across-channel response normalization:
    /// `out = in / (1 + (alpha/span) * sum_{c in window} in_c^2)^beta`.
    ContrastNorm {
        span: usize,
        alpha: f64,
        beta: f64,
    },
    FullyConnected {
        units: usize,
    },
}

impl LayerSpec {
    /// The conventional constants; the window spans 5 channels.
    pub fn contrast_norm_default() -> Self {
        LayerSpec::ContrastNorm {
            span: 5,
            alpha: 1e-4,
            beta: 0.75,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::ContrastNorm { .. } => "contrast_norm",
            LayerSpec::FullyConnected { .. } => "fully_connected",
        }
    }

    /// Output dims for a given input, or why the layer cannot accept it.
    /// Spatial size follows `floor((in + 2*pad - kernel) / stride) + 1`.
    pub fn output_dims(&self, layer: usize, input: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let (c, h, w) = input;
        let err = |detail: String| Error::LayerMismatch {
            layer,
            kind: self.kind_name(),
            detail,
        };
        match *self {
            LayerSpec::Conv {
                filters,
                kernel,
                stride,
                pad,
            } => {
                if filters == 0 || kernel == 0 {
                    return Err(err("filters and kernel must be >= 1".into()));
                }
                if stride == 0 {
                    return Err(err("stride must be >= 1".into()));
                }
                if kernel > h + 2 * pad || kernel > w + 2 * pad {
                    return Err(err(format!(
                        "kernel {kernel} exceeds padded input {}x{}",
                        h + 2 * pad,
                        w + 2 * pad
                    )));
                }
                let oh = (h + 2 * pad - kernel) / stride + 1;
                let ow = (w + 2 * pad - kernel) / stride + 1;
                Ok((filters, oh, ow))
            }
            LayerSpec::Relu => Ok((c, h, w)),
            LayerSpec::MaxPool { window, stride } => {
                if window == 0 || stride == 0 {
                    return Err(err("window and stride must be >= 1".into()));
                }
                if window > h || window > w {
                    return Err(err(format!("window {window} exceeds input {h}x{w}")));
                }
                Ok((c, (h - window) / stride + 1, (w - window) / stride + 1))
            }
            LayerSpec::ContrastNorm { span, alpha, beta } => {
                if span == 0 {
                    return Err(err("span must be >= 1".into()));
                }
                if !alpha.is_finite() || !beta.is_finite() || beta <= 0.0 {
                    return Err(err("alpha and beta must be finite, beta > 0".into()));
                }
                Ok((c, h, w))
            }
            LayerSpec::FullyConnected { units } => {
                if units == 0 {
                    return Err(err("units must be >= 1".into()));
                }
                if c * h * w == 0 {
                    return Err(err("empty input".into()));
                }
                Ok((units, 1, 1))
            }
        }
    }

    /// (weight count, bias count) given the layer's input dims.
    pub fn param_counts(&self, input: (usize, usize, usize)) -> (usize, usize) {
        let (c, h, w) = input;
        match *self {
            LayerSpec::Conv {
                filters, kernel, ..
            } => (filters * c * kernel * kernel, filters),
            LayerSpec::FullyConnected { units } => (units * c * h * w, units),
            _ => (0, 0),
        }
    }
}

/// An ordered layer chain plus its input dims. Validates and propagates
/// shapes without allocating any weights, so paper-size architectures can
/// be audited cheaply.
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

impl NetConfig {
    pub fn new(input: (usize, usize, usize), layers: Vec<LayerSpec>) -> Self {
        NetConfig { input, layers }
    }

    /// Output dims of every layer in order.
    pub fn layer_dims(&self) -> Result<Vec<(usize, usize, usize)>> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("net has no layers".into()));
        }
        let mut dims = Vec::with_capacity(self.layers.len());
        let mut cur = self.input;
        for (i, spec) in self.layers.iter().enumerate() {
            cur = spec.output_dims(i, cur)?;
            dims.push(cur);
        }
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.layer_dims()?;
        match self.layers.last() {
            Some(LayerSpec::FullyConnected { .. }) => {}
            _ => {
                return Err(Error::InvalidConfig(
                    "final layer must be fully_connected".into(),
                ))
            }
        }
        let _ = dims;
        Ok(())
    }

    /// Width of the regression head.
    pub fn output_len(&self) -> Result<usize> {
        let dims = self.layer_dims()?;
        let (c, h, w) = *dims.last().unwrap();
        Ok(c * h * w)
    }

    pub fn has_maxpool(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::MaxPool { .. }))
    }
}

/// Weights and biases of one layer. Param-free layers hold empty vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerParams {
    fn zeros(w: usize, b: usize) -> Self {
        LayerParams {
            weights: vec![0.0; w],
            biases: vec![0.0; b],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty() && self.biases.is_empty()
    }
}

/// A trainable layer chain ending in a fully-connected regression head.
#[derive(Clone, Debug)]
pub struct RegressionNet {
    config: NetConfig,
    /// Input dims of every layer: `[input, dims[0], .., dims[n-2]]`.
    in_dims: Vec<(usize, usize, usize)>,
    out_dims: Vec<(usize, usize, usize)>,
    params: Vec<LayerParams>,
    velocity: Vec<LayerParams>,
    seed: u64,
    steps: u64,
}

impl RegressionNet {
    /// Zero-mean uniform init with scale `1/sqrt(fan_in)`; biases zero.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let out_dims = config.layer_dims()?;
        let mut in_dims = Vec::with_capacity(config.layers.len());
        in_dims.push(config.input);
        in_dims.extend(out_dims.iter().take(out_dims.len() - 1).copied());

        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(config.layers.len());
        let mut velocity = Vec::with_capacity(config.layers.len());
        for (spec, &inp) in config.layers.iter().zip(&in_dims) {
            let (nw, nb) = spec.param_counts(inp);
            let fan_in = match *spec {
                LayerSpec::Conv { kernel, .. } => inp.0 * kernel * kernel,
                LayerSpec::FullyConnected { .. } => inp.0 * inp.1 * inp.2,
                _ => 0,
            };
            let mut p = LayerParams::zeros(nw, nb);
            if fan_in > 0 {
                let scale = 1.0 / (fan_in as f64).sqrt();
                for w in p.weights.iter_mut() {
                    *w = rng.random_range(-scale..scale);
                }
            }
            velocity.push(LayerParams::zeros(nw, nb));
            params.push(p);
        }
        Ok(RegressionNet {
            config,
            in_dims,
            out_dims,
            params,
            velocity,
            seed,
            steps: 0,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    pub(crate) fn params_and_velocity_mut(
        &mut self,
    ) -> (&mut [LayerParams], &mut [LayerParams]) {
        (&mut self.params, &mut self.velocity)
    }

    pub(crate) fn bump_step(&mut self) {
        self.steps += 1;
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub(crate) fn set_steps(&mut self, steps: u64) {
        self.steps = steps;
    }

    pub fn layer_in_dims(&self) -> &[(usize, usize, usize)] {
        &self.in_dims
    }

    pub fn num_parameters(&self) -> usize {
        self.params
            .iter()
            .map(|p| p.weights.len() + p.biases.len())
            .sum()
    }

    /// Index of the next-to-last fully-connected layer, used as the feature
    /// layer for bounding-box refinement.
    pub fn penultimate_fc(&self) -> Option<usize> {
        let fcs: Vec<usize> = self
            .config
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::FullyConnected { .. }))
            .map(|(i, _)| i)
            .collect();
        if fcs.len() >= 2 {
            Some(fcs[fcs.len() - 2])
        } else {
            None
        }
    }

    /// Runs the chain, caching every activation (and the pool/relu/norm
    /// bookkeeping) for a later backward pass.
    pub fn forward(&self, image: &Tensor) -> Result<ForwardPass> {
        if image.dims() != self.config.input {
            return Err(Error::LayerMismatch {
                layer: 0,
                kind: "input",
                detail: format!(
                    "expected {:?}, got {:?}",
                    self.config.input,
                    image.dims()
                ),
            });
        }
        let n = self.config.layers.len();
        let mut pass = ForwardPass {
            activations: Vec::with_capacity(n + 1),
            pool_argmax: vec![Vec::new(); n],
            relu_active: vec![Vec::new(); n],
            norm_scale: vec![Vec::new(); n],
        };
        pass.activations.push(image.clone());
        for (i, spec) in self.config.layers.iter().enumerate() {
            let input = pass.activations.last().unwrap();
            let (oc, oh, ow) = self.out_dims[i];
            let mut out = Tensor::zeros(oc, oh, ow);
            match *spec {
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                    pad,
                } => layers::conv_forward(
                    input,
                    &self.params[i].weights,
                    &self.params[i].biases,
                    filters,
                    kernel,
                    stride,
                    pad,
                    &mut out,
                ),
                LayerSpec::Relu => {
                    pass.relu_active[i] = layers::relu_forward(input, &mut out);
                }
                LayerSpec::MaxPool { window, stride } => {
                    pass.pool_argmax[i] = layers::maxpool_forward(input, window, stride, &mut out);
                }
                LayerSpec::ContrastNorm { span, alpha, beta } => {
                    pass.norm_scale[i] = layers::contrast_norm_forward(input, span, alpha, beta, &mut out);
                }
                LayerSpec::FullyConnected { .. } => layers::fc_forward(
                    input,
                    &self.params[i].weights,
                    &self.params[i].biases,
                    &mut out,
                ),
            }
            debug_assert!(out.all_finite(), "non-finite activation at layer {i}");
            pass.activations.push(out);
        }
        if !pass.activations.last().unwrap().all_finite() {
            return Err(Error::NonFinite {
                context: "forward output",
                layer: Some(n - 1),
            });
        }
        Ok(pass)
    }

    /// Gradients for every weight and bias plus the input gradient, given
    /// the loss gradient at the head output.
    pub fn backward(&self, pass: &ForwardPass, output_grad: &Tensor) -> Result<NetGradients> {
        let n = self.config.layers.len();
        if pass.activations.len() != n + 1 {
            return Err(Error::InvalidConfig(
                "forward pass does not match this net".into(),
            ));
        }
        if output_grad.len() != pass.activations[n].len() {
            return Err(Error::LengthMismatch {
                expected: pass.activations[n].len(),
                got: output_grad.len(),
            });
        }
        let mut grads: Vec<LayerParams> = self
            .params
            .iter()
            .map(|p| LayerParams::zeros(p.weights.len(), p.biases.len()))
            .collect();
        let mut g = output_grad.clone();
        for i in (0..n).rev() {
            let input = &pass.activations[i];
            let (ic, ih, iw) = input.dims();
            let mut gin = Tensor::zeros(ic, ih, iw);
            let grad_i = &mut grads[i];
            match self.config.layers[i] {
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                    pad,
                } => layers::conv_backward(
                    input,
                    &self.params[i].weights,
                    filters,
                    kernel,
                    stride,
                    pad,
                    &g,
                    &mut grad_i.weights,
                    &mut grad_i.biases,
                    &mut gin,
                ),
                LayerSpec::Relu => layers::relu_backward(&pass.relu_active[i], &g, &mut gin),
                LayerSpec::MaxPool { .. } => {
                    layers::maxpool_backward(&pass.pool_argmax[i], &g, &mut gin)
                }
                LayerSpec::ContrastNorm { span, alpha, beta } => layers::contrast_norm_backward(
                    input,
                    &pass.norm_scale[i],
                    span,
                    alpha,
                    beta,
                    &g,
                    &mut gin,
                ),
                LayerSpec::FullyConnected { .. } => layers::fc_backward(
                    input,
                    &self.params[i].weights,
                    &g,
                    &mut grad_i.weights,
                    &mut grad_i.biases,
                    &mut gin,
                ),
            }
            g = gin;
        }
        Ok(NetGradients {
            layers: grads,
            input: g,
        })
    }
}

/// Cached activations of one forward run. Owning the cache keeps inference
/// pure over an immutable net; backward cannot be called without it.
#[derive(Debug)]
pub struct ForwardPass {
    activations: Vec<Tensor>,
    pool_argmax: Vec<Vec<usize>>,
    relu_active: Vec<Vec<bool>>,
    norm_scale: Vec<Vec<f64>>,
}

impl ForwardPass {
    pub fn output(&self) -> &Tensor {
        self.activations.last().unwrap()
    }

    pub fn activation(&self, layer: usize) -> &Tensor {
        &self.activations[layer + 1]
    }

    /// True when the two passes share every max-pool argmax and relu sign.
    /// A central difference straddling a kink is meaningless; gradient
    /// checking uses this to exclude such parameters.
    pub fn same_kinks(&self, other: &ForwardPass) -> bool {
        self.pool_argmax == other.pool_argmax && self.relu_active == other.relu_active
    }
}

/// Per-layer parameter gradients plus the gradient at the net input.
#[derive(Clone, Debug)]
pub struct NetGradients {
    pub layers: Vec<LayerParams>,
    pub input: Tensor,
}

impl NetGradients {
    pub fn zeros_like(net: &RegressionNet) -> Self {
        let (c, h, w) = net.config().input;
        NetGradients {
            layers: net
                .params()
                .iter()
                .map(|p| LayerParams::zeros(p.weights.len(), p.biases.len()))
                .collect(),
            input: Tensor::zeros(c, h, w),
        }
    }

    pub fn add_scaled(&mut self, other: &NetGradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += scale * y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += scale * y;
            }
        }
        for (x, y) in self.input.data_mut().iter_mut().zip(other.input.data()) {
            *x += scale * y;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in self.layers.iter_mut() {
            for x in l.weights.iter_mut() {
                *x *= s;
            }
            for x in l.biases.iter_mut() {
                *x *= s;
            }
        }
        for x in self.input.data_mut().iter_mut() {
            *x *= s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_layer_spatial_arithmetic_matches_227_chain() {
        // 227x227x3 through conv(96, 7x7, stride 2, pad 0) -> 111x111x96,
        // then maxpool(3x3, stride 2) -> 55x55.
        let cfg = NetConfig::new(
            (3, 227, 227),
            vec![
                LayerSpec::Conv {
                    filters: 96,
                    kernel: 7,
                    stride: 2,
                    pad: 0,
                },
                LayerSpec::MaxPool {
                    window: 3,
                    stride: 2,
                },
                LayerSpec::FullyConnected { units: 10 },
            ],
        );
        let dims = cfg.layer_dims().unwrap();
        assert_eq!(dims[0], (96, 111, 111));
        assert_eq!(dims[1], (96, 55, 55));
    }

    #[test]
    fn zero_weights_give_all_bias_output() {
        let cfg = NetConfig::new(
            (1, 6, 6),
            vec![
                LayerSpec::Conv {
                    filters: 2,
                    kernel: 3,
                    stride: 1,
                    pad: 0,
                },
                LayerSpec::FullyConnected { units: 3 },
            ],
        );
        let mut net = RegressionNet::init(cfg, 0).unwrap();
        for p in net.params_mut() {
            p.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        net.params_mut()[1].biases.copy_from_slice(&[1.5, -2.0, 0.25]);
        let image = Tensor::from_vec(1, 6, 6, (0..36).map(|i| i as f64).collect()).unwrap();
        let pass = net.forward(&image).unwrap();
        assert_eq!(pass.output().data(), &[1.5, -2.0, 0.25]);
    }

    #[test]
    fn forward_rejects_wrong_input_dims() {
        let cfg = NetConfig::new((3, 8, 8), vec![LayerSpec::FullyConnected { units: 2 }]);
        let net = RegressionNet::init(cfg, 0).unwrap();
        let err = net.forward(&Tensor::zeros(3, 9, 8)).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }

    #[test]
    fn config_rejects_oversized_kernel_with_layer_index() {
        let cfg = NetConfig::new(
            (3, 8, 8),
            vec![
                LayerSpec::Conv {
                    filters: 4,
                    kernel: 3,
                    stride: 2,
                    pad: 0,
                },
                LayerSpec::Conv {
                    filters: 4,
                    kernel: 9,
                    stride: 1,
                    pad: 0,
                },
                LayerSpec::FullyConnected { units: 2 },
            ],
        );
        let err = cfg.layer_dims().unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }

    #[test]
    fn relu_blocks_gradient_at_negative_preactivation() {
        let cfg = NetConfig::new(
            (2, 1, 1),
            vec![LayerSpec::Relu, LayerSpec::FullyConnected { units: 1 }],
        );
        let mut net = RegressionNet::init(cfg, 1).unwrap();
        net.params_mut()[1].weights.copy_from_slice(&[1.0, 1.0]);
        let image = Tensor::flat(vec![-0.5, 0.5]);
        let pass = net.forward(&image).unwrap();
        let grads = net.backward(&pass, &Tensor::flat(vec![1.0])).unwrap();
        assert_eq!(grads.input.data()[0], 0.0);
        assert!(grads.input.data()[1] != 0.0);
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax_and_preserves_sum() {
        let cfg = NetConfig::new(
            (1, 4, 4),
            vec![
                LayerSpec::MaxPool {
                    window: 2,
                    stride: 2,
                },
                LayerSpec::FullyConnected { units: 4 },
            ],
        );
        let mut net = RegressionNet::init(cfg, 2).unwrap();
        // Identity head so the output gradient maps straight onto the pool.
        let fc = &mut net.params_mut()[1];
        fc.weights.iter_mut().for_each(|w| *w = 0.0);
        for i in 0..4 {
            fc.weights[i * 4 + i] = 1.0;
        }
        let mut vals = vec![0.0; 16];
        vals[5] = 3.0; // window (0,0) argmax
        vals[2] = 2.0; // window (0,1) argmax
        vals[8] = 1.0; // window (1,0) argmax
        vals[15] = 4.0; // window (1,1) argmax
        let image = Tensor::from_vec(1, 4, 4, vals).unwrap();
        let pass = net.forward(&image).unwrap();
        let g = Tensor::flat(vec![1.0, 10.0, 100.0, 1000.0]);
        let grads = net.backward(&pass, &g).unwrap();
        let gi = grads.input.data();
        assert_eq!(gi[5], 1.0);
        assert_eq!(gi[2], 10.0);
        assert_eq!(gi[8], 100.0);
        assert_eq!(gi[15], 1000.0);
        let total: f64 = gi.iter().sum();
        assert_eq!(total, 1111.0, "gradient mass must be preserved");
    }

    #[test]
    fn init_is_reproducible_for_fixed_seed() {
        let cfg = NetConfig::new(
            (3, 12, 12),
            vec![
                LayerSpec::Conv {
                    filters: 4,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                },
                LayerSpec::Relu,
                LayerSpec::FullyConnected { units: 5 },
            ],
        );
        let a = RegressionNet::init(cfg.clone(), 77).unwrap();
        let b = RegressionNet::init(cfg, 77).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn final_layer_must_be_fully_connected() {
        let cfg = NetConfig::new((3, 8, 8), vec![LayerSpec::Relu]);
        assert!(RegressionNet::init(cfg, 0).is_err());
    }
}
