//! A minimal differentiable feedforward/convolutional network.
//!
//! The stack of layers ends in a dense layer producing the K logits (the
//! activation vector); the softmax head is applied outside the stack. The
//! network supplies forward evaluation, gradients of any logits-space loss
//! with respect to the input image, SGD training, and binary persistence.

mod io;
mod layers;
mod train;

pub use io::{load_model, save_model};
pub use layers::{Conv, Dense, Layer};
pub use train::{train, TrainConfig, TrainReport};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::Image;

/// The penultimate-layer output: a real vector of length K (the logits).
pub type ActivationVector = Vec<f64>;

/// An immutable layer stack with consistent shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: (usize, usize, usize),
    num_classes: usize,
    /// Multiplier mapping stored pixels to the internal input scale.
    /// The default 1/255 maps `[0,255]` onto `[0,1]`; input gradients are
    /// reported back on the pixel scale so an L∞=1 attack step means one
    /// pixel level.
    input_scale: f64,
    /// Input shape of each layer, plus the final output shape.
    shapes: Vec<(usize, usize, usize)>,
}

/// Retained per-layer activations from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the scaled input; `activations[i]` the output of
    /// layer `i-1`. The last entry holds the logits.
    activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &[f64] {
        self.activations.last().expect("trace is never empty")
    }

    /// Output of layer `i` (0-based); `layer_output(layers-1)` is the logits.
    pub fn layer_output(&self, i: usize) -> &[f64] {
        &self.activations[i + 1]
    }
}

impl Network {
    /// Builds a network after validating that adjacent layer shapes are
    /// consistent and the final layer produces exactly `num_classes` values.
    pub fn new(
        input_shape: (usize, usize, usize),
        num_classes: usize,
        input_scale: f64,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be positive".into()));
        }
        if !(input_scale.is_finite() && input_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "input_scale must be positive and finite, got {input_scale}"
            )));
        }
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        let mut shape = input_shape;
        shapes.push(shape);
        for layer in &layers {
            shape = layer.out_shape(shape)?;
            shapes.push(shape);
        }
        let (h, w, c) = shape;
        if h * w * c != num_classes {
            return Err(Error::ShapeMismatch(format!(
                "final layer produces {h}x{w}x{c} values, expected {num_classes} logits"
            )));
        }
        Ok(Self {
            layers,
            input_shape,
            num_classes,
            input_scale,
            shapes,
        })
    }

    /// The default desk-scale architecture: two conv+pool blocks, one dense
    /// hidden layer and a dense logits layer, He-initialized from `seed`.
    /// Height and width must be divisible by four.
    pub fn desk_default(
        input_shape: (usize, usize, usize),
        num_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        let (h, w, c) = input_shape;
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::InvalidArgument(format!(
                "desk architecture pools twice by 2; {h}x{w} must be divisible by 4"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv1 = Conv::new(c, 8, 3, 1, he_init(&mut rng, 8 * 9 * c, 9 * c), vec![0.0; 8])?;
        let conv2 = Conv::new(8, 16, 3, 1, he_init(&mut rng, 16 * 9 * 8, 9 * 8), vec![0.0; 16])?;
        let flat = (h / 4) * (w / 4) * 16;
        let hidden = Dense::new(flat, 64, he_init(&mut rng, flat * 64, flat), vec![0.0; 64])?;
        let logits = Dense::new(
            64,
            num_classes,
            he_init(&mut rng, 64 * num_classes, 64),
            vec![0.0; num_classes],
        )?;
        Self::new(
            input_shape,
            num_classes,
            1.0 / 255.0,
            vec![
                Layer::Conv(conv1),
                Layer::Relu,
                Layer::AvgPool { size: 2 },
                Layer::Conv(conv2),
                Layer::Relu,
                Layer::AvgPool { size: 2 },
                Layer::Dense(hidden),
                Layer::Relu,
                Layer::Dense(logits),
            ],
        )
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        if image.shape() != self.input_shape {
            return Err(Error::ShapeMismatch(format!(
                "image shape {:?} does not match network input {:?}",
                image.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Runs the layer stack, retaining every intermediate activation.
    pub fn forward(&self, image: &Image) -> Result<ForwardTrace> {
        self.check_image(image)?;
        let scaled: Vec<f64> = image.pixels().iter().map(|&p| p * self.input_scale).collect();
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(scaled);
        for (i, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(&activations[i], self.shapes[i]);
            activations.push(out);
        }
        Ok(ForwardTrace { activations })
    }

    /// The activation vector (logits) for an image.
    pub fn logits(&self, image: &Image) -> Result<ActivationVector> {
        Ok(self.forward(image)?.activations.pop().expect("non-empty"))
    }

    /// Gradient of a logits-space loss with respect to every input pixel,
    /// reported on the `[0,255]` pixel scale. `loss_grad_at_logits` is the
    /// loss gradient at the logits.
    pub fn input_gradient(&self, image: &Image, loss_grad_at_logits: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward(image)?;
        self.input_gradient_from_trace(&trace, loss_grad_at_logits)
    }

    /// Same as [`Network::input_gradient`] but reuses an existing trace.
    pub fn input_gradient_from_trace(
        &self,
        trace: &ForwardTrace,
        loss_grad_at_logits: &[f64],
    ) -> Result<Vec<f64>> {
        if loss_grad_at_logits.len() != self.num_classes {
            return Err(Error::ShapeMismatch(format!(
                "loss gradient has {} entries, expected {}",
                loss_grad_at_logits.len(),
                self.num_classes
            )));
        }
        let internal = self.backward(trace, loss_grad_at_logits, None);
        Ok(internal.iter().map(|&g| g * self.input_scale).collect())
    }

    /// Backpropagates `grad` from the logits to the scaled input, optionally
    /// accumulating parameter gradients.
    pub(crate) fn backward(
        &self,
        trace: &ForwardTrace,
        grad: &[f64],
        mut param_grads: Option<&mut Vec<layers::LayerGrads>>,
    ) -> Vec<f64> {
        let mut g = grad.to_vec();
        for i in (0..self.layers.len()).rev() {
            let slot = param_grads.as_deref_mut().map(|v| &mut v[i]);
            g = self.layers[i].backward(&trace.activations[i], self.shapes[i], &g, slot);
        }
        g
    }

    pub(crate) fn zero_grads(&self) -> Vec<layers::LayerGrads> {
        self.layers.iter().map(Layer::zero_grads).collect()
    }

    pub(crate) fn apply_update(&mut self, grads: &[layers::LayerGrads], step: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.apply_update(g, step);
        }
    }

    /// On/off pattern of every ReLU unit for this input. Finite-difference
    /// oracles compare patterns at perturbed inputs to detect intervals where
    /// the loss is not differentiable.
    pub fn activation_pattern(&self, image: &Image) -> Result<Vec<bool>> {
        let trace = self.forward(image)?;
        let mut pattern = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if matches!(layer, Layer::Relu) {
                pattern.extend(trace.activations[i].iter().map(|&v| v > 0.0));
            }
        }
        Ok(pattern)
    }
}

fn he_init(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// Index of the maximum entry, ties broken toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Softmax with max-subtraction for overflow safety. Rejects NaN/Inf logits.
pub fn softmax_probs(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("softmax of an empty vector".into()));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("logit value {bad}")));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.iter().map(|&e| e / sum).collect())
}

/// Fraction of samples whose softmax argmax equals the label.
pub fn classification_accuracy(net: &Network, samples: &[(Image, usize)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let mut correct = 0usize;
    for (image, label) in samples {
        if argmax(&net.logits(image)?) == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// A lazily seeded RNG used by tests and generators; ChaCha8 keeps streams
/// identical across platforms.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform random weights in `[-scale, scale]` (test helper for small nets).
pub fn uniform_weights(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}
