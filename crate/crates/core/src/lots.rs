//! The logits optimized targeting system: descent on the Euclidean distance
//! between an image's activation vector and a chosen logits-space target,
//! applied to the input pixels.
//!
//! The iterative step-and-adjust loop keeps two images: a continuous working
//! copy that the scaled gradient steps move, and its quantized twin that the
//! decision head judges. The attack stops the moment the quantized image is
//! classified as the target, regardless of prediction certainty.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::net::Network;
use crate::openmax::{Classifier, Label};
use crate::targets::TargetVector;

#[derive(Debug, Clone, Copy)]
pub struct AttackConfig {
    /// Step cap; exceeding it makes the attempt a failure.
    pub max_steps: usize,
    /// L∞ length of each pre-clamp step, in pixel levels.
    pub step_linf: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            max_steps: 500,
            step_linf: 1.0,
        }
    }
}

impl AttackConfig {
    fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be at least 1".into()));
        }
        if !(self.step_linf.is_finite() && self.step_linf > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step_linf must be positive, got {}",
                self.step_linf
            )));
        }
        Ok(())
    }
}

/// Why an attack gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    /// The step cap was exceeded before the target classification appeared.
    StepLimit,
    /// The loss gradient vanished at a stationary point short of the target.
    GradientStall,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::StepLimit => "step_limit",
            FailureReason::GradientStall => "gradient_stall",
        }
    }
}

/// The evolving pair of images inside the attack loop.
#[derive(Debug, Clone)]
pub struct AttackState {
    pub x_continuous: Image,
    pub x_quantized: Image,
    pub step_count: usize,
}

impl AttackState {
    pub fn from_original(x_o: &Image) -> Result<Self> {
        if !x_o.is_discrete() {
            return Err(Error::InvalidArgument(
                "attacks start from a discrete image".into(),
            ));
        }
        Ok(Self {
            x_continuous: x_o.clone().into_continuous(),
            x_quantized: x_o.clone(),
            step_count: 0,
        })
    }
}

/// One attack attempt.
#[derive(Debug, Clone)]
pub struct AttackResult {
    /// The discrete perturbed image (equals the original when the probe is
    /// already classified as the target).
    pub perturbed: Image,
    pub success: bool,
    pub steps_used: usize,
    pub achieved: Label,
    pub certainty: f64,
    /// Filled by the experiment harness, not by the attack itself.
    pub pass_score: Option<f64>,
    pub target: TargetVector,
    pub failure: Option<FailureReason>,
}

/// Gradient of `0.5 * ||t - f(x)||^2` with respect to the input pixels,
/// realized by feeding the loss gradient `f(x) - t` through backpropagation.
pub fn lots_gradient(net: &Network, image: &Image, target: &TargetVector) -> Result<Vec<f64>> {
    if target.values.len() != net.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "target has {} entries, network produces {}",
            target.values.len(),
            net.num_classes()
        )));
    }
    let trace = net.forward(image)?;
    let loss_grad: Vec<f64> = trace
        .logits()
        .iter()
        .zip(&target.values)
        .map(|(f, t)| f - t)
        .collect();
    net.input_gradient_from_trace(&trace, &loss_grad)
}

/// Rounds a continuous in-range image to integers, half away from zero.
pub fn quantize(x: &Image) -> Result<Image> {
    let (h, w, c) = x.shape();
    let mut data = Vec::with_capacity(x.pixels().len());
    for (i, &v) in x.pixels().iter().enumerate() {
        if !(0.0..=255.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "pixel {i} is {v}, outside [0,255]; clamp before quantizing"
            )));
        }
        data.push(v.round());
    }
    Image::discrete(h, w, c, data)
}

/// Takes one scaled gradient descent step: the update direction has L∞ norm
/// exactly `step_linf` before clamping to `[0,255]`; the quantized twin is
/// refreshed afterwards.
pub fn lots_step(state: &mut AttackState, gradient: &[f64], step_linf: f64) -> Result<()> {
    if gradient.len() != state.x_continuous.pixels().len() {
        return Err(Error::ShapeMismatch(format!(
            "gradient has {} entries, image has {}",
            gradient.len(),
            state.x_continuous.pixels().len()
        )));
    }
    let linf = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    if linf == 0.0 {
        return Err(Error::GradientStall);
    }
    let (h, w, c) = state.x_continuous.shape();
    let stepped: Vec<f64> = state
        .x_continuous
        .pixels()
        .iter()
        .zip(gradient)
        .map(|(&x, &g)| (x - (g / linf) * step_linf).clamp(0.0, 255.0))
        .collect();
    state.x_continuous = Image::continuous(h, w, c, stepped)?;
    state.x_quantized = quantize(&state.x_continuous)?;
    state.step_count += 1;
    Ok(())
}

/// The iterative step-and-adjust attack. Classifies the quantized image
/// before every step, so a probe already classified as the target succeeds
/// with zero steps and an unmodified image.
pub fn iterative_lots(
    net: &Network,
    classifier: Classifier<'_>,
    x_o: &Image,
    target: &TargetVector,
    config: &AttackConfig,
) -> Result<AttackResult> {
    config.validate()?;
    if target.target_class >= classifier.num_classes(net) {
        return Err(Error::InvalidArgument(format!(
            "target class {} is not a known class of the decision head",
            target.target_class
        )));
    }
    let mut state = AttackState::from_original(x_o)?;
    loop {
        let (label, certainty) = classifier.classify(net, &state.x_quantized)?;
        if label == Label::Known(target.target_class) {
            return Ok(AttackResult {
                perturbed: state.x_quantized,
                success: true,
                steps_used: state.step_count,
                achieved: label,
                certainty,
                pass_score: None,
                target: target.clone(),
                failure: None,
            });
        }
        if state.step_count >= config.max_steps {
            return Ok(AttackResult {
                perturbed: state.x_quantized,
                success: false,
                steps_used: state.step_count,
                achieved: label,
                certainty,
                pass_score: None,
                target: target.clone(),
                failure: Some(FailureReason::StepLimit),
            });
        }
        let gradient = lots_gradient(net, &state.x_continuous, target)?;
        match lots_step(&mut state, &gradient, config.step_linf) {
            Ok(()) => {}
            Err(Error::GradientStall) => {
                return Ok(AttackResult {
                    perturbed: state.x_quantized,
                    success: false,
                    steps_used: state.step_count,
                    achieved: label,
                    certainty,
                    pass_score: None,
                    target: target.clone(),
                    failure: Some(FailureReason::GradientStall),
                });
            }
            Err(e) => return Err(e),
        }
    }
}
