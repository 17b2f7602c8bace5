//! An adversarial-robustness workbench for small self-trained image
//! classifiers.
//!
//! The pieces fit together like this: [`net`] provides a minimal
//! differentiable network with input gradients; [`targets`] builds the two
//! kinds of logits-space targets (class aiming vectors and per-class mean
//! activation vectors); [`lots`] runs the iterative feature-targeting attack
//! against either decision head; [`openmax`] is the open-set head with
//! per-class Weibull tail models and an `unknown` pseudo-class; [`pass`]
//! scores perceptual similarity of original/perturbed pairs (ECC homography
//! alignment followed by SSIM); and [`harness`] drives the four-way
//! experiment matrix with statistics and reports.

pub mod error;
pub mod harness;
pub mod image;
pub mod lots;
pub mod net;
pub mod openmax;
pub mod pass;
pub mod targets;
pub mod weibull;

pub use error::{Error, Result};
pub use image::{Image, PixelRepr};
pub use lots::{iterative_lots, lots_gradient, lots_step, quantize, AttackConfig, AttackResult};
pub use net::{load_model, save_model, softmax_probs, ActivationVector, Network};
pub use openmax::{
    build_openmax, openmax_probabilities, Classifier, Label, OpenSetPrediction, OpenmaxConfig,
    OpenmaxModel,
};
pub use pass::{ecc_align, pass_score, ssim, to_grayscale, Homography, PassScore};
pub use targets::{compute_mavs, make_cav, mav_target, MavSet, TargetKind, TargetVector};
pub use weibull::{fit_weibull, WeibullModel};
