//! Mini-batch SGD on the softmax cross-entropy loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::net::{softmax_probs, Network};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            batch_size: 32,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Mean cross-entropy over the final epoch (0 when no epochs ran).
    pub final_loss: f64,
}

/// Trains `net` in place. Zero epochs leaves the initialized network
/// unchanged. Shuffling and therefore the result are fixed by `cfg.seed`.
pub fn train(net: &mut Network, samples: &[(Image, usize)], cfg: &TrainConfig) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let k = net.num_classes();
    for (i, (image, label)) in samples.iter().enumerate() {
        if *label >= k {
            return Err(Error::InvalidArgument(format!(
                "sample {i} has label {label}, expected [0,{k})"
            )));
        }
        if image.shape() != net.input_shape() {
            return Err(Error::ShapeMismatch(format!(
                "sample {i} shape {:?} does not match network input {:?}",
                image.shape(),
                net.input_shape()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_loss = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = net.zero_grads();
            for &idx in batch {
                let (image, label) = &samples[idx];
                let trace = net.forward(image)?;
                let probs = softmax_probs(trace.logits())?;
                epoch_loss += -probs[*label].max(1e-300).ln();
                // d(cross entropy)/d(logits) = softmax - onehot
                let mut dlogits = probs;
                dlogits[*label] -= 1.0;
                net.backward(&trace, &dlogits, Some(&mut grads));
            }
            net.apply_update(&grads, cfg.learning_rate / batch.len() as f64);
        }
        epoch_loss /= samples.len() as f64;
    }
    Ok(TrainReport {
        epochs_run: cfg.epochs,
        final_loss: epoch_loss,
    })
}
