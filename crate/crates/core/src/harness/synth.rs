//! A synthetic separable 10-class image set so the full pipeline runs with
//! zero downloads.
//!
//! Each class is a planar cosine grating with a class-specific frequency
//! pair; samples vary in phase, amplitude and additive noise, so the classes
//! are easy for a small convolutional net yet not trivially linear.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::harness::dataset::Dataset;
use crate::image::Image;
use crate::net::seeded_rng;

/// (cycles across width, cycles across height) per class.
const CLASS_FREQS: [(f64, f64); 10] = [
    (1.0, 0.0),
    (0.0, 1.0),
    (1.0, 1.0),
    (2.0, 0.0),
    (0.0, 2.0),
    (2.0, 1.0),
    (1.0, 2.0),
    (2.0, 2.0),
    (3.0, 0.0),
    (0.0, 3.0),
];

fn render_sample<R: Rng>(rng: &mut R, class: usize, h: usize, w: usize) -> Image {
    let (fx, fy) = CLASS_FREQS[class];
    let amplitude = rng.random_range(45.0..75.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let noise = Normal::new(0.0, 10.0).expect("valid std");
    let mut px = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let arg = std::f64::consts::TAU * (fx * x as f64 / w as f64 + fy * y as f64 / h as f64)
                + phase;
            let v = 128.0 + amplitude * arg.cos() + noise.sample(rng);
            px.push(v.clamp(0.0, 255.0).round());
        }
    }
    Image::discrete(h, w, 1, px).expect("values are clamped and rounded")
}

/// Deterministic per seed. `per_class_train`/`per_class_test` samples for
/// each of the 10 classes.
pub fn generate_synthetic_dataset(
    seed: u64,
    per_class_train: usize,
    per_class_test: usize,
    h: usize,
    w: usize,
) -> Dataset {
    let mut rng = seeded_rng(seed);
    let mut train = Vec::with_capacity(10 * per_class_train);
    let mut test = Vec::with_capacity(10 * per_class_test);
    for class in 0..10 {
        for _ in 0..per_class_train {
            train.push((render_sample(&mut rng, class, h, w), class));
        }
        for _ in 0..per_class_test {
            test.push((render_sample(&mut rng, class, h, w), class));
        }
    }
    Dataset::new(train, test).expect("generator output is well-formed")
}
