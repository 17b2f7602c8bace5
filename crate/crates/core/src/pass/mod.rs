//! The perceptual adversarial similarity score: homography alignment of the
//! perturbed image onto the original by maximizing the enhanced correlation
//! coefficient, then the structural similarity index of the grayscale pair.
//! A score of 1 means perceptually identical.

mod ecc;

pub use ecc::{ecc_align, EccResult, Homography};

use crate::error::{Error, Result};
use crate::image::Image;

/// ECC termination: at most this many iterations...
pub const ECC_MAX_ITERS: usize = 100;
/// ...or a parameter-update norm below this threshold.
pub const ECC_EPS: f64 = 0.01;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
/// Stabilizers for the 8-bit dynamic range: (0.01*255)^2 and (0.03*255)^2.
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// The similarity score plus whether the alignment step converged (on
/// failure the score is computed on unaligned images).
#[derive(Debug, Clone, Copy)]
pub struct PassScore {
    pub value: f64,
    pub aligned: bool,
}

/// Converts to a single channel: fixed luma weights (0.299, 0.587, 0.114)
/// for 3-channel images, pass-through for single-channel ones.
pub fn to_grayscale(image: &Image) -> Result<Image> {
    let (h, w, c) = image.shape();
    match c {
        1 => Ok(image.clone()),
        3 => {
            let px = image.pixels();
            let mut out = Vec::with_capacity(h * w);
            for i in 0..h * w {
                out.push(0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2]);
            }
            Image::continuous(h, w, 1, out)
        }
        c => Err(Error::InvalidArgument(format!(
            "grayscale conversion expects 1 or 3 channels, got {c}"
        ))),
    }
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Separable valid-region convolution with the normalized Gaussian window;
/// the result is (h-10) x (w-10).
fn gauss_valid(px: &[f64], h: usize, w: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (dx, k) in kernel.iter().enumerate() {
                acc += k * px[y * w + x + dx];
            }
            rows[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (dy, k) in kernel.iter().enumerate() {
                acc += k * rows[(y + dy) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean structural similarity over an 11x11 Gaussian-weighted window map,
/// valid-region aggregation. Inputs must be single-channel and at least
/// 11x11.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let (h, w, ca) = a.shape();
    if b.shape() != (h, w, ca) {
        return Err(Error::ShapeMismatch(format!(
            "ssim inputs {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if ca != 1 {
        return Err(Error::InvalidArgument("ssim expects single-channel images".into()));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let kernel = gaussian_kernel();
    let pa = a.pixels();
    let pb = b.pixels();
    let sq_a: Vec<f64> = pa.iter().map(|&v| v * v).collect();
    let sq_b: Vec<f64> = pb.iter().map(|&v| v * v).collect();
    let ab: Vec<f64> = pa.iter().zip(pb).map(|(&x, &y)| x * y).collect();

    let mu_a = gauss_valid(pa, h, w, &kernel);
    let mu_b = gauss_valid(pb, h, w, &kernel);
    let mu_aa = gauss_valid(&sq_a, h, w, &kernel);
    let mu_bb = gauss_valid(&sq_b, h, w, &kernel);
    let mu_ab = gauss_valid(&ab, h, w, &kernel);

    let mut sum = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = mu_aa[i] - ma * ma;
        let var_b = mu_bb[i] - mb * mb;
        let cov = mu_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2);
        sum += num / den;
    }
    Ok(sum / mu_a.len() as f64)
}

/// PASS(x_p, x_o): grayscale both, align the perturbed image onto the
/// original, then take their structural similarity. `aligned` records
/// whether the alignment converged.
pub fn pass_score(x_p: &Image, x_o: &Image) -> Result<PassScore> {
    if x_p.shape() != x_o.shape() {
        return Err(Error::ShapeMismatch(format!(
            "pass inputs {:?} vs {:?}",
            x_p.shape(),
            x_o.shape()
        )));
    }
    let moving = to_grayscale(x_p)?;
    let fixed = to_grayscale(x_o)?;
    let aligned = ecc_align(&moving, &fixed, ECC_MAX_ITERS, ECC_EPS)?;
    let value = ssim(&aligned.warped, &fixed)?;
    Ok(PassScore {
        value,
        aligned: aligned.converged,
    })
}
