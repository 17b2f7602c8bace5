#![allow(clippy::needless_range_loop)] // fixed-size 8x8 matrix code reads best indexed

//! Image registration by maximizing the enhanced correlation coefficient
//! over the eight parameters of a homography, with a forward-additive
//! Gauss-Newton scheme.
//!
//! The ECC objective is the normalized inner product of the zero-meaned
//! warped moving image and the zero-meaned fixed image. Each iteration warps
//! the moving image and its gradients, assembles the 8-parameter intensity
//! Jacobian, and solves the closed-form update. Iteration stops at
//! `max_iters` or when the parameter-update norm drops below `eps`.

use crate::error::{Error, Result};
use crate::image::Image;

/// A 3x3 projective transform, row-major, bottom-right entry fixed at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub m: [f64; 9],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
    };

    /// Normalizes so the bottom-right entry is 1 and checks invertibility.
    pub fn new(m: [f64; 9]) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("homography entry".into()));
        }
        if m[8] == 0.0 {
            return Err(Error::InvalidArgument(
                "homography bottom-right entry must be nonzero".into(),
            ));
        }
        let mut n = m;
        for v in n.iter_mut() {
            *v /= m[8];
        }
        let h = Homography { m: n };
        if h.det().abs() < 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "homography is singular (det {})",
                h.det()
            )));
        }
        Ok(h)
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }

    /// Maps a point in the fixed frame to moving-image coordinates.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let d = m[6] * x + m[7] * y + m[8];
        ((m[0] * x + m[1] * y + m[2]) / d, (m[3] * x + m[4] * y + m[5]) / d)
    }
}

/// Outcome of one alignment.
#[derive(Debug, Clone)]
pub struct EccResult {
    pub homography: Homography,
    /// The moving image resampled into the fixed frame; out-of-bounds pixels
    /// take the fixed image's value.
    pub warped: Image,
    pub converged: bool,
    pub iterations: usize,
}

struct Gray<'a> {
    h: usize,
    w: usize,
    px: &'a [f64],
}

impl Gray<'_> {
    #[inline]
    fn at(&self, y: usize, x: usize) -> f64 {
        self.px[y * self.w + x]
    }

    /// Bilinear sample; `None` outside `[0,w-1]x[0,h-1]`. Sampling at exact
    /// integer coordinates reproduces the stored value bit-exactly.
    #[inline]
    fn sample(&self, x: f64, y: f64) -> Option<f64> {
        if !(0.0..=(self.w - 1) as f64).contains(&x) || !(0.0..=(self.h - 1) as f64).contains(&y) {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        Some(
            (1.0 - fy) * ((1.0 - fx) * self.at(y0, x0) + fx * self.at(y0, x1))
                + fy * ((1.0 - fx) * self.at(y1, x0) + fx * self.at(y1, x1)),
        )
    }
}

/// Central-difference gradients, one-sided at the borders.
fn gradients(img: &Gray<'_>) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (img.h, img.w);
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            gx[y * w + x] = if w == 1 {
                0.0
            } else if x == 0 {
                img.at(y, 1) - img.at(y, 0)
            } else if x == w - 1 {
                img.at(y, w - 1) - img.at(y, w - 2)
            } else {
                0.5 * (img.at(y, x + 1) - img.at(y, x - 1))
            };
            gy[y * w + x] = if h == 1 {
                0.0
            } else if y == 0 {
                img.at(1, x) - img.at(0, x)
            } else if y == h - 1 {
                img.at(h - 1, x) - img.at(h - 2, x)
            } else {
                0.5 * (img.at(y + 1, x) - img.at(y - 1, x))
            };
        }
    }
    (gx, gy)
}

/// Partial-pivot Gaussian elimination; `None` on a (near-)singular system.
/// A zero right-hand side yields exact zeros.
fn solve8(mut a: [[f64; 8]; 8], mut b: [f64; 8]) -> Option<[f64; 8]> {
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    for col in 0..8 {
        let pivot_row = (col..8)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot_row][col].abs() < 1e-14 * scale {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..8 {
            let f = a[row][col] / a[col][col];
            for k in col..8 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 8];
    for col in (0..8).rev() {
        let mut acc = b[col];
        for k in col + 1..8 {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

fn as_gray(img: &Image) -> Result<Gray<'_>> {
    let (h, w, c) = img.shape();
    if c != 1 {
        return Err(Error::InvalidArgument(format!(
            "alignment needs single-channel images, got {c} channels"
        )));
    }
    Ok(Gray { h, w, px: img.pixels() })
}

fn render_warped(moving: &Gray<'_>, fixed: &Gray<'_>, h: &Homography) -> Vec<f64> {
    let mut out = Vec::with_capacity(fixed.h * fixed.w);
    for y in 0..fixed.h {
        for x in 0..fixed.w {
            let (u, v) = h.apply(x as f64, y as f64);
            out.push(moving.sample(u, v).unwrap_or_else(|| fixed.at(y, x)));
        }
    }
    out
}

/// Aligns `moving` onto `fixed`. A zero-variance image makes the objective
/// undefined; the identity transform is returned with `converged = false`.
pub fn ecc_align(moving: &Image, fixed: &Image, max_iters: usize, eps: f64) -> Result<EccResult> {
    let mv = as_gray(moving)?;
    let fx = as_gray(fixed)?;
    if (mv.h, mv.w) != (fx.h, fx.w) {
        return Err(Error::ShapeMismatch(format!(
            "moving is {}x{}, fixed is {}x{}",
            mv.h, mv.w, fx.h, fx.w
        )));
    }
    let n = fx.h * fx.w;
    let nf = n as f64;

    let fixed_mean = fx.px.iter().sum::<f64>() / nf;
    let template_zm: Vec<f64> = fx.px.iter().map(|&p| p - fixed_mean).collect();
    let fixed_var = template_zm.iter().map(|z| z * z).sum::<f64>();
    let moving_mean = mv.px.iter().sum::<f64>() / nf;
    let moving_var = mv.px.iter().map(|&p| (p - moving_mean) * (p - moving_mean)).sum::<f64>();
    if fixed_var == 0.0 || moving_var == 0.0 {
        let warped = render_warped(&mv, &fx, &Homography::IDENTITY);
        return Ok(EccResult {
            homography: Homography::IDENTITY,
            warped: Image::continuous(fx.h, fx.w, 1, warped)?,
            converged: false,
            iterations: 0,
        });
    }

    let (gx, gy) = gradients(&mv);
    let ggx = Gray { h: mv.h, w: mv.w, px: &gx };
    let ggy = Gray { h: mv.h, w: mv.w, px: &gy };

    let mut hom = Homography::IDENTITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut warped = vec![0.0; n];
    let mut jac = vec![[0.0f64; 8]; n];

    while iterations < max_iters {
        // warp intensities and gradients; out-of-bounds pixels copy the
        // fixed image (zero residual) and contribute no Jacobian
        for y in 0..fx.h {
            for x in 0..fx.w {
                let i = y * fx.w + x;
                let (xf, yf) = (x as f64, y as f64);
                let m = &hom.m;
                let den = m[6] * xf + m[7] * yf + 1.0;
                let u = (m[0] * xf + m[1] * yf + m[2]) / den;
                let v = (m[3] * xf + m[4] * yf + m[5]) / den;
                match mv.sample(u, v) {
                    Some(val) => {
                        warped[i] = val;
                        let dx = ggx.sample(u, v).unwrap_or(0.0);
                        let dy = ggy.sample(u, v).unwrap_or(0.0);
                        // d(u,v)/d(m0..m7) for the fixed point (x, y)
                        jac[i] = [
                            dx * xf / den,
                            dx * yf / den,
                            dx / den,
                            dy * xf / den,
                            dy * yf / den,
                            dy / den,
                            -(dx * u + dy * v) * xf / den,
                            -(dx * u + dy * v) * yf / den,
                        ];
                    }
                    None => {
                        warped[i] = fx.at(y, x);
                        jac[i] = [0.0; 8];
                    }
                }
            }
        }
        let warped_mean = warped.iter().sum::<f64>() / nf;

        let mut hessian = [[0.0f64; 8]; 8];
        let mut img_proj = [0.0f64; 8];
        let mut tmpl_proj = [0.0f64; 8];
        let mut norm_w2 = 0.0;
        let mut corr = 0.0;
        for i in 0..n {
            let iw = warped[i] - warped_mean;
            let it = template_zm[i];
            let row = &jac[i];
            for a in 0..8 {
                img_proj[a] += row[a] * iw;
                tmpl_proj[a] += row[a] * it;
                for b in a..8 {
                    hessian[a][b] += row[a] * row[b];
                }
            }
            norm_w2 += iw * iw;
            corr += it * iw;
        }
        for a in 0..8 {
            for b in 0..a {
                hessian[a][b] = hessian[b][a];
            }
        }

        let Some(q) = solve8(hessian, img_proj) else { break };
        let lambda_num = norm_w2 - dot8(&img_proj, &q);
        let lambda_den = corr - dot8(&tmpl_proj, &q);
        if lambda_den <= 0.0 {
            break; // images decorrelated under this warp
        }
        let lambda = lambda_num / lambda_den;
        let mut err_proj = [0.0f64; 8];
        for a in 0..8 {
            err_proj[a] = lambda * tmpl_proj[a] - img_proj[a];
        }
        let Some(delta) = solve8(hessian, err_proj) else { break };

        let mut next = hom;
        for a in 0..8 {
            next.m[a] += delta[a];
        }
        if next.det().abs() < 1e-12 {
            break; // refuse a degenerate transform
        }
        hom = next;
        iterations += 1;
        if dot8(&delta, &delta).sqrt() < eps {
            converged = true;
            break;
        }
    }

    let warped = render_warped(&mv, &fx, &hom);
    Ok(EccResult {
        homography: hom,
        warped: Image::continuous(fx.h, fx.w, 1, warped)?,
        converged,
        iterations,
    })
}

#[inline]
fn dot8(a: &[f64; 8], b: &[f64; 8]) -> f64 {
    (0..8).map(|i| a[i] * b[i]).sum()
}
