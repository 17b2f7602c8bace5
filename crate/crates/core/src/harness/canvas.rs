//! Non-blank canvases for unrecognizable-image experiments: procedural
//! patterned ("regular") canvases and uniform-noise ("irregular") ones.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::net::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Stripes,
    Checker,
    Radial,
}

impl std::str::FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stripes" => Ok(Pattern::Stripes),
            "checker" => Ok(Pattern::Checker),
            "radial" => Ok(Pattern::Radial),
            other => Err(Error::InvalidArgument(format!("unknown pattern {other:?}"))),
        }
    }
}

/// Uniform random noise over the integers 0..=255, independent per pixel,
/// deterministic per seed.
pub fn generate_irregular(seed: u64, h: usize, w: usize, c: usize) -> Image {
    let mut rng = seeded_rng(seed);
    let px: Vec<u8> = (0..h * w * c).map(|_| rng.random_range(0..=255)).collect();
    Image::from_u8(h, w, c, &px).expect("bytes are always valid")
}

/// Stripe period in pixels.
pub const STRIPE_PERIOD: usize = 4;
/// Checker cell edge in pixels.
pub const CHECKER_CELL: usize = 3;
/// Radial ring width in pixels.
pub const RING_WIDTH: f64 = 2.5;

const DARK: u8 = 25;
const BRIGHT: u8 = 230;

/// A deterministic patterned canvas; the seed shifts the pattern phase.
pub fn generate_regular(seed: u64, pattern: Pattern, h: usize, w: usize, c: usize) -> Image {
    let shift = (seed % 97) as usize;
    let mut px = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            let on = match pattern {
                Pattern::Stripes => (x + shift) % STRIPE_PERIOD < STRIPE_PERIOD / 2,
                Pattern::Checker => ((x + shift) / CHECKER_CELL + y / CHECKER_CELL).is_multiple_of(2),
                Pattern::Radial => {
                    let dy = y as f64 - h as f64 / 2.0;
                    let dx = x as f64 - w as f64 / 2.0 + shift as f64 * 0.1;
                    (((dx * dx + dy * dy).sqrt() / RING_WIDTH) as usize).is_multiple_of(2)
                }
            };
            let v = if on { BRIGHT } else { DARK };
            for _ in 0..c {
                px.push(v);
            }
        }
    }
    Image::from_u8(h, w, c, &px).expect("bytes are always valid")
}
