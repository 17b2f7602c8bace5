//! Pixel grids on the `[0,255]` scale.
//!
//! The stored form of every image is discrete (integer pixels in `[0,255]`);
//! attacks temporarily work on a continuous twin with real-valued pixels on
//! the same scale.

use std::path::Path;

use crate::error::{Error, Result};

/// Whether pixel values are integers in `[0,255]` or arbitrary reals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelRepr {
    Discrete,
    Continuous,
}

/// An H×W×C pixel grid, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    repr: PixelRepr,
    data: Vec<f64>,
}

impl Image {
    /// Builds a discrete image, validating that every entry is an integer in
    /// `[0,255]`.
    pub fn discrete(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::check_len(height, width, channels, data.len())?;
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() || v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "discrete image entry {i} is {v}, expected an integer in [0,255]"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            repr: PixelRepr::Discrete,
            data,
        })
    }

    /// Builds a continuous image from real-valued pixels on the 0..255 scale.
    pub fn continuous(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        Self::check_len(height, width, channels, data.len())?;
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("image entry {i} is {v}")));
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            repr: PixelRepr::Continuous,
            data,
        })
    }

    /// Builds a discrete image straight from bytes.
    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::check_len(height, width, channels, bytes.len())?;
        Ok(Self {
            height,
            width,
            channels,
            repr: PixelRepr::Discrete,
            data: bytes.iter().map(|&b| f64::from(b)).collect(),
        })
    }

    fn check_len(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidArgument(
                "image dimensions must be positive".into(),
            ));
        }
        let expect = height * width * channels;
        if len != expect {
            return Err(Error::ShapeMismatch(format!(
                "image data has {len} entries, {height}x{width}x{channels} needs {expect}"
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn repr(&self) -> PixelRepr {
        self.repr
    }

    pub fn is_discrete(&self) -> bool {
        self.repr == PixelRepr::Discrete
    }

    /// Flat pixel data, row-major with interleaved channels.
    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Pixel bytes of a discrete image.
    pub fn to_u8(&self) -> Result<Vec<u8>> {
        if !self.is_discrete() {
            return Err(Error::InvalidArgument(
                "continuous image has no byte form".into(),
            ));
        }
        Ok(self.data.iter().map(|&v| v as u8).collect())
    }

    /// The same pixels retagged as continuous.
    pub fn into_continuous(mut self) -> Self {
        self.repr = PixelRepr::Continuous;
        self
    }

    /// Writes the image as an 8-bit PNG (grayscale or RGB).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.to_u8()?;
        let (h, w) = (self.height as u32, self.width as u32);
        match self.channels {
            1 => {
                let buf = image::GrayImage::from_raw(w, h, bytes)
                    .expect("buffer length was validated");
                buf.save(path)?;
            }
            3 => {
                let buf = image::RgbImage::from_raw(w, h, bytes)
                    .expect("buffer length was validated");
                buf.save(path)?;
            }
            c => {
                return Err(Error::InvalidArgument(format!(
                    "cannot encode a {c}-channel image as PNG"
                )))
            }
        }
        Ok(())
    }

    /// Reads an 8-bit PNG as a discrete image, preserving its channel count
    /// (grayscale or RGB).
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?;
        match img {
            image::DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                Image::from_u8(h as usize, w as usize, 1, g.as_raw())
            }
            image::DynamicImage::ImageRgb8(rgb) => {
                let (w, h) = rgb.dimensions();
                Image::from_u8(h as usize, w as usize, 3, rgb.as_raw())
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                Image::from_u8(h as usize, w as usize, 3, rgb.as_raw())
            }
        }
    }
}
