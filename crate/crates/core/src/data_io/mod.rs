//! Image buffers and the data pipeline: PGM/PPM files, x4 bicubic
//! downscaling, random patch pairs with flip/rotation augmentation, the
//! points CSV reader and a synthetic training corpus.

mod image;
mod patches;
mod points;
mod resample;
mod synth;

pub use image::{load_image, save_image};
pub use patches::{augment, augment_with, extract_patches, extract_patches_with, Augmentation, PatchPair};
pub use points::{parse_points_csv, read_points_csv};
pub use resample::{bicubic_downscale, keys_weights, nearest_upscale, KEYS_A};
pub use synth::{synthetic_corpus, write_corpus};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Scale factor between low- and high-resolution images.
pub const SCALE: usize = 4;

/// Planar image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::invalid(format!(
                "{channels}x{height}x{width} image needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("image value {v} outside [0, 1]")));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        (self.channels, self.height, self.width) == (other.channels, other.height, other.width)
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// One channel as a row-major plane.
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::invalid(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        Self::from_fn(self.channels, height, width, |c, y, x| self.get(c, top + y, left + x))
    }

    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        Self::from_fn(self.channels, self.height, w, |c, y, x| self.get(c, y, w - 1 - x))
            .expect("flip preserves validity")
    }

    /// Counter-clockwise quarter turn; swaps height and width.
    pub fn rotate90(&self) -> Self {
        let w = self.width;
        Self::from_fn(self.channels, w, self.height, |c, y, x| self.get(c, x, w - 1 - y))
            .expect("rotation preserves validity")
    }

    /// Builds an image from tensor values, clamping into `[0, 1]`.
    pub fn from_tensor_sample(t: &Tensor, index: usize) -> Result<Self> {
        if t.rank() != 4 || index >= t.shape()[0] {
            return Err(Error::invalid(format!(
                "cannot take sample {index} from tensor of shape {:?}",
                t.shape()
            )));
        }
        let (c, h, w) = (t.shape()[1], t.shape()[2], t.shape()[3]);
        let n = c * h * w;
        let data = t.data()[index * n..(index + 1) * n].iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self::new(c, h, w, data)
    }
}

/// Stacks same-shaped images into an NCHW tensor.
pub fn images_to_tensor(images: &[&ImageBuffer]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::invalid("cannot batch zero images"))?;
    let mut data = Vec::with_capacity(images.len() * first.data.len());
    for img in images {
        if !img.same_shape(first) {
            return Err(Error::ShapeMismatch {
                op: "batch",
                lhs: vec![first.channels, first.height, first.width],
                rhs: vec![img.channels, img.height, img.width],
            });
        }
        data.extend_from_slice(&img.data);
    }
    Tensor::new(vec![images.len(), first.channels, first.height, first.width], data)
}
