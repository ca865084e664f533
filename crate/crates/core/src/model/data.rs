use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::autodiff::Tensor;
use crate::data_io::{augment_with, extract_patches_with, images_to_tensor, load_image, ImageBuffer};
use crate::error::{Error, Result};

/// Training images, all with the same channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<ImageBuffer>,
}

impl Dataset {
    pub fn new(images: Vec<ImageBuffer>) -> Result<Self> {
        let first = images.first().ok_or_else(|| Error::invalid("dataset is empty"))?;
        if let Some(img) = images.iter().find(|i| i.channels() != first.channels()) {
            return Err(Error::invalid(format!(
                "dataset mixes {} and {} channel images",
                first.channels(),
                img.channels()
            )));
        }
        Ok(Self { images })
    }

    /// Loads a single image file, or every `.pgm`/`.ppm` file of a
    /// directory in file-name order.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
        let files = if meta.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("ppm"))
                })
                .collect();
            files.sort();
            files
        } else {
            vec![path.to_path_buf()]
        };
        if files.is_empty() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: "no .pgm or .ppm images found".into(),
            });
        }
        let images = files.iter().map(load_image).collect::<Result<Vec<_>>>()?;
        Self::new(images)
    }

    pub fn images(&self) -> &[ImageBuffer] {
        &self.images
    }

    pub fn channels(&self) -> usize {
        self.images[0].channels()
    }
}

/// Low- and high-resolution NCHW tensors of one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub lr: Tensor,
    pub hr: Tensor,
}

/// Draws `size` augmented patch pairs, each from a uniformly chosen image.
pub fn sample_batch<R: Rng + ?Sized>(data: &Dataset, size: usize, patch: usize, rng: &mut R) -> Result<Batch> {
    let mut pairs = Vec::with_capacity(size);
    for _ in 0..size {
        let idx = rng.random_range(0..data.images.len());
        let mut drawn = extract_patches_with(&data.images[idx], idx, patch, 1, rng)?;
        pairs.push(augment_with(&drawn.remove(0), rng)?);
    }
    let lr: Vec<&ImageBuffer> = pairs.iter().map(|p| &p.lr).collect();
    let hr: Vec<&ImageBuffer> = pairs.iter().map(|p| &p.hr).collect();
    Ok(Batch {
        lr: images_to_tensor(&lr)?,
        hr: images_to_tensor(&hr)?,
    })
}
