use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bicubic_downscale, ImageBuffer, SCALE};
use crate::error::{Error, Result};

/// A high-resolution patch and its x4 downscaled counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub lr: ImageBuffer,
    pub hr: ImageBuffer,
    pub source: usize,
    /// Top-left HR coordinate as `(row, column)`.
    pub origin: (usize, usize),
}

/// Draws `count` random HR crops of side `patch` from `img`.
pub fn extract_patches(img: &ImageBuffer, patch: usize, count: usize, seed: u64) -> Result<Vec<PatchPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    extract_patches_with(img, 0, patch, count, &mut rng)
}

pub fn extract_patches_with<R: Rng + ?Sized>(
    img: &ImageBuffer,
    source: usize,
    patch: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<PatchPair>> {
    if patch == 0 || patch % SCALE != 0 {
        return Err(Error::invalid(format!(
            "HR patch size {patch} must be a positive multiple of {SCALE}"
        )));
    }
    if patch > img.height() || patch > img.width() {
        return Err(Error::invalid(format!(
            "patch {patch} larger than {}x{} image",
            img.height(),
            img.width()
        )));
    }
    (0..count)
        .map(|_| {
            let top = rng.random_range(0..=img.height() - patch);
            let left = rng.random_range(0..=img.width() - patch);
            let hr = img.crop(top, left, patch, patch)?;
            let lr = bicubic_downscale(&hr, SCALE)?;
            Ok(PatchPair {
                lr,
                hr,
                source,
                origin: (top, left),
            })
        })
        .collect()
}

/// A horizontal flip followed by `quarter_turns` counter-clockwise rotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augmentation {
    pub flip: bool,
    pub quarter_turns: u8,
}

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation {
        flip: false,
        quarter_turns: 0,
    };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            flip: rng.random_bool(0.5),
            quarter_turns: rng.random_range(0..4),
        }
    }

    pub fn apply(&self, img: &ImageBuffer) -> Result<ImageBuffer> {
        if self.quarter_turns % 2 == 1 && img.height() != img.width() {
            return Err(Error::invalid(format!(
                "odd rotation of non-square {}x{} patch",
                img.height(),
                img.width()
            )));
        }
        let mut out = if self.flip { img.flip_horizontal() } else { img.clone() };
        for _ in 0..self.quarter_turns % 4 {
            out = out.rotate90();
        }
        Ok(out)
    }

    pub fn apply_pair(&self, pair: &PatchPair) -> Result<PatchPair> {
        Ok(PatchPair {
            lr: self.apply(&pair.lr)?,
            hr: self.apply(&pair.hr)?,
            source: pair.source,
            origin: pair.origin,
        })
    }
}

pub fn augment(pair: &PatchPair, seed: u64) -> Result<PatchPair> {
    augment_with(pair, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn augment_with<R: Rng + ?Sized>(pair: &PatchPair, rng: &mut R) -> Result<PatchPair> {
    Augmentation::sample(rng).apply_pair(pair)
}
