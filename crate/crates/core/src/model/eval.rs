use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::Dataset;
use super::nets::GeneratorNet;
use crate::data_io::{bicubic_downscale, extract_patches_with, images_to_tensor, nearest_upscale, ImageBuffer, SCALE};
use crate::error::{Error, Result};
use crate::metrics::{psnr, MetricReport};

/// Runs the generator on one low-resolution image.
pub fn super_resolve(g: &GeneratorNet, lr: &ImageBuffer) -> Result<ImageBuffer> {
    let out = g.infer(&images_to_tensor(&[lr])?)?;
    ImageBuffer::from_tensor_sample(&out, 0)
}

/// Crops `hr` to multiples of 4, downscales it, super-resolves the result
/// and scores it against the crop.
pub fn evaluate_image(g: &GeneratorNet, hr: &ImageBuffer) -> Result<MetricReport> {
    let (h, w) = (hr.height() / SCALE * SCALE, hr.width() / SCALE * SCALE);
    if h == 0 || w == 0 {
        return Err(Error::invalid(format!(
            "{}x{} image too small to evaluate",
            hr.height(),
            hr.width()
        )));
    }
    let hr = hr.crop(0, 0, h, w)?;
    let sr = super_resolve(g, &bicubic_downscale(&hr, SCALE)?)?;
    MetricReport::compute(&sr, &hr)
}

/// Metric means over a list of images.
pub fn evaluate_images(g: &GeneratorNet, images: &[ImageBuffer]) -> Result<MetricReport> {
    if images.is_empty() {
        return Err(Error::invalid("evaluation list is empty"));
    }
    let mut total = MetricReport {
        psnr: 0.0,
        ssim: 0.0,
        gmsd: 0.0,
    };
    for img in images {
        let r = evaluate_image(g, img)?;
        total.psnr += r.psnr;
        total.ssim += r.ssim;
        total.gmsd += r.gmsd;
    }
    let n = images.len() as f64;
    Ok(MetricReport {
        psnr: total.psnr / n,
        ssim: total.ssim / n,
        gmsd: total.gmsd / n,
    })
}

/// Mean PSNR of the generator and of nearest-neighbour upscaling on the
/// same randomly drawn training patches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchPsnr {
    pub generator: f64,
    pub nearest: f64,
}

impl PatchPsnr {
    pub fn gain(&self) -> f64 {
        self.generator - self.nearest
    }
}

pub fn patch_psnr(g: &GeneratorNet, data: &Dataset, patch: usize, per_image: usize, seed: u64) -> Result<PatchPsnr> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut gen_sum, mut nn_sum, mut n) = (0.0, 0.0, 0usize);
    for (i, img) in data.images().iter().enumerate() {
        for pair in extract_patches_with(img, i, patch, per_image, &mut rng)? {
            gen_sum += psnr(&super_resolve(g, &pair.lr)?, &pair.hr, 1.0)?;
            nn_sum += psnr(&nearest_upscale(&pair.lr, SCALE), &pair.hr, 1.0)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("no patches drawn"));
    }
    Ok(PatchPsnr {
        generator: gen_sum / n as f64,
        nearest: nn_sum / n as f64,
    })
}
