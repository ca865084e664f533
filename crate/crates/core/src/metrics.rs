//! Full-reference image quality: PSNR, SSIM and GMSD.
//!
//! Multi-channel images are scored per channel and averaged. SSIM uses only
//! windows lying fully inside the image.

use crate::data_io::ImageBuffer;
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// GMSD stability constant for `[0, 1]` intensities.
pub const GMSD_C: f64 = 170.0 / (255.0 * 255.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// Decibels; `f64::INFINITY` for identical images.
    pub psnr: f64,
    pub ssim: f64,
    pub gmsd: f64,
}

impl MetricReport {
    pub fn compute(a: &ImageBuffer, b: &ImageBuffer) -> Result<Self> {
        Ok(Self {
            psnr: psnr(a, b, 1.0)?,
            ssim: ssim(a, b)?,
            gmsd: gmsd(a, b)?,
        })
    }
}

fn check_shapes(a: &ImageBuffer, b: &ImageBuffer, op: &'static str) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            op,
            lhs: vec![a.channels(), a.height(), a.width()],
            rhs: vec![b.channels(), b.height(), b.width()],
        })
    }
}

pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, peak: f64) -> Result<f64> {
    check_shapes(a, b, "psnr")?;
    if !(peak > 0.0) {
        return Err(Error::invalid(format!("peak must be positive, got {peak}")));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    Ok(psnr_from_mse(mse, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering of a `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(j, kv)| kv * rows[(y + j) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(a, h, w, &k);
    let mu_b = filter_valid(b, h, w, &k);
    let e_aa = filter_valid(&sq(a, a), h, w, &k);
    let e_bb = filter_valid(&sq(b, b), h, w, &k);
    let e_ab = filter_valid(&sq(a, b), h, w, &k);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2))
        })
        .sum();
    total / mu_a.len() as f64
}

pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_shapes(a, b, "ssim")?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let c = a.channels();
    let sum: f64 = (0..c)
        .map(|ch| ssim_plane(a.plane(ch), b.plane(ch), a.height(), a.width()))
        .sum();
    Ok(sum / c as f64)
}

/// 2x2 average pooling; an odd trailing row or column is dropped.
fn pool2(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            let at = |dy: usize, dx: usize| plane[(2 * y + dy) * w + 2 * x + dx];
            out.push((at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0);
        }
    }
    (out, oh, ow)
}

/// Prewitt gradient magnitude (kernels scaled by 1/3) with replicated borders.
fn gradient_magnitude(p: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        p[y * w + x]
    };
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for d in -1..=1 {
                gx += at(y + d, x + 1) - at(y + d, x - 1);
                gy += at(y + 1, x + d) - at(y - 1, x + d);
            }
            let (gx, gy) = (gx / 3.0, gy / 3.0);
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

fn gmsd_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let (pa, ph, pw) = pool2(a, h, w);
    let (pb, _, _) = pool2(b, h, w);
    let ma = gradient_magnitude(&pa, ph, pw);
    let mb = gradient_magnitude(&pb, ph, pw);
    let map: Vec<f64> = ma
        .iter()
        .zip(&mb)
        .map(|(x, y)| (2.0 * x * y + GMSD_C) / (x * x + y * y + GMSD_C))
        .collect();
    let n = map.len() as f64;
    let mean = map.iter().sum::<f64>() / n;
    if n < 2.0 {
        return 0.0;
    }
    (map.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn gmsd(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_shapes(a, b, "gmsd")?;
    if a.height() < 4 || a.width() < 4 {
        return Err(Error::invalid(format!(
            "gmsd needs at least 4x4, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let c = a.channels();
    let sum: f64 = (0..c)
        .map(|ch| gmsd_plane(a.plane(ch), b.plane(ch), a.height(), a.width()))
        .sum();
    Ok(sum / c as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(c: usize, h: usize, w: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(c, h, w, |_, _, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = ImageBuffer::filled(1, 4, 4, 0.0).unwrap();
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        // every pixel off by one grey level on the 255 scale
        let lo = ImageBuffer::filled(1, 4, 4, 100.0 / 255.0).unwrap();
        let hi = ImageBuffer::filled(1, 4, 4, 101.0 / 255.0).unwrap();
        let db = psnr(&lo, &hi, 1.0).unwrap();
        assert!((db - 20.0 * 255f64.log10()).abs() < 1e-9);
        assert!((db - 48.1308).abs() < 1e-4);
        let half = ImageBuffer::filled(1, 4, 4, 0.5).unwrap();
        assert!((psnr(&a, &half, 1.0).unwrap() - 6.0206).abs() < 1e-4);
        assert!((psnr_from_mse(1.0, 255.0) - 48.1308).abs() < 1e-4);
        assert!(psnr(&a, &half, 0.0).is_err());
    }

    #[test]
    fn psnr_decreases_with_error() {
        let a = ImageBuffer::filled(1, 4, 4, 0.2).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..10 {
            let b = ImageBuffer::filled(1, 4, 4, 0.2 + 0.05 * k as f64).unwrap();
            let v = psnr(&a, &b, 1.0).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn identities_are_exact() {
        for seed in 0..5 {
            let a = random_image(1 + 2 * (seed as usize % 2), 24, 20, seed);
            assert_eq!(ssim(&a, &a).unwrap(), 1.0);
            assert_eq!(gmsd(&a, &a).unwrap(), 0.0);
        }
    }

    #[test]
    fn inverted_image_is_anticorrelated() {
        let a = random_image(1, 32, 32, 11);
        let b = ImageBuffer::from_fn(1, 32, 32, |c, y, x| 1.0 - a.get(c, y, x)).unwrap();
        assert!(ssim(&a, &b).unwrap() < 0.0);
    }

    #[test]
    fn constant_images_have_zero_gmsd() {
        let a = ImageBuffer::filled(1, 8, 8, 0.2).unwrap();
        let b = ImageBuffer::filled(1, 8, 8, 0.9).unwrap();
        assert_eq!(gmsd(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn size_and_shape_errors() {
        let small = ImageBuffer::filled(1, 10, 12, 0.5).unwrap();
        assert!(ssim(&small, &small).is_err());
        let tiny = ImageBuffer::filled(1, 3, 8, 0.5).unwrap();
        assert!(gmsd(&tiny, &tiny).is_err());
        let other = ImageBuffer::filled(1, 12, 10, 0.5).unwrap();
        assert!(matches!(psnr(&small, &other, 1.0), Err(Error::ShapeMismatch { .. })));
        assert!(MetricReport::compute(&small, &other).is_err());
    }

    #[test]
    fn gaussian_window_is_normalized() {
        let k = gaussian_window();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[10]);
    }

    #[test]
    fn ssim_matches_direct_window_sum() {
        // Brute-force 2-D window evaluation at one location.
        let a = random_image(1, 11, 11, 5);
        let b = random_image(1, 11, 11, 6);
        let k = gaussian_window();
        let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for y in 0..11 {
            for x in 0..11 {
                let wt = k[y] * k[x];
                let (p, q) = (a.get(0, y, x), b.get(0, y, x));
                ma += wt * p;
                mb += wt * q;
                aa += wt * p * p;
                bb += wt * q * q;
                ab += wt * p * q;
            }
        }
        let (c1, c2) = (1e-4, 9e-4);
        let expected = ((2.0 * ma * mb + c1) * (2.0 * (ab - ma * mb) + c2))
            / ((ma * ma + mb * mb + c1) * (aa - ma * ma + bb - mb * mb + c2));
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn symmetric_bounded_and_flip_invariant(seed: u64, c in prop::sample::select(vec![1usize, 3])) {
            let a = random_image(c, 16, 18, seed);
            let b = random_image(c, 16, 18, seed.wrapping_add(1));
            let ab = MetricReport::compute(&a, &b).unwrap();
            let ba = MetricReport::compute(&b, &a).unwrap();
            prop_assert_eq!(ab.psnr, ba.psnr);
            prop_assert!((ab.ssim - ba.ssim).abs() < 1e-15);
            prop_assert!((ab.gmsd - ba.gmsd).abs() < 1e-15);
            prop_assert!((-1.0..=1.0).contains(&ab.ssim));
            prop_assert!(ab.gmsd >= 0.0);
            let f = MetricReport::compute(&a.flip_horizontal(), &b.flip_horizontal()).unwrap();
            prop_assert!((f.psnr - ab.psnr).abs() < 1e-12);
            prop_assert!((f.ssim - ab.ssim).abs() < 1e-12);
            prop_assert!((f.gmsd - ab.gmsd).abs() < 1e-12);
        }
    }
}
