use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{save_image, ImageBuffer};
use crate::error::{Error, Result};

/// Seeded grayscale images made of a tilted gradient, a low-frequency
/// ripple, a few straight step edges and one disc.
pub fn synthetic_corpus(count: usize, size: usize, seed: u64) -> Result<Vec<ImageBuffer>> {
    if size == 0 {
        return Err(Error::invalid("synthetic image size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| synthetic_image(size, &mut rng)).collect()
}

fn synthetic_image(size: usize, rng: &mut ChaCha8Rng) -> Result<ImageBuffer> {
    let s = size as f64;
    let base = rng.random_range(0.3..0.7);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let slope = rng.random_range(0.1..0.35);
    let (gx, gy) = (angle.cos() * slope / s, angle.sin() * slope / s);

    let ripple_amp = rng.random_range(0.03..0.1);
    let (fx, fy) = (rng.random_range(0.5..2.5), rng.random_range(0.5..2.5));
    let phase = rng.random_range(0.0..std::f64::consts::TAU);

    let edges: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(2..=4))
        .map(|_| {
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            let offset = rng.random_range(0.25..0.75) * s;
            let step = rng.random_range(0.12..0.3) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (t.cos(), t.sin(), offset, step)
        })
        .collect();

    let (cx, cy) = (rng.random_range(0.2..0.8) * s, rng.random_range(0.2..0.8) * s);
    let radius = rng.random_range(0.1..0.25) * s;
    let disc = rng.random_range(-0.25..0.25);

    ImageBuffer::from_fn(1, size, size, |_, y, x| {
        let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
        let (u, v) = (xf - s / 2.0, yf - s / 2.0);
        let mut val = base + gx * u + gy * v;
        val += ripple_amp * (std::f64::consts::TAU * (fx * xf + fy * yf) / s + phase).sin();
        for &(nx, ny, offset, step) in &edges {
            if nx * xf + ny * yf > offset {
                val += step;
            }
        }
        if (xf - cx).powi(2) + (yf - cy).powi(2) < radius * radius {
            val += disc;
        }
        val.clamp(0.02, 0.98)
    })
}

/// Writes the corpus as `synth_XX.pgm` files and returns their paths.
pub fn write_corpus(dir: impl AsRef<Path>, count: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    synthetic_corpus(count, size, seed)?
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let p = dir.join(format!("synth_{i:02}.pgm"));
            save_image(img, &p)?;
            Ok(p)
        })
        .collect()
}
