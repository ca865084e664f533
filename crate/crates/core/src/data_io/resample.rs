use super::ImageBuffer;
use crate::error::{Error, Result};

/// Keys cubic convolution parameter.
pub const KEYS_A: f64 = -0.5;

fn keys(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Weights of the four taps `floor(s)-1 ..= floor(s)+2` for a sample at
/// fractional offset `frac = s - floor(s)`.
pub fn keys_weights(frac: f64) -> [f64; 4] {
    [keys(1.0 + frac), keys(frac), keys(1.0 - frac), keys(2.0 - frac)]
}

/// Resamples one row/column of length `len` at output positions
/// `(o + 0.5) * factor - 0.5`, clamping taps at the edges.
fn taps(len: usize, factor: usize) -> Vec<([usize; 4], [f64; 4])> {
    (0..len / factor)
        .map(|o| {
            let s = (o as f64 + 0.5) * factor as f64 - 0.5;
            let base = s.floor();
            let w = keys_weights(s - base);
            let mut idx = [0usize; 4];
            for (j, slot) in idx.iter_mut().enumerate() {
                let i = base as isize - 1 + j as isize;
                *slot = i.clamp(0, len as isize - 1) as usize;
            }
            (idx, w)
        })
        .collect()
}

/// Separable Keys bicubic downscaling by an integer factor, with edge
/// clamping and the result clamped into `[0, 1]`.
pub fn bicubic_downscale(img: &ImageBuffer, factor: usize) -> Result<ImageBuffer> {
    if factor == 0 || img.height() % factor != 0 || img.width() % factor != 0 {
        return Err(Error::invalid(format!(
            "{}x{} image is not divisible by factor {factor}",
            img.height(),
            img.width()
        )));
    }
    let (h, w) = (img.height(), img.width());
    let (oh, ow) = (h / factor, w / factor);
    let col_taps = taps(w, factor);
    let row_taps = taps(h, factor);

    let mut out = Vec::with_capacity(img.channels() * oh * ow);
    let mut horizontal = vec![0.0; h * ow];
    for c in 0..img.channels() {
        let plane = img.plane(c);
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for (x, (idx, wt)) in col_taps.iter().enumerate() {
                horizontal[y * ow + x] = (0..4).map(|j| wt[j] * row[idx[j]]).sum();
            }
        }
        for (idx, wt) in &row_taps {
            for x in 0..ow {
                let v: f64 = (0..4).map(|j| wt[j] * horizontal[idx[j] * ow + x]).sum();
                out.push(v.clamp(0.0, 1.0));
            }
        }
    }
    ImageBuffer::new(img.channels(), oh, ow, out)
}

/// Pixel replication by an integer factor.
pub fn nearest_upscale(img: &ImageBuffer, factor: usize) -> ImageBuffer {
    ImageBuffer::from_fn(img.channels(), img.height() * factor, img.width() * factor, |c, y, x| {
        img.get(c, y / factor, x / factor)
    })
    .expect("upscaling preserves validity")
}
