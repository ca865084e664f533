//! Stride-1 2-D convolution kernels over NCHW tensors with symmetric zero
//! padding. Loops are ordered so the innermost work is a contiguous row
//! update.

use super::Tensor;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Output coordinates `o` whose input tap `o + k - pad` lands in `[0, len)`.
    fn valid_range(len: usize, out_len: usize, k: usize, pad: usize) -> (usize, usize) {
        let lo = pad.saturating_sub(k);
        let hi = (len + pad).saturating_sub(k).min(out_len);
        (lo, hi.max(lo))
    }
}

pub(crate) fn forward(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, g: &ConvGeometry) -> Tensor {
    let mut out = vec![0.0; g.n * g.c_out * g.out_h * g.out_w];
    let x = input.data();
    let wt = weight.data();
    let plane_in = g.h * g.w;
    let plane_out = g.out_h * g.out_w;
    for n in 0..g.n {
        for o in 0..g.c_out {
            let dst = &mut out[(n * g.c_out + o) * plane_out..][..plane_out];
            if let Some(b) = bias {
                dst.fill(b.data()[o]);
            }
            for c in 0..g.c_in {
                let src = &x[(n * g.c_in + c) * plane_in..][..plane_in];
                for ky in 0..g.kh {
                    let (y_lo, y_hi) = ConvGeometry::valid_range(g.h, g.out_h, ky, g.pad);
                    for kx in 0..g.kw {
                        let k = wt[((o * g.c_in + c) * g.kh + ky) * g.kw + kx];
                        let (x_lo, x_hi) = ConvGeometry::valid_range(g.w, g.out_w, kx, g.pad);
                        if x_lo >= x_hi {
                            continue;
                        }
                        for oy in y_lo..y_hi {
                            let iy = oy + ky - g.pad;
                            let row_out = &mut dst[oy * g.out_w + x_lo..oy * g.out_w + x_hi];
                            let ix0 = x_lo + kx - g.pad;
                            let row_in = &src[iy * g.w + ix0..iy * g.w + ix0 + (x_hi - x_lo)];
                            for (a, b) in row_out.iter_mut().zip(row_in) {
                                *a += k * b;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.n, g.c_out, g.out_h, g.out_w], out).expect("conv output shape")
}

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Returns (grad_input, grad_weight, grad_bias); each is computed only when
/// requested.
pub(crate) fn backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    g: &ConvGeometry,
    want_input: bool,
    want_weight: bool,
    want_bias: bool,
) -> (Option<Tensor>, Option<Tensor>, Option<Tensor>) {
    let x = input.data();
    let wt = weight.data();
    let go = grad_out.data();
    let plane_in = g.h * g.w;
    let plane_out = g.out_h * g.out_w;

    let mut gi = want_input.then(|| vec![0.0; x.len()]);
    let mut gw = want_weight.then(|| vec![0.0; wt.len()]);
    let mut gb = want_bias.then(|| vec![0.0; g.c_out]);

    for n in 0..g.n {
        for o in 0..g.c_out {
            let src_g = &go[(n * g.c_out + o) * plane_out..][..plane_out];
            if let Some(gb) = gb.as_mut() {
                gb[o] += src_g.iter().sum::<f64>();
            }
            for c in 0..g.c_in {
                let in_off = (n * g.c_in + c) * plane_in;
                for ky in 0..g.kh {
                    let (y_lo, y_hi) = ConvGeometry::valid_range(g.h, g.out_h, ky, g.pad);
                    for kx in 0..g.kw {
                        let widx = ((o * g.c_in + c) * g.kh + ky) * g.kw + kx;
                        let (x_lo, x_hi) = ConvGeometry::valid_range(g.w, g.out_w, kx, g.pad);
                        if x_lo >= x_hi {
                            continue;
                        }
                        let len = x_hi - x_lo;
                        let ix0 = x_lo + kx - g.pad;
                        let k = wt[widx];
                        let mut acc = 0.0;
                        for oy in y_lo..y_hi {
                            let iy = oy + ky - g.pad;
                            let row_g = &src_g[oy * g.out_w + x_lo..][..len];
                            let start = in_off + iy * g.w + ix0;
                            if gw.is_some() {
                                let row_in = &x[start..start + len];
                                acc += dot(row_g, row_in);
                            }
                            if let Some(gi) = gi.as_mut() {
                                for (a, b) in gi[start..start + len].iter_mut().zip(row_g) {
                                    *a += k * b;
                                }
                            }
                        }
                        if let Some(gw) = gw.as_mut() {
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
    }
    (
        gi.map(|d| Tensor::new(input.shape().to_vec(), d).expect("grad input shape")),
        gw.map(|d| Tensor::new(weight.shape().to_vec(), d).expect("grad weight shape")),
        gb.map(|d| Tensor::new(vec![g.c_out], d).expect("grad bias shape")),
    )
}
