//! Adversarial, pixel and feature losses built on the tape. Every loss
//! reduces with a mean so its scale does not depend on the batch size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;
pub const LEAKY_SLOPE: f64 = 0.2;

fn nonempty(tape: &Tape, v: Var, what: &str) -> Result<()> {
    if tape.value(v).numel() == 0 {
        Err(Error::invalid(format!("{what}: empty batch")))
    } else {
        Ok(())
    }
}

/// `-mean(log(clamp(p)))`
fn neg_mean_log(tape: &mut Tape, p: Var) -> Result<Var> {
    let p = tape.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
    let lp = tape.log(p)?;
    let m = tape.mean(lp)?;
    tape.neg(m)
}

fn one_minus(tape: &mut Tape, p: Var) -> Result<Var> {
    let n = tape.neg(p)?;
    tape.add_scalar(n, 1.0)
}

/// Discriminator loss on raw logits:
/// `-mean log σ(real) - mean log(1 - σ(fake))`.
pub fn disc_loss(tape: &mut Tape, logits_real: Var, logits_fake: Var) -> Result<Var> {
    nonempty(tape, logits_real, "disc_loss")?;
    nonempty(tape, logits_fake, "disc_loss")?;
    let pr = tape.sigmoid(logits_real)?;
    let pf = tape.sigmoid(logits_fake)?;
    let qf = one_minus(tape, pf)?;
    let a = neg_mean_log(tape, pr)?;
    let b = neg_mean_log(tape, qf)?;
    tape.add(a, b)
}

/// Non-saturating generator loss `-mean log σ(fake)`.
pub fn adv_loss_standard_g(tape: &mut Tape, logits_fake: Var) -> Result<Var> {
    nonempty(tape, logits_fake, "adv_loss_standard_g")?;
    let p = tape.sigmoid(logits_fake)?;
    neg_mean_log(tape, p)
}

/// `σ(a - mean(b))`
fn relativistic_prob(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let mb = tape.mean(b)?;
    let d = tape.sub(a, mb)?;
    tape.sigmoid(d)
}

/// Relativistic-average generator loss:
/// `-mean log(1 - D(real, fake)) - mean log D(fake, real)` with
/// `D(a, b) = σ(a - mean b)`.
pub fn adv_loss_relativistic_g(tape: &mut Tape, logits_real: Var, logits_fake: Var) -> Result<Var> {
    nonempty(tape, logits_real, "adv_loss_relativistic_g")?;
    let (sr, sf) = (tape.value(logits_real).shape().to_vec(), tape.value(logits_fake).shape().to_vec());
    if sr != sf {
        return Err(Error::ShapeMismatch {
            op: "adv_loss_relativistic_g",
            lhs: sr,
            rhs: sf,
        });
    }
    let d_real = relativistic_prob(tape, logits_real, logits_fake)?;
    let d_fake = relativistic_prob(tape, logits_fake, logits_real)?;
    let q_real = one_minus(tape, d_real)?;
    let a = neg_mean_log(tape, q_real)?;
    let b = neg_mean_log(tape, d_fake)?;
    tape.add(a, b)
}

fn check_norm(p: u32) -> Result<()> {
    if p == 1 || p == 2 {
        Ok(())
    } else {
        Err(Error::invalid(format!("norm p must be 1 or 2, got {p}")))
    }
}

fn mean_power_distance(tape: &mut Tape, op: &'static str, a: Var, b: Var, p: u32) -> Result<Var> {
    check_norm(p)?;
    let (sa, sb) = (tape.value(a).shape().to_vec(), tape.value(b).shape().to_vec());
    if sa != sb {
        return Err(Error::ShapeMismatch { op, lhs: sa, rhs: sb });
    }
    let d = tape.sub(a, b)?;
    let e = if p == 1 { tape.abs(d)? } else { tape.square(d)? };
    tape.mean(e)
}

/// `mean |fake - real|^p` for `p` in {1, 2}.
pub fn pixel_loss(tape: &mut Tape, fake: Var, real: Var, p: u32) -> Result<Var> {
    mean_power_distance(tape, "pixel_loss", fake, real, p)
}

/// Where features are read from the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTap {
    PreActivation,
    #[default]
    PostActivation,
}

/// Output channels of the three frozen 3x3 convolutions.
pub const FEATURE_WIDTHS: [usize; 3] = [8, 16, 16];

/// Frozen, seeded random convolution stack standing in for a pretrained
/// perceptual network.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    weights: Vec<Tensor>,
    tap: FeatureTap,
}

impl FeatureExtractor {
    pub fn new(in_channels: usize, seed: u64, tap: FeatureTap) -> Result<Self> {
        if in_channels == 0 {
            return Err(Error::invalid("feature extractor needs at least one input channel"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c_in = in_channels;
        let weights = FEATURE_WIDTHS
            .iter()
            .map(|&c_out| {
                let fan_in = (c_in * 9) as f64;
                let w = Tensor::randn(&[c_out, c_in, 3, 3], 1.0 / fan_in.sqrt(), &mut rng);
                c_in = c_out;
                w
            })
            .collect();
        Ok(Self { weights, tap })
    }

    pub fn in_channels(&self) -> usize {
        self.weights[0].shape()[1]
    }

    pub fn tap(&self) -> FeatureTap {
        self.tap
    }

    /// The kernels in OIHW layout, first layer first.
    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn features(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let s = tape.value(x).shape().to_vec();
        if s.len() != 4 || s[1] != self.in_channels() {
            return Err(Error::ShapeMismatch {
                op: "feature_extractor",
                lhs: s,
                rhs: vec![self.in_channels()],
            });
        }
        let mut h = x;
        let last = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            let wv = tape.constant(w.clone());
            h = tape.conv2d(h, wv, None, 1)?;
            if i < last || self.tap == FeatureTap::PostActivation {
                h = tape.leaky_relu(h, LEAKY_SLOPE)?;
            }
        }
        Ok(h)
    }
}

/// `mean |φ(fake) - φ(real)|^p` over feature-map elements.
pub fn feature_loss(tape: &mut Tape, fake: Var, real: Var, extractor: &FeatureExtractor, p: u32) -> Result<Var> {
    check_norm(p)?;
    let (sa, sb) = (tape.value(fake).shape().to_vec(), tape.value(real).shape().to_vec());
    if sa != sb {
        return Err(Error::ShapeMismatch {
            op: "feature_loss",
            lhs: sa,
            rhs: sb,
        });
    }
    let ff = extractor.features(tape, fake)?;
    let fr = extractor.features(tape, real)?;
    mean_power_distance(tape, "feature_loss", ff, fr, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_check;
    use proptest::prelude::*;
    use rand::Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn eval2(f: impl Fn(&mut Tape, Var, Var) -> Result<Var>, a: Tensor, b: Tensor) -> f64 {
        let mut tape = Tape::new();
        let (a, b) = (tape.constant(a), tape.constant(b));
        let out = f(&mut tape, a, b).unwrap();
        tape.value(out).item()
    }

    fn ln_sigmoid(x: f64) -> f64 {
        -(1.0 + (-x).exp()).ln()
    }

    #[test]
    fn discriminator_examples() {
        let zeros = t(&[4, 1], &[0.0; 4]);
        let v = eval2(disc_loss, zeros.clone(), zeros);
        assert!((v - 4f64.ln()).abs() < 1e-12);
        assert!((v - 1.386294).abs() < 1e-6);
        let v = eval2(disc_loss, t(&[1, 1], &[0.0]), t(&[1, 1], &[0.0]));
        assert!((v - 1.386294).abs() < 1e-6);
        let v = eval2(disc_loss, t(&[2, 1], &[50.0, 60.0]), t(&[2, 1], &[-50.0, -70.0]));
        assert!(v > 0.0 && v < 3e-7);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn standard_generator_examples() {
        let one = |x: Tensor| {
            let mut tape = Tape::new();
            let v = tape.constant(x);
            let out = adv_loss_standard_g(&mut tape, v).unwrap();
            tape.value(out).item()
        };
        assert!((one(t(&[1, 1], &[0.0])) - 0.693147).abs() < 1e-6);
        assert!((one(t(&[2, 1], &[0.0, 0.0])) - 2f64.ln()).abs() < 1e-15);
        let v = one(t(&[1, 1], &[40.0]));
        assert!(v > 0.0 && v < 2e-7);
    }

    #[test]
    fn relativistic_generator_examples() {
        let c = t(&[3, 1], &[0.7; 3]);
        let v = eval2(adv_loss_relativistic_g, c.clone(), c);
        assert!((v - 1.386294).abs() < 1e-6);
        let v = eval2(adv_loss_relativistic_g, t(&[1, 1], &[1.0]), t(&[1, 1], &[0.0]));
        assert!((v + 2.0 * ln_sigmoid(-1.0)).abs() < 1e-12);
        assert!((v - 2.626523).abs() < 1e-6);
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 1], &[0.0, 1.0]));
        let b = tape.constant(t(&[3, 1], &[0.0; 3]));
        assert!(adv_loss_relativistic_g(&mut tape, a, b).is_err());
    }

    #[test]
    fn empty_batches_rejected() {
        let mut tape = Tape::new();
        let e = tape.constant(Tensor::zeros(&[0, 1]));
        let z = tape.constant(Tensor::zeros(&[1, 1]));
        assert!(disc_loss(&mut tape, e, z).is_err());
        assert!(adv_loss_standard_g(&mut tape, e).is_err());
        assert!(adv_loss_relativistic_g(&mut tape, e, e).is_err());
    }

    #[test]
    fn pixel_examples() {
        let a = t(&[1, 1, 2, 2], &[0.1, 0.2, 0.3, 0.4]);
        let b = a.map(|v| v + 0.5);
        assert_eq!(eval2(|tp, x, y| pixel_loss(tp, x, y, 1), a.clone(), a.clone()), 0.0);
        assert!((eval2(|tp, x, y| pixel_loss(tp, x, y, 1), b.clone(), a.clone()) - 0.5).abs() < 1e-15);
        assert!((eval2(|tp, x, y| pixel_loss(tp, x, y, 2), b, a.clone()) - 0.25).abs() < 1e-15);
        let mut tape = Tape::new();
        let (x, y) = (tape.constant(a.clone()), tape.constant(Tensor::zeros(&[1, 1, 2, 3])));
        assert!(matches!(pixel_loss(&mut tape, x, y, 1), Err(Error::ShapeMismatch { .. })));
        let x2 = tape.constant(a);
        assert!(pixel_loss(&mut tape, x, x2, 3).is_err());
    }

    /// Straight-line 3x3 zero-padded convolution used as an oracle.
    fn conv3x3(x: &[Vec<Vec<f64>>], w: &Tensor) -> Vec<Vec<Vec<f64>>> {
        let (c_out, c_in) = (w.shape()[0], w.shape()[1]);
        let (h, wd) = (x[0].len(), x[0][0].len());
        let mut out = vec![vec![vec![0.0; wd]; h]; c_out];
        for o in 0..c_out {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = 0.0;
                    for i in 0..c_in {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sy, sx) = (y as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < wd {
                                    acc += w.data()[((o * c_in + i) * 3 + ky) * 3 + kx] * x[i][sy as usize][sx as usize];
                                }
                            }
                        }
                    }
                    out[o][y][xx] = acc;
                }
            }
        }
        out
    }

    fn reference_features(ext: &FeatureExtractor, value: f64) -> Vec<f64> {
        let leaky = |v: f64| if v > 0.0 { v } else { 0.2 * v };
        let mut x = vec![vec![vec![value; 8]; 8]];
        for (i, w) in ext.weights().iter().enumerate() {
            x = conv3x3(&x, w);
            if i < 2 || ext.tap() == FeatureTap::PostActivation {
                for v in x.iter_mut().flatten().flatten() {
                    *v = leaky(*v);
                }
            }
        }
        x.into_iter().flatten().flatten().collect()
    }

    #[test]
    fn feature_loss_golden_value() {
        for tap in [FeatureTap::PostActivation, FeatureTap::PreActivation] {
            let ext = FeatureExtractor::new(1, 42, tap).unwrap();
            let (fr, ff) = (reference_features(&ext, 0.0), reference_features(&ext, 0.1));
            assert!(fr.iter().all(|&v| v == 0.0));
            let expected: f64 = ff.iter().map(|v| v.abs()).sum::<f64>() / ff.len() as f64;
            assert!(expected > 0.0);
            let got = eval2(
                |tp, a, b| feature_loss(tp, a, b, &ext, 1),
                Tensor::full(&[1, 1, 8, 8], 0.1),
                Tensor::zeros(&[1, 1, 8, 8]),
            );
            assert!((got - expected).abs() < 1e-14, "{tap:?}: {got} vs {expected}");
            let pinned = match tap {
                FeatureTap::PostActivation => 1.7465330143212297e-2,
                FeatureTap::PreActivation => 3.125213231590201e-2,
            };
            assert!((got - pinned).abs() < 1e-12, "{tap:?}: {got}");
        }
    }

    #[test]
    fn extractor_is_seeded() {
        let a = FeatureExtractor::new(3, 9, FeatureTap::PostActivation).unwrap();
        assert_eq!(a, FeatureExtractor::new(3, 9, FeatureTap::PostActivation).unwrap());
        assert_ne!(a, FeatureExtractor::new(3, 10, FeatureTap::PostActivation).unwrap());
        assert_eq!(a.weights()[0].shape(), &[8, 3, 3, 3]);
        assert_eq!(a.weights()[2].shape(), &[16, 16, 3, 3]);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 1, 4, 4]));
        assert!(a.features(&mut tape, x).is_err());
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logits = Tensor::uniform(&[4, 1], -2.0, 2.0, &mut rng);
        let other = Tensor::uniform(&[4, 1], -2.0, 2.0, &mut rng);
        let img = Tensor::uniform(&[2, 1, 6, 6], 0.0, 1.0, &mut rng);
        let target = Tensor::uniform(&[2, 1, 6, 6], 0.0, 1.0, &mut rng);
        let ext = FeatureExtractor::new(1, 3, FeatureTap::PreActivation).unwrap();
        let step = 1e-6;

        let o = other.clone();
        let errs = [
            finite_diff_check(|tp, x| {
                let c = tp.constant(o.clone());
                disc_loss(tp, x, c)
            }, &logits, step),
            finite_diff_check(|tp, x| {
                let c = tp.constant(o.clone());
                disc_loss(tp, c, x)
            }, &logits, step),
            finite_diff_check(adv_loss_standard_g, &logits, step),
            finite_diff_check(|tp, x| {
                let c = tp.constant(o.clone());
                adv_loss_relativistic_g(tp, c, x)
            }, &logits, step),
            finite_diff_check(|tp, x| {
                let c = tp.constant(o.clone());
                adv_loss_relativistic_g(tp, x, c)
            }, &logits, step),
            finite_diff_check(|tp, x| {
                let c = tp.constant(target.clone());
                pixel_loss(tp, x, c, 2)
            }, &img, step),
            finite_diff_check(|tp, x| {
                let c = tp.constant(target.clone());
                pixel_loss(tp, x, c, 1)
            }, &img, step),
            finite_diff_check(|tp, x| {
                let c = tp.constant(target.clone());
                feature_loss(tp, x, c, &ext, 2)
            }, &img, step),
        ];
        for (i, e) in errs.into_iter().enumerate() {
            let e = e.unwrap();
            assert!(e < 1e-4, "loss {i}: {e}");
        }
    }

    #[test]
    fn mean_squared_pixel_loss_is_squared_rmse() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: Vec<f64> = (0..12).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..12).map(|_| rng.random()).collect();
        let rmse = (a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 12.0).sqrt();
        let v = eval2(|tp, x, y| pixel_loss(tp, x, y, 2), t(&[12], &a), t(&[12], &b));
        assert!((v - rmse * rmse).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn distances_are_symmetric(seed: u64, p in 1u32..=2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Tensor::uniform(&[1, 1, 5, 5], 0.0, 1.0, &mut rng);
            let b = Tensor::uniform(&[1, 1, 5, 5], 0.0, 1.0, &mut rng);
            let ext = FeatureExtractor::new(1, seed ^ 1, FeatureTap::PostActivation).unwrap();
            let fl = |x: Tensor, y: Tensor| eval2(|tp, u, v| feature_loss(tp, u, v, &ext, p), x, y);
            let pl = |x: Tensor, y: Tensor| eval2(|tp, u, v| pixel_loss(tp, u, v, p), x, y);
            prop_assert!((fl(a.clone(), b.clone()) - fl(b.clone(), a.clone())).abs() < 1e-15);
            prop_assert_eq!(pl(a.clone(), b.clone()), pl(b.clone(), a.clone()));
            prop_assert_eq!(fl(a.clone(), a.clone()), 0.0);
        }

        #[test]
        fn adversarial_losses_nonnegative_and_permutation_invariant(
            real in prop::collection::vec(-30.0f64..30.0, 4),
            fake in prop::collection::vec(-30.0f64..30.0, 4),
        ) {
            let (r, f) = (t(&[4], &real), t(&[4], &fake));
            let rev = |v: &[f64]| t(&[4], &v.iter().rev().copied().collect::<Vec<_>>());
            let d = eval2(disc_loss, r.clone(), f.clone());
            let g = eval2(adv_loss_relativistic_g, r.clone(), f.clone());
            let g_rev = eval2(adv_loss_relativistic_g, rev(&real), rev(&fake));
            prop_assert!(d >= 0.0 && g >= 0.0 && d.is_finite() && g.is_finite());
            prop_assert!((g - g_rev).abs() < 1e-12);
        }
    }
}
