//! Minimal tape-based reverse-mode automatic differentiation over dense
//! `f64` tensors.
//!
//! A [`Tape`] records each primitive as it is evaluated; [`Tape::backward`]
//! then walks the record once in reverse, accumulating gradients into the
//! leaves. Only one-element tensors broadcast against other operands.

mod conv;
pub mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, primitive_battery, PRIMITIVES};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;

/// A named trainable (or frozen) tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub requires_grad: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            name: name.into(),
            value,
            requires_grad: true,
        }
    }

    pub fn frozen(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            requires_grad: false,
            ..Self::new(name, value)
        }
    }

    /// Places the parameter on a tape. `trainable = false` records it as a
    /// constant regardless of its own flag.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Var {
        tape.leaf(self.value.clone(), trainable && self.requires_grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    /// Quadruple-loop reference convolution with explicit zero padding.
    fn naive_conv(input: &Tensor, weight: &Tensor, bias: &Tensor, pad: usize) -> Tensor {
        let s = input.shape();
        let k = weight.shape();
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (o, kh, kw) = (k[0], k[2], k[3]);
        let (oh, ow) = (h + 2 * pad - kh + 1, w + 2 * pad - kw + 1);
        let at = |b: usize, ch: usize, y: isize, x: isize| -> f64 {
            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                0.0
            } else {
                input.data()[((b * c + ch) * h + y as usize) * w + x as usize]
            }
        };
        let mut out = vec![0.0; n * o * oh * ow];
        for b in 0..n {
            for oc in 0..o {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = bias.data()[oc];
                        for ch in 0..c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let wv = weight.data()[((oc * c + ch) * kh + ky) * kw + kx];
                                    acc += wv
                                        * at(
                                            b,
                                            ch,
                                            y as isize + ky as isize - pad as isize,
                                            x as isize + kx as isize - pad as isize,
                                        );
                                }
                            }
                        }
                        out[((b * o + oc) * oh + y) * ow + x] = acc;
                    }
                }
            }
        }
        Tensor::new(vec![n, o, oh, ow], out).unwrap()
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut tape = Tape::new();
        let x = tape.var(Tensor::scalar(0.0));
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.value(y).item(), 0.5);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).item(), 0.25);
    }

    #[test]
    fn unit_kernel_conv_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Tensor::uniform(&[2, 1, 5, 4], 0.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(img.clone());
        let k = tape.constant(t(&[1, 1, 1, 1], &[1.0]));
        let b = tape.constant(t(&[1], &[0.0]));
        let y = tape.conv2d(x, k, Some(b), 0).unwrap();
        assert_eq!(tape.value(y), &img);
    }

    #[test]
    fn matmul_by_identity() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let i = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let y = tape.matmul(a, i).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn backward_examples() {
        let mut tape = Tape::new();
        let x = tape.var(Tensor::full(&[2, 3], 0.7));
        let s = tape.sum(x).unwrap();
        assert_eq!(tape.backward(s).unwrap().get(x), Tensor::ones(&[2, 3]));

        let x = tape.var(t(&[3], &[1.0, 2.0, 3.0]));
        let sq = tape.square(x).unwrap();
        let m = tape.mean(sq).unwrap();
        let g = tape.backward(m).unwrap().get(x);
        let expected = [2.0 / 3.0, 4.0 / 3.0, 2.0];
        for (a, b) in g.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }

        // -log(mu - l), mu = 2, l = 1
        let l = tape.var(Tensor::scalar(1.0));
        let mu = tape.constant(Tensor::scalar(2.0));
        let gap = tape.sub(mu, l).unwrap();
        let lg = tape.log(gap).unwrap();
        let root = tape.neg(lg).unwrap();
        assert_eq!(tape.backward(root).unwrap().get(l).item(), 1.0);
    }

    #[test]
    fn backward_errors_and_reuse() {
        let mut tape = Tape::new();
        let x = tape.var(Tensor::ones(&[2]));
        assert!(matches!(tape.backward(x), Err(crate::Error::NonScalarRoot { .. })));
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert!(tape.is_empty());
        assert!(matches!(tape.backward(s), Err(crate::Error::EmptyTape)));
        let y = tape.var(Tensor::scalar(2.0));
        let z = tape.square(y).unwrap();
        assert_eq!(tape.backward(z).unwrap().get(y).item(), 4.0);
    }

    #[test]
    fn unreachable_parameter_gets_zero_gradient() {
        let mut tape = Tape::new();
        let used = tape.var(Tensor::ones(&[2]));
        let unused = tape.var(Tensor::ones(&[3, 1]));
        let s = tape.sum(used).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(unused), Tensor::zeros(&[3, 1]));
    }

    #[test]
    fn forward_errors() {
        let mut tape = Tape::new();
        let a = tape.var(Tensor::ones(&[2, 3]));
        let b = tape.var(Tensor::ones(&[3, 2]));
        assert!(matches!(tape.add(a, b), Err(crate::Error::ShapeMismatch { .. })));
        assert!(tape.matmul(a, a).is_err());
        let z = tape.constant(t(&[2], &[1.0, 0.0]));
        assert!(matches!(tape.log(z), Err(crate::Error::LogDomain { .. })));
        let big = tape.constant(Tensor::scalar(1000.0));
        assert!(matches!(tape.exp(big), Err(crate::Error::NonFiniteOutput { .. })));
        let img = tape.constant(Tensor::ones(&[1, 2, 4, 4]));
        let k = tape.constant(Tensor::ones(&[1, 3, 3, 3]));
        assert!(tape.conv2d(img, k, None, 1).is_err());
    }

    #[test]
    fn scalar_broadcast() {
        let mut tape = Tape::new();
        let x = tape.var(t(&[3], &[1.0, 2.0, 3.0]));
        let c = tape.var(Tensor::scalar(2.0));
        let y = tape.mul(x, c).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 4.0, 6.0]);
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(c).item(), 6.0);
        assert_eq!(g.get(x).data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn conv_matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for pad in [0, 1, 2] {
            let input = Tensor::uniform(&[1, 2, 6, 6], -1.0, 1.0, &mut rng);
            let weight = Tensor::uniform(&[3, 2, 3, 3], -1.0, 1.0, &mut rng);
            let bias = Tensor::uniform(&[3], -1.0, 1.0, &mut rng);
            let mut tape = Tape::new();
            let (i, w, b) = (
                tape.constant(input.clone()),
                tape.constant(weight.clone()),
                tape.constant(bias.clone()),
            );
            let y = tape.conv2d(i, w, Some(b), pad).unwrap();
            let reference = naive_conv(&input, &weight, &bias, pad);
            assert_eq!(tape.value(y).shape(), reference.shape());
            assert!(tape.value(y).max_abs_diff(&reference) < 1e-12);
        }
    }

    #[test]
    fn finite_diff_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // integer inputs and a dyadic step keep every perturbed sum exact
        let x = Tensor::from_fn(&[4, 3], |i| i as f64 - 5.0);
        let err = finite_diff_check(|t, v| t.sum(v), &x, 2f64.powi(-20)).unwrap();
        assert!(err < 1e-12, "{err}");

        let x = Tensor::uniform(&[2, 3], -2.0, 2.0, &mut rng);
        let err = finite_diff_check(
            |t, v| {
                let s = t.sigmoid(v)?;
                t.mean(s)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");

        let x = Tensor::uniform(&[1, 1, 5, 5], -1.0, 1.0, &mut rng);
        let k = Tensor::uniform(&[1, 1, 3, 3], -1.0, 1.0, &mut rng);
        let err = finite_diff_check(
            |t, v| {
                let kv = t.constant(k.clone());
                let c = t.conv2d(v, kv, None, 1)?;
                t.mean(c)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn every_primitive_passes_gradcheck() {
        let report = primitive_battery(2024, 10).unwrap();
        assert_eq!(report.len(), PRIMITIVES.len());
        for (name, err) in report {
            assert!(err < 1e-5, "{name}: {err}");
        }
    }

    #[test]
    fn gradient_accumulation_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x0 = Tensor::uniform(&[3], 0.5, 2.0, &mut rng);
        let build = |tape: &mut Tape, which: u8| -> (Var, Var) {
            let x = tape.var(x0.clone());
            let a = tape.log(x).unwrap();
            let a = tape.sum(a).unwrap();
            let b = tape.square(x).unwrap();
            let b = tape.mean(b).unwrap();
            let root = match which {
                0 => a,
                1 => b,
                _ => tape.add(a, b).unwrap(),
            };
            (x, root)
        };
        let grad = |which| {
            let mut tape = Tape::new();
            let (x, root) = build(&mut tape, which);
            tape.backward(root).unwrap().get(x)
        };
        let (ga, gb, gab) = (grad(0), grad(1), grad(2));
        for i in 0..3 {
            assert!((ga.data()[i] + gb.data()[i] - gab.data()[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn repeated_passes_are_bit_identical() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let input = Tensor::uniform(&[2, 2, 6, 6], -1.0, 1.0, &mut rng);
            let weight = Tensor::randn(&[4, 2, 3, 3], 0.3, &mut rng);
            let mut tape = Tape::new();
            let i = tape.constant(input);
            let w = tape.var(weight);
            let y = tape.conv2d(i, w, None, 1).unwrap();
            let y = tape.leaky_relu(y, 0.2).unwrap();
            let y = tape.upsample_nearest2(y).unwrap();
            let y = tape.sigmoid(y).unwrap();
            let m = tape.mean(y).unwrap();
            tape.backward(m).unwrap().get(w)
        };
        let (a, b) = (run(), run());
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn frozen_parameters_are_constants() {
        let p = Parameter::frozen("w", Tensor::ones(&[2]));
        let q = Parameter::new("v", Tensor::ones(&[2]));
        let mut tape = Tape::new();
        let pv = p.register(&mut tape, true);
        let qv = q.register(&mut tape, false);
        assert!(!tape.requires_grad(pv));
        assert!(!tape.requires_grad(qv));
        let qt = q.register(&mut tape, true);
        assert!(tape.requires_grad(qt));
    }
}
