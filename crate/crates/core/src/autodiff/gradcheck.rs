//! Central finite-difference gradient oracle and the per-primitive check
//! battery used by tests and the `gradcheck` command.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-6;

/// Compares the reverse-mode gradient of `f` at `x` against central
/// differences. Returns max over coordinates of
/// `|g_ad - g_fd| / max(1, |g_fd|)`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::invalid("finite difference step must be positive"));
    }
    let mut tape = Tape::new();
    let input = tape.var(x.clone());
    let root = f(&mut tape, input)?;
    let analytic = tape.backward(root)?.get(input);

    let eval = |point: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(point);
        let out = f(&mut tape, v)?;
        let value = tape.value(out).item();
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFiniteOutput { op: "finite_diff_check" })
        }
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += step;
        let mut minus = x.clone();
        minus.data_mut()[i] -= step;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let err = (analytic.data()[i] - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Names of the differentiable primitives, in report order.
pub const PRIMITIVES: &[&str] = &[
    "add",
    "sub",
    "mul",
    "scalar_mul",
    "add_scalar",
    "matmul",
    "conv2d",
    "leaky_relu",
    "sigmoid",
    "log",
    "exp",
    "abs",
    "square",
    "clamp",
    "sum",
    "mean",
    "upsample_nearest2",
    "reshape",
];

/// Contracts an op output against fixed random weights so every output
/// coordinate contributes a distinct amount to the checked scalar.
fn project(tape: &mut Tape, y: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(y, w)?;
    tape.sum(prod)
}

/// One trial of the named primitive at a fresh random input drawn from
/// `rng`. Binary primitives are checked with respect to both operands.
fn check_once(name: &str, rng: &mut ChaCha8Rng) -> Result<f64> {
    let step = DEFAULT_STEP;
    match name {
        "add" | "sub" | "mul" => {
            let a = Tensor::uniform(&[2, 3], -2.0, 2.0, rng);
            let b = Tensor::uniform(&[2, 3], -2.0, 2.0, rng);
            let s = Tensor::uniform(&[], -2.0, 2.0, rng);
            let w = Tensor::uniform(&[2, 3], -1.0, 1.0, rng);
            let apply = |tape: &mut Tape, x: Var, y: Var| match name {
                "add" => tape.add(x, y),
                "sub" => tape.sub(x, y),
                _ => tape.mul(x, y),
            };
            let e1 = finite_diff_check(
                |t, x| {
                    let y = t.constant(b.clone());
                    let o = apply(t, x, y)?;
                    project(t, o, &w)
                },
                &a,
                step,
            )?;
            let e2 = finite_diff_check(
                |t, y| {
                    let x = t.constant(a.clone());
                    let o = apply(t, x, y)?;
                    project(t, o, &w)
                },
                &b,
                step,
            )?;
            // scalar broadcast operand
            let e3 = finite_diff_check(
                |t, y| {
                    let x = t.constant(a.clone());
                    let o = apply(t, x, y)?;
                    project(t, o, &w)
                },
                &s,
                step,
            )?;
            Ok(e1.max(e2).max(e3))
        }
        "matmul" => {
            let a = Tensor::uniform(&[2, 3], -1.0, 1.0, rng);
            let b = Tensor::uniform(&[3, 4], -1.0, 1.0, rng);
            let w = Tensor::uniform(&[2, 4], -1.0, 1.0, rng);
            let e1 = finite_diff_check(
                |t, x| {
                    let y = t.constant(b.clone());
                    let o = t.matmul(x, y)?;
                    project(t, o, &w)
                },
                &a,
                step,
            )?;
            let e2 = finite_diff_check(
                |t, y| {
                    let x = t.constant(a.clone());
                    let o = t.matmul(x, y)?;
                    project(t, o, &w)
                },
                &b,
                step,
            )?;
            Ok(e1.max(e2))
        }
        "conv2d" => {
            let input = Tensor::uniform(&[2, 2, 5, 5], -1.0, 1.0, rng);
            let kernel = Tensor::uniform(&[3, 2, 3, 3], -1.0, 1.0, rng);
            let bias = Tensor::uniform(&[3], -1.0, 1.0, rng);
            let w = Tensor::uniform(&[2, 3, 5, 5], -1.0, 1.0, rng);
            let conv = |t: &mut Tape, i: Var, k: Var, b: Var| -> Result<Var> {
                let o = t.conv2d(i, k, Some(b), 1)?;
                project(t, o, &w)
            };
            let e1 = finite_diff_check(
                |t, x| {
                    let (k, b) = (t.constant(kernel.clone()), t.constant(bias.clone()));
                    conv(t, x, k, b)
                },
                &input,
                step,
            )?;
            let e2 = finite_diff_check(
                |t, k| {
                    let (i, b) = (t.constant(input.clone()), t.constant(bias.clone()));
                    conv(t, i, k, b)
                },
                &kernel,
                step,
            )?;
            let e3 = finite_diff_check(
                |t, b| {
                    let (i, k) = (t.constant(input.clone()), t.constant(kernel.clone()));
                    conv(t, i, k, b)
                },
                &bias,
                step,
            )?;
            Ok(e1.max(e2).max(e3))
        }
        "upsample_nearest2" => {
            let x = Tensor::uniform(&[1, 2, 3, 3], -1.0, 1.0, rng);
            let w = Tensor::uniform(&[1, 2, 6, 6], -1.0, 1.0, rng);
            finite_diff_check(
                |t, v| {
                    let o = t.upsample_nearest2(v)?;
                    project(t, o, &w)
                },
                &x,
                step,
            )
        }
        "reshape" => {
            let x = Tensor::uniform(&[2, 3], -1.0, 1.0, rng);
            let w = Tensor::uniform(&[3, 2], -1.0, 1.0, rng);
            finite_diff_check(
                |t, v| {
                    let o = t.reshape(v, &[3, 2])?;
                    project(t, o, &w)
                },
                &x,
                step,
            )
        }
        "sum" | "mean" => {
            let x = Tensor::uniform(&[2, 3], -1.0, 1.0, rng);
            let c = Tensor::uniform(&[], 0.5, 2.0, rng);
            finite_diff_check(
                |t, v| {
                    let r = if name == "sum" { t.sum(v)? } else { t.mean(v)? };
                    project(t, r, &c)
                },
                &x,
                step,
            )
        }
        _ => {
            // elementwise unary primitives
            let (lo, hi) = match name {
                "log" => (0.2, 3.0),
                "exp" => (-2.0, 2.0),
                "clamp" => (-2.0, 2.0),
                _ => (-3.0, 3.0),
            };
            let x = Tensor::uniform(&[2, 3], lo, hi, rng);
            let w = Tensor::uniform(&[2, 3], -1.0, 1.0, rng);
            let c = rng_scalar(rng);
            let op = |t: &mut Tape, v: Var| -> Result<Var> {
                match name {
                    "scalar_mul" => t.scalar_mul(v, c),
                    "add_scalar" => t.add_scalar(v, c),
                    "leaky_relu" => t.leaky_relu(v, 0.2),
                    "sigmoid" => t.sigmoid(v),
                    "log" => t.log(v),
                    "exp" => t.exp(v),
                    "abs" => t.abs(v),
                    "square" => t.square(v),
                    "clamp" => t.clamp(v, -1.0, 1.0),
                    other => Err(Error::invalid(format!("unknown primitive {other}"))),
                }
            };
            // keep kinks (0 for abs/leaky_relu, +-1 for clamp) out of the
            // central-difference stencil
            let kink_free = x.map(|v| {
                let mut v = v;
                for kink in [-1.0, 0.0, 1.0] {
                    if (v - kink).abs() < 1e-3 {
                        v = kink + 1e-2;
                    }
                }
                v
            });
            finite_diff_check(
                |t, v| {
                    let o = op(t, v)?;
                    project(t, o, &w)
                },
                &kink_free,
                step,
            )
        }
    }
}

fn rng_scalar(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    rng.random_range(-2.0..2.0)
}

/// Runs every primitive at `trials` random points and returns the worst
/// relative error per primitive, in [`PRIMITIVES`] order.
pub fn primitive_battery(seed: u64, trials: usize) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PRIMITIVES
        .iter()
        .map(|&name| {
            let mut worst: f64 = 0.0;
            for _ in 0..trials {
                worst = worst.max(check_once(name, &mut rng)?);
            }
            Ok((name, worst))
        })
        .collect()
}
