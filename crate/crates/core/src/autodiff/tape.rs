use super::conv::{self, ConvGeometry};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScalarMul(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Abs(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Upsample2(Var),
    Reshape(Var),
    Clamp(Var, f64, f64),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Parents always precede their children, so the node order is already a
/// topological order and [`Tape::backward`] is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], keyed by the leaf handles.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of a leaf; zeros when the leaf was not reachable from the root.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.accumulate(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Sums a broadcast gradient back down to a one-element operand.
fn reduce_to(shape: &[usize], g: &Tensor) -> Tensor {
    if g.shape() == shape {
        g.clone()
    } else {
        Tensor::full(shape, g.data().iter().sum())
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            for (o, bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Op::Leaf, value, requires_grad)
    }

    /// Leaf that receives a gradient.
    pub fn var(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &'static str, op: Op, value: Tensor, parents: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFiniteOutput { op: name });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push(op, value, requires_grad))
    }

    fn unary(
        &mut self,
        name: &'static str,
        x: Var,
        op: Op,
        f: impl Fn(f64) -> f64,
    ) -> Result<Var> {
        let out = self.value(x).map(f);
        self.record(name, op, out, &[x])
    }

    /// Elementwise binary op; either operand may be a one-element tensor,
    /// which is broadcast against the other.
    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out = if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)?
        } else if tb.numel() == 1 {
            let y = tb.item();
            ta.map(|x| f(x, y))
        } else if ta.numel() == 1 {
            let x = ta.item();
            tb.map(|y| f(x, y))
        } else {
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        };
        self.record(name, op, out, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scalar_mul(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary("scalar_mul", x, Op::ScalarMul(x, c), |v| c * v)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary("add_scalar", x, Op::AddScalar(x), |v| v + c)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.scalar_mul(x, -1.0)
    }

    /// Rank-2 matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let out = Tensor::new(vec![m, n], matmul_raw(ta.data(), tb.data(), m, k, n))?;
        self.record("matmul", Op::MatMul(a, b), out, &[a, b])
    }

    /// Stride-1 convolution of an NCHW input with an OIHW kernel and
    /// `pad` zeros on every side.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, pad: usize) -> Result<Var> {
        let (ti, tw) = (self.value(input), self.value(weight));
        let mismatch = || Error::ShapeMismatch {
            op: "conv2d",
            lhs: ti.shape().to_vec(),
            rhs: tw.shape().to_vec(),
        };
        if ti.rank() != 4 || tw.rank() != 4 || ti.shape()[1] != tw.shape()[1] {
            return Err(mismatch());
        }
        let (n, c_in, h, w) = (ti.shape()[0], ti.shape()[1], ti.shape()[2], ti.shape()[3]);
        let (c_out, kh, kw) = (tw.shape()[0], tw.shape()[2], tw.shape()[3]);
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(mismatch());
        }
        let bias_t = match bias {
            Some(b) => {
                let tb = self.value(b);
                if tb.shape() != [c_out] {
                    return Err(Error::ShapeMismatch {
                        op: "conv2d bias",
                        lhs: tb.shape().to_vec(),
                        rhs: vec![c_out],
                    });
                }
                Some(tb)
            }
            None => None,
        };
        let geom = ConvGeometry {
            n,
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            pad,
            out_h: h + 2 * pad - kh + 1,
            out_w: w + 2 * pad - kw + 1,
        };
        let out = conv::forward(ti, tw, bias_t, &geom);
        let mut parents = vec![input, weight];
        parents.extend(bias);
        self.record(
            "conv2d",
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
            out,
            &parents,
        )
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.unary("leaky_relu", x, Op::LeakyRelu(x, slope), |v| {
            if v > 0.0 {
                v
            } else {
                slope * v
            }
        })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, Op::Sigmoid(x), sigmoid)
    }

    /// Natural log; every input must be strictly positive.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(&value) = self.value(x).data().iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::LogDomain { value });
        }
        self.unary("log", x, Op::Log(x), f64::ln)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary("exp", x, Op::Exp(x), f64::exp)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.unary("abs", x, Op::Abs(x), f64::abs)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary("square", x, Op::Square(x), |v| v * v)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary("clamp", x, Op::Clamp(x, lo, hi), |v| v.clamp(lo, hi))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.record("sum", Op::Sum(x), Tensor::scalar(s), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.numel() == 0 {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.record("mean", Op::Mean(x), Tensor::scalar(m), &[x])
    }

    /// Nearest-neighbour x2 upsampling of an NCHW tensor.
    pub fn upsample_nearest2(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 4 {
            return Err(Error::ShapeMismatch {
                op: "upsample_nearest2",
                lhs: t.shape().to_vec(),
                rhs: vec![0, 0, 0, 0],
            });
        }
        let (planes, h, w) = (t.shape()[0] * t.shape()[1], t.shape()[2], t.shape()[3]);
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0; planes * oh * ow];
        let src = t.data();
        for p in 0..planes {
            for y in 0..oh {
                let row_in = &src[(p * h + y / 2) * w..][..w];
                let row_out = &mut out[(p * oh + y) * ow..][..ow];
                for (xo, v) in row_out.iter_mut().enumerate() {
                    *v = row_in[xo / 2];
                }
            }
        }
        let shape = vec![t.shape()[0], t.shape()[1], oh, ow];
        self.record("upsample_nearest2", Op::Upsample2(x), Tensor::new(shape, out)?, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        self.record("reshape", Op::Reshape(x), out, &[x])
    }

    /// Reverse sweep from a one-element `root`. Gradients accumulate over
    /// all paths; the tape is cleared afterwards so it can be reused.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let root_value = &self.nodes[root.0].value;
        if root_value.numel() != 1 {
            return Err(Error::NonScalarRoot {
                shape: root_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::ones(root_value.shape()));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        for (slot, node) in grads.iter_mut().zip(&self.nodes) {
            if !(matches!(node.op, Op::Leaf) && node.requires_grad) {
                *slot = None;
            }
        }
        self.nodes.clear();
        Ok(Gradients { grads, shapes })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let zip_map = |a: &Tensor, f: &dyn Fn(f64, f64) -> f64| {
            let data = g.data().iter().zip(a.data()).map(|(&gv, &av)| f(gv, av)).collect();
            Tensor::new(g.shape().to_vec(), data).expect("same shape")
        };
        // Elementwise product of g with a possibly broadcast operand.
        let times = |other: &Tensor, sign: f64| {
            if other.shape() == g.shape() {
                zip_map(other, &|gv, ov| sign * gv * ov)
            } else {
                let o = other.item();
                g.map(|gv| sign * gv * o)
            }
        };
        match node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.needs(a) {
                    accumulate(grads, a, reduce_to(val(a).shape(), g));
                }
                if self.needs(b) {
                    accumulate(grads, b, reduce_to(val(b).shape(), g));
                }
            }
            Op::Sub(a, b) => {
                if self.needs(a) {
                    accumulate(grads, a, reduce_to(val(a).shape(), g));
                }
                if self.needs(b) {
                    accumulate(grads, b, reduce_to(val(b).shape(), &g.map(|v| -v)));
                }
            }
            Op::Mul(a, b) => {
                if self.needs(a) {
                    accumulate(grads, a, reduce_to(val(a).shape(), &times(val(b), 1.0)));
                }
                if self.needs(b) {
                    accumulate(grads, b, reduce_to(val(b).shape(), &times(val(a), 1.0)));
                }
            }
            Op::ScalarMul(x, c) => accumulate(grads, x, g.map(|v| c * v)),
            Op::AddScalar(x) => accumulate(grads, x, g.clone()),
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(a), val(b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.needs(a) {
                    let bt = transpose(tb.data(), k, n);
                    let ga = matmul_raw(g.data(), &bt, m, n, k);
                    accumulate(grads, a, Tensor::new(vec![m, k], ga).expect("matmul grad"));
                }
                if self.needs(b) {
                    let at = transpose(ta.data(), m, k);
                    let gb = matmul_raw(&at, g.data(), k, m, n);
                    accumulate(grads, b, Tensor::new(vec![k, n], gb).expect("matmul grad"));
                }
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                ref geom,
            } => {
                let want_bias = bias.is_some_and(|b| self.needs(b));
                let (gi, gw, gb) = conv::backward(
                    val(input),
                    val(weight),
                    g,
                    geom,
                    self.needs(input),
                    self.needs(weight),
                    want_bias,
                );
                if let Some(gi) = gi {
                    accumulate(grads, input, gi);
                }
                if let Some(gw) = gw {
                    accumulate(grads, weight, gw);
                }
                if let (Some(b), Some(gb)) = (bias, gb) {
                    accumulate(grads, b, gb);
                }
            }
            Op::LeakyRelu(x, slope) => {
                accumulate(grads, x, zip_map(val(x), &|gv, xv| if xv > 0.0 { gv } else { slope * gv }))
            }
            Op::Sigmoid(x) => {
                accumulate(grads, x, zip_map(&node.value, &|gv, y| gv * y * (1.0 - y)))
            }
            Op::Log(x) => accumulate(grads, x, zip_map(val(x), &|gv, xv| gv / xv)),
            Op::Exp(x) => accumulate(grads, x, zip_map(&node.value, &|gv, y| gv * y)),
            Op::Abs(x) => accumulate(
                grads,
                x,
                zip_map(val(x), &|gv, xv| {
                    if xv > 0.0 {
                        gv
                    } else if xv < 0.0 {
                        -gv
                    } else {
                        0.0
                    }
                }),
            ),
            Op::Square(x) => accumulate(grads, x, zip_map(val(x), &|gv, xv| 2.0 * xv * gv)),
            Op::Clamp(x, lo, hi) => accumulate(
                grads,
                x,
                zip_map(val(x), &|gv, xv| if xv >= lo && xv <= hi { gv } else { 0.0 }),
            ),
            Op::Sum(x) => accumulate(grads, x, Tensor::full(val(x).shape(), g.item())),
            Op::Mean(x) => {
                let t = val(x);
                accumulate(grads, x, Tensor::full(t.shape(), g.item() / t.numel() as f64))
            }
            Op::Upsample2(x) => {
                let t = val(x);
                let (planes, h, w) = (t.shape()[0] * t.shape()[1], t.shape()[2], t.shape()[3]);
                let ow = 2 * w;
                let mut out = vec![0.0; planes * h * w];
                let gd = g.data();
                for p in 0..planes {
                    for y in 0..2 * h {
                        let row_g = &gd[(p * 2 * h + y) * ow..][..ow];
                        let row_out = &mut out[(p * h + y / 2) * w..][..w];
                        for (xo, v) in row_g.iter().enumerate() {
                            row_out[xo / 2] += v;
                        }
                    }
                }
                accumulate(grads, x, Tensor::new(t.shape().to_vec(), out).expect("upsample grad"))
            }
            Op::Reshape(x) => {
                let reshaped = g.clone().reshape(val(x).shape()).expect("reshape grad");
                accumulate(grads, x, reshaped)
            }
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
