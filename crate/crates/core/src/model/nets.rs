use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Parameter, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::losses::LEAKY_SLOPE;

/// Layer widths of both networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub channels: usize,
    pub generator_width: usize,
    pub discriminator_widths: [usize; 2],
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            channels: 1,
            generator_width: 16,
            discriminator_widths: [8, 16],
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0
            || self.generator_width == 0
            || self.discriminator_widths.contains(&0)
        {
            return Err(Error::invalid(format!("all network widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

fn conv_layer<R: Rng + ?Sized>(prefix: &str, c_in: usize, c_out: usize, rng: &mut R) -> [Parameter; 2] {
    let fan_in = (c_in * 9) as f64;
    [
        Parameter::new(
            format!("{prefix}.weight"),
            Tensor::randn(&[c_out, c_in, 3, 3], 1.0 / fan_in.sqrt(), rng),
        ),
        Parameter::new(format!("{prefix}.bias"), Tensor::zeros(&[c_out])),
    ]
}

fn register_all(params: &[Parameter], tape: &mut Tape, trainable: bool) -> Vec<Var> {
    params.iter().map(|p| p.register(tape, trainable)).collect()
}

fn check_input(tape: &Tape, x: Var, channels: usize, op: &'static str) -> Result<()> {
    let s = tape.value(x).shape();
    if s.len() != 4 || s[1] != channels {
        return Err(Error::ShapeMismatch {
            op,
            lhs: s.to_vec(),
            rhs: vec![channels],
        });
    }
    Ok(())
}

/// A forward pass: the network output and the tape handles of its
/// parameters, in the order of [`GeneratorNet::params`] /
/// [`DiscriminatorNet::params`].
pub struct Forward {
    pub output: Var,
    pub params: Vec<Var>,
}

/// Four 3x3 convolutions with two nearest x2 upsamplings and a sigmoid
/// output, mapping `N x C x h x w` to `N x C x 4h x 4w`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNet {
    channels: usize,
    params: Vec<Parameter>,
}

impl GeneratorNet {
    pub fn new<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let (c, w) = (arch.channels, arch.generator_width);
        let mut params = Vec::with_capacity(8);
        for (i, (c_in, c_out)) in [(c, w), (w, w), (w, w), (w, c)].into_iter().enumerate() {
            params.extend(conv_layer(&format!("generator.conv{i}"), c_in, c_out, rng));
        }
        Ok(Self { channels: c, params })
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Places the parameters on `tape`, in [`GeneratorNet::params`] order.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        register_all(&self.params, tape, trainable)
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, trainable: bool) -> Result<Forward> {
        let p = self.register(tape, trainable);
        let output = self.forward_with(tape, x, &p)?;
        Ok(Forward { output, params: p })
    }

    /// Forward pass using parameters already registered on `tape`.
    pub fn forward_with(&self, tape: &mut Tape, x: Var, p: &[Var]) -> Result<Var> {
        check_input(tape, x, self.channels, "generator")?;
        let mut h = tape.conv2d(x, p[0], Some(p[1]), 1)?;
        h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        h = tape.conv2d(h, p[2], Some(p[3]), 1)?;
        h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        h = tape.upsample_nearest2(h)?;
        h = tape.conv2d(h, p[4], Some(p[5]), 1)?;
        h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        h = tape.upsample_nearest2(h)?;
        h = tape.conv2d(h, p[6], Some(p[7]), 1)?;
        tape.sigmoid(h)
    }

    /// Forward pass without recording gradients.
    pub fn infer(&self, lr: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(lr.clone());
        let out = self.forward(&mut tape, x, false)?.output;
        Ok(tape.value(out).clone())
    }
}

/// Two 3x3 convolutions, a spatial mean and a dense layer producing one raw
/// logit per sample (`N x 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorNet {
    channels: usize,
    params: Vec<Parameter>,
}

impl DiscriminatorNet {
    pub fn new<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let [w0, w1] = arch.discriminator_widths;
        let mut params = Vec::with_capacity(6);
        params.extend(conv_layer("discriminator.conv0", arch.channels, w0, rng));
        params.extend(conv_layer("discriminator.conv1", w0, w1, rng));
        params.push(Parameter::new(
            "discriminator.dense.weight",
            Tensor::randn(&[w1, 1], 1.0 / (w1 as f64).sqrt(), rng),
        ));
        params.push(Parameter::new("discriminator.dense.bias", Tensor::zeros(&[1, 1])));
        Ok(Self {
            channels: arch.channels,
            params,
        })
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Places the parameters on `tape`, in [`DiscriminatorNet::params`] order.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        register_all(&self.params, tape, trainable)
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, trainable: bool) -> Result<Forward> {
        let p = self.register(tape, trainable);
        let output = self.forward_with(tape, x, &p)?;
        Ok(Forward { output, params: p })
    }

    /// Forward pass using parameters already registered on `tape`.
    pub fn forward_with(&self, tape: &mut Tape, x: Var, p: &[Var]) -> Result<Var> {
        check_input(tape, x, self.channels, "discriminator")?;
        let mut h = tape.conv2d(x, p[0], Some(p[1]), 1)?;
        h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        h = tape.conv2d(h, p[2], Some(p[3]), 1)?;
        h = tape.leaky_relu(h, LEAKY_SLOPE)?;

        let s = tape.value(h).shape().to_vec();
        let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
        let flat = tape.reshape(h, &[n * c, hw])?;
        let avg = tape.constant(Tensor::full(&[hw, 1], 1.0 / hw as f64));
        let pooled = tape.matmul(flat, avg)?;
        let pooled = tape.reshape(pooled, &[n, c])?;
        let logits = tape.matmul(pooled, p[4])?;
        let ones = tape.constant(Tensor::ones(&[n, 1]));
        let bias = tape.matmul(ones, p[5])?;
        tape.add(logits, bias)
    }
}

pub fn init_networks<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Result<(GeneratorNet, DiscriminatorNet)> {
    let g = GeneratorNet::new(arch, rng)?;
    let d = DiscriminatorNet::new(arch, rng)?;
    Ok((g, d))
}
