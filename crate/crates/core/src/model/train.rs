use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::{AdversarialVariant, TrainConfig};
use super::data::{sample_batch, Batch, Dataset};
use super::history::{pretrain_csv, HistoryRecord, TrainHistory};
use super::nets::{init_networks, DiscriminatorNet, GeneratorNet};
use super::optim::Adam;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::losses::{
    adv_loss_relativistic_g, adv_loss_standard_g, disc_loss, feature_loss, pixel_loss, FeatureExtractor,
};
use crate::scalarize::{
    clamp_flags, gradient_weights, hv_log_objective_on_tape, mode_weights, scalarize, LossVector,
    ScalarizationMode, UpperBounds, DEFAULT_EPS,
};

/// Independent random streams derived from the run seed.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const PRETRAIN: u64 = 2;
    pub const ADVERSARIAL: u64 = 3;
    pub const FEATURES: u64 = 4;
}

/// SplitMix64 finalizer over `seed` and a stream id.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What the generator losses are computed from.
#[derive(Debug, Clone, Copy)]
pub struct LossSettings<'a> {
    pub extractor: &'a FeatureExtractor,
    pub variant: AdversarialVariant,
    pub norm_p: u32,
}

/// The scalar whose gradient drives a generator update.
#[derive(Debug, Clone, Copy)]
pub enum GeneratorObjective<'a> {
    /// `Σ w_k l_k` with the weights of `mode` evaluated at the current
    /// losses and treated as constants.
    Mode {
        mode: &'a ScalarizationMode,
        mu: &'a UpperBounds,
        eps: f64,
    },
    /// A single loss: 0 adversarial, 1 pixel, 2 feature.
    Single(usize),
    /// The unclamped `-Σ log(μ_k - l_k)` (or its normalized form) recorded
    /// on the tape and differentiated end to end.
    HypervolumeOnTape { mu: &'a UpperBounds, normalized: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorGradient {
    /// `[gan, pixel, feature]`.
    pub losses: [f64; 3],
    /// Effective per-loss weights of the objective.
    pub weights: Vec<f64>,
    /// One gradient per generator parameter.
    pub grads: Vec<Tensor>,
}

fn check_pair(fake: &Tensor, hr: &Tensor) -> Result<()> {
    if fake.shape() != hr.shape() {
        return Err(Error::ShapeMismatch {
            op: "G(LR) vs HR",
            lhs: fake.shape().to_vec(),
            rhs: hr.shape().to_vec(),
        });
    }
    Ok(())
}

/// Records the three generator losses; returns the generator parameter
/// handles and the loss handles.
fn generator_losses(
    tape: &mut Tape,
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    batch: &Batch,
    settings: &LossSettings,
) -> Result<(Vec<Var>, [Var; 3])> {
    let lr = tape.constant(batch.lr.clone());
    let hr = tape.constant(batch.hr.clone());
    let gp = g.register(tape, true);
    let fake = g.forward_with(tape, lr, &gp)?;
    check_pair(tape.value(fake), &batch.hr)?;
    let dp = d.register(tape, false);
    let logits_fake = d.forward_with(tape, fake, &dp)?;
    let l_gan = match settings.variant {
        AdversarialVariant::Standard => adv_loss_standard_g(tape, logits_fake)?,
        AdversarialVariant::Relativistic => {
            let logits_real = d.forward_with(tape, hr, &dp)?;
            adv_loss_relativistic_g(tape, logits_real, logits_fake)?
        }
    };
    let l_pix = pixel_loss(tape, fake, hr, settings.norm_p)?;
    let l_fea = feature_loss(tape, fake, hr, settings.extractor, settings.norm_p)?;
    Ok((gp, [l_gan, l_pix, l_fea]))
}

fn weighted_sum(tape: &mut Tape, losses: &[Var; 3], weights: &[f64]) -> Result<Var> {
    let mut total = tape.scalar_mul(losses[0], weights[0])?;
    for (&l, &w) in losses.iter().zip(weights).skip(1) {
        let term = tape.scalar_mul(l, w)?;
        total = tape.add(total, term)?;
    }
    Ok(total)
}

/// Generator parameter gradients of `objective` at the current state.
/// Neither network is modified.
pub fn generator_gradient(
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    batch: &Batch,
    settings: &LossSettings,
    objective: GeneratorObjective,
) -> Result<GeneratorGradient> {
    let mut tape = Tape::new();
    let (gp, lv) = generator_losses(&mut tape, g, d, batch, settings)?;
    let losses = [0, 1, 2].map(|k| tape.value(lv[k]).item());
    let (root, weights) = match objective {
        GeneratorObjective::Mode { mode, mu, eps } => {
            let w = mode_weights(&LossVector::new(losses.to_vec())?, mode, mu, eps)?;
            (weighted_sum(&mut tape, &lv, &w)?, w)
        }
        GeneratorObjective::Single(k) => {
            if k >= 3 {
                return Err(Error::invalid(format!("loss index {k} out of range")));
            }
            let mut w = vec![0.0; 3];
            w[k] = 1.0;
            (lv[k], w)
        }
        GeneratorObjective::HypervolumeOnTape { mu, normalized } => {
            let w = gradient_weights(&LossVector::new(losses.to_vec())?, mu, DEFAULT_EPS)?;
            (hv_log_objective_on_tape(&mut tape, &lv, mu, normalized)?, w)
        }
    };
    let mut grads = tape.backward(root)?;
    Ok(GeneratorGradient {
        losses,
        weights,
        grads: gp.into_iter().map(|v| grads.take(v)).collect(),
    })
}

/// Outcome of one generator update.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorStep {
    pub losses: [f64; 3],
    pub scalar: f64,
    pub weights: [f64; 3],
    pub clamped: u8,
}

/// Scalarization parameters of the adversarial phase.
#[derive(Debug, Clone, Copy)]
pub struct ModeSettings<'a> {
    pub mode: &'a ScalarizationMode,
    pub mu: &'a UpperBounds,
    pub eps: f64,
}

/// One Adam step on the generator with the discriminator frozen.
pub fn train_step_generator(
    g: &mut GeneratorNet,
    adam: &mut Adam,
    d: &DiscriminatorNet,
    batch: &Batch,
    settings: &LossSettings,
    mode: &ModeSettings,
    lr: f64,
) -> Result<GeneratorStep> {
    let grad = generator_gradient(
        g,
        d,
        batch,
        settings,
        GeneratorObjective::Mode {
            mode: mode.mode,
            mu: mode.mu,
            eps: mode.eps,
        },
    )?;
    let l = LossVector::new(grad.losses.to_vec())?;
    let scalar = scalarize(&l, mode.mode, mode.mu, mode.eps)?;
    let flags = clamp_flags(&l, mode.mode, mode.mu, mode.eps)?;
    let clamped = flags.iter().enumerate().fold(0u8, |m, (k, &f)| m | ((f as u8) << k));
    if !scalar.is_finite() || grad.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteOutput { op: "scalarize" });
    }
    adam.step(g.params_mut(), &grad.grads, lr)?;
    let weights: [f64; 3] = grad
        .weights
        .try_into()
        .map_err(|_| Error::invalid("expected three loss weights"))?;
    Ok(GeneratorStep {
        losses: grad.losses,
        scalar,
        weights,
        clamped,
    })
}

/// One Adam step on the discriminator against detached generator output.
/// Returns the discriminator loss before the step.
pub fn train_step_discriminator(
    g: &GeneratorNet,
    d: &mut DiscriminatorNet,
    adam: &mut Adam,
    batch: &Batch,
    lr: f64,
) -> Result<f64> {
    let fake = g.infer(&batch.lr)?;
    check_pair(&fake, &batch.hr)?;
    let mut tape = Tape::new();
    let real = tape.constant(batch.hr.clone());
    let fake = tape.constant(fake);
    let dp = d.register(&mut tape, true);
    let lr_logits = d.forward_with(&mut tape, real, &dp)?;
    let lf_logits = d.forward_with(&mut tape, fake, &dp)?;
    let loss = disc_loss(&mut tape, lr_logits, lf_logits)?;
    let value = tape.value(loss).item();
    let mut grads = tape.backward(loss)?;
    let grads: Vec<Tensor> = dp.into_iter().map(|v| grads.take(v)).collect();
    adam.step(d.params_mut(), &grads, lr)?;
    Ok(value)
}

/// Pixel-loss-only pretraining settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainSettings {
    pub iterations: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub norm_p: u32,
}

/// Adam steps on the pixel loss. Returns the loss of every iteration,
/// measured before its update.
pub fn pretrain_generator<R: Rng + ?Sized>(
    g: &mut GeneratorNet,
    data: &Dataset,
    settings: &PretrainSettings,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut adam = Adam::new(g.params());
    let mut losses = Vec::with_capacity(settings.iterations);
    for it in 0..settings.iterations {
        let batch = sample_batch(data, settings.batch_size, settings.patch_size, rng)?;
        let mut step = || -> Result<f64> {
            let mut tape = Tape::new();
            let lr = tape.constant(batch.lr.clone());
            let hr = tape.constant(batch.hr.clone());
            let gp = g.register(&mut tape, true);
            let fake = g.forward_with(&mut tape, lr, &gp)?;
            let loss = pixel_loss(&mut tape, fake, hr, settings.norm_p)?;
            let value = tape.value(loss).item();
            let mut grads = tape.backward(loss)?;
            let grads: Vec<Tensor> = gp.into_iter().map(|v| grads.take(v)).collect();
            adam.step(g.params_mut(), &grads, settings.lr)?;
            Ok(value)
        };
        let value = step().map_err(|e| Error::TrainingAborted {
            phase: "pretrain",
            iteration: it,
            msg: e.to_string(),
        })?;
        losses.push(value);
    }
    Ok(losses)
}

fn check_channels(cfg: &TrainConfig, data: &Dataset) -> Result<()> {
    if cfg.arch.channels != data.channels() {
        return Err(Error::invalid(format!(
            "network expects {} channel images, dataset has {}",
            cfg.arch.channels,
            data.channels()
        )));
    }
    Ok(())
}

/// Networks after pixel-loss pretraining.
#[derive(Debug, Clone, PartialEq)]
pub struct Pretrained {
    pub generator: GeneratorNet,
    pub discriminator: DiscriminatorNet,
    pub losses: Vec<f64>,
}

pub fn pretrain_phase(cfg: &TrainConfig, data: &Dataset) -> Result<Pretrained> {
    cfg.validate()?;
    check_channels(cfg, data)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream::INIT));
    let (mut generator, discriminator) = init_networks(&cfg.arch, &mut init_rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream::PRETRAIN));
    let settings = PretrainSettings {
        iterations: cfg.pretrain_iters,
        lr: cfg.pretrain_lr,
        batch_size: cfg.batch_size,
        patch_size: cfg.patch_size,
        norm_p: cfg.norm_p,
    };
    let losses = pretrain_generator(&mut generator, data, &settings, &mut rng)?;
    Ok(Pretrained {
        generator,
        discriminator,
        losses,
    })
}

/// Networks and per-iteration records of an adversarial phase.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialRun {
    pub generator: GeneratorNet,
    pub discriminator: DiscriminatorNet,
    pub history: TrainHistory,
    pub disc_losses: Vec<f64>,
}

/// Alternating discriminator/generator steps (1:1, same minibatch) from the
/// given networks. Fresh optimizer state; batches come from a stream
/// derived from the config seed only, so runs that start from the same
/// networks see the same data.
pub fn adversarial_phase(
    cfg: &TrainConfig,
    data: &Dataset,
    generator: GeneratorNet,
    discriminator: DiscriminatorNet,
    mode: &ScalarizationMode,
) -> Result<AdversarialRun> {
    cfg.validate()?;
    check_channels(cfg, data)?;
    let (mut g, mut d) = (generator, discriminator);
    let mu = cfg.upper_bounds()?;
    let schedule = cfg.schedule()?;
    let extractor = FeatureExtractor::new(
        cfg.arch.channels,
        derive_seed(cfg.seed, stream::FEATURES),
        cfg.feature_tap,
    )?;
    let settings = LossSettings {
        extractor: &extractor,
        variant: cfg.adversarial,
        norm_p: cfg.norm_p,
    };
    let mode_settings = ModeSettings { mode, mu: &mu, eps: cfg.eps };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream::ADVERSARIAL));
    let mut adam_g = Adam::new(g.params());
    let mut adam_d = Adam::new(d.params());
    let mut history = TrainHistory::new();
    let mut disc_losses = Vec::with_capacity(cfg.adversarial_iters);

    for it in 0..cfg.adversarial_iters {
        let lr = schedule.at(it);
        let abort = |e: Error| Error::TrainingAborted {
            phase: "adversarial",
            iteration: it,
            msg: e.to_string(),
        };
        let batch = sample_batch(data, cfg.batch_size, cfg.patch_size, &mut rng).map_err(abort)?;
        let dl = train_step_discriminator(&g, &mut d, &mut adam_d, &batch, lr).map_err(abort)?;
        let step = train_step_generator(&mut g, &mut adam_g, &d, &batch, &settings, &mode_settings, lr)
            .map_err(abort)?;
        disc_losses.push(dl);
        history.push(HistoryRecord {
            iter: it,
            losses: step.losses,
            scalar: step.scalar,
            weights: step.weights,
            clamped: step.clamped,
            lr,
        });
    }
    Ok(AdversarialRun {
        generator: g,
        discriminator: d,
        history,
        disc_losses,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub pretrain_losses: Vec<f64>,
    pub run: AdversarialRun,
}

/// Pretraining followed by the adversarial phase under `cfg.mode`.
pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    let pre = pretrain_phase(cfg, data)?;
    let run = adversarial_phase(cfg, data, pre.generator, pre.discriminator, &cfg.mode)?;
    Ok(TrainOutcome {
        pretrain_losses: pre.losses,
        run,
    })
}

pub const HISTORY_FILE: &str = "history.csv";
pub const PRETRAIN_FILE: &str = "pretrain.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.hvgn";

/// Writes `history.csv`, `pretrain.csv` and `checkpoint.hvgn` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &TrainConfig, outcome: &TrainOutcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| -> Result<PathBuf> {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    let ck = Checkpoint::from_networks(&outcome.run.generator, &outcome.run.discriminator);
    Ok(vec![
        write(HISTORY_FILE, outcome.run.history.to_csv().as_bytes())?,
        write(
            PRETRAIN_FILE,
            pretrain_csv(&outcome.pretrain_losses, cfg.pretrain_lr).as_bytes(),
        )?,
        write(CHECKPOINT_FILE, &ck.to_bytes())?,
    ])
}
