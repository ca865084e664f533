//! Generator and discriminator networks, Adam, the step-halving schedule,
//! pixel-loss pretraining and the adversarial training loop.

mod checkpoint;
mod config;
mod data;
mod eval;
mod history;
mod nets;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{AdversarialVariant, TrainConfig};
pub use data::{sample_batch, Batch, Dataset};
pub use eval::{evaluate_image, evaluate_images, patch_psnr, super_resolve, PatchPsnr};
pub use history::{pretrain_csv, HistoryRecord, TrainHistory, HISTORY_HEADER};
pub use nets::{init_networks, ArchConfig, DiscriminatorNet, Forward, GeneratorNet};
pub use optim::{Adam, MultiStepLr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use train::{
    adversarial_phase, derive_seed, generator_gradient, pretrain_generator, pretrain_phase, stream,
    train, train_step_discriminator, train_step_generator, write_outputs, AdversarialRun, GeneratorGradient,
    GeneratorObjective, GeneratorStep, LossSettings, ModeSettings, PretrainSettings, Pretrained,
    TrainOutcome, CHECKPOINT_FILE, HISTORY_FILE, PRETRAIN_FILE,
};
