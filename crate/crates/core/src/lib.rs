//! Hypervolume scalarization of multi-objective training losses.
//!
//! The crate bundles the pieces needed to train a small super-resolution
//! GAN whose generator objective is the negative log hypervolume of its loss
//! vector against per-loss upper bounds:
//!
//! * [`moo`]: Pareto dominance, nondominated filtering, exact and
//!   Monte-Carlo hypervolume.
//! * [`scalarize`]: the hypervolume objective, its normalized variant, the
//!   induced gradient weights and the fixed-weight baseline.
//! * [`autodiff`]: a tape-based reverse-mode engine over `f64` tensors.
//! * [`losses`]: adversarial, pixel and feature losses on the tape.
//! * [`model`]: networks, Adam, the LR schedule and the training loop.
//! * [`metrics`]: PSNR, SSIM and GMSD.
//! * [`data_io`]: PGM/PPM images, bicubic downscaling, patches, points CSV.

pub mod autodiff;
pub mod data_io;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod moo;
pub mod scalarize;

pub use error::{Error, Result};
