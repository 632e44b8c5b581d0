//! Non-autoregressive pedestrian trajectory prediction.
//!
//! The crate is organised bottom-up:
//!
//! * [`numeric`]: tensors, reverse-mode tape, layers, Adam, RNG streams.
//! * [`dataio`]: trajectory and scene-grid files, windowing, normalization,
//!   augmentation, leave-one-out splits and a synthetic crowd generator.
//! * [`model`]: trajectory/social/scene encoders, personal and interaction
//!   context generators, latent head and the parallel decoder.
//! * [`train`]: losses, the mini-batch loop and checkpoints.
//! * [`eval`]: ADE/FDE, best-of-K, reports, error-increment tables and
//!   heatmaps.

pub mod dataio;
pub mod error;
pub mod eval;
pub mod model;
pub mod numeric;
pub mod train;

pub use error::{Error, Result};
