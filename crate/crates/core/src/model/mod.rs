//! The forecasting network: encoders, context generators, latent heads and
//! the decoder, plus the recurrent reference decoder used for comparisons.

mod config;
mod nap;

pub(crate) use config::parse_bool;
pub use config::{DecoderKind, NapConfig, Variant, CONFIG_KEYS};
pub use nap::{Bound, ContextSet, EncodedState, ForecastSet, HeadVars, LatentDraw, ModelInput, NapModel, StateVars};
