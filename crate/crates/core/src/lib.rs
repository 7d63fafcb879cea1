//! Multimodal emotion-prompt alignment, emotion-conditioned speech synthesis
//! at desk scale, and objective speech evaluation metrics.

pub mod datagen;
pub mod dsp;
pub mod emi_condition;
pub mod ep_align;
pub mod error;
pub mod metrics;
pub mod numeric;
pub mod synth;

pub use error::{Error, Result};
