//! Waveform-to-waveform speech enhancement trained adversarially.

pub mod audio;
pub mod config;
pub mod data;
pub mod autograd;
pub mod dsp;
pub mod enhance;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod plot;
pub mod train;

pub use audio::AudioBuffer;
pub use error::{Error, Result};
