//! Deterministic signal-processing primitives.

pub mod filter;
pub mod mel;
pub mod stft;

pub use filter::{convolve_buffers, convolve_full, downsample_by_2, fir_filter, linear_convolution};
pub use mel::{mel_spectrogram, MelConfig};
pub use stft::{log_spectrogram, stft, ComplexSpectrogram, RealMatrix, SpectrogramConfig, StftPlan, Window, LOG_FLOOR};
