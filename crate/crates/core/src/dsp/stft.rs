use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::autograd::kernels::{source_index, PadMode};
use crate::error::{Error, Result};

/// Magnitude floor used by every log-compressed spectrogram.
pub const LOG_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrogramConfig {
    pub fft_size: usize,
    pub hop_size: usize,
    #[serde(default)]
    pub window: Window,
    #[serde(default = "default_true")]
    pub center_padding: bool,
}

fn default_true() -> bool {
    true
}

impl SpectrogramConfig {
    pub const fn new(fft_size: usize, hop_size: usize) -> Self {
        Self {
            fft_size,
            hop_size,
            window: Window::Hann,
            center_padding: true,
        }
    }

    /// High frequency resolution: 2048 / 512.
    pub const fn large() -> Self {
        Self::new(2048, 512)
    }

    /// High time resolution: 512 / 128.
    pub const fn small() -> Self {
        Self::new(512, 128)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || !self.fft_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "fft_size {} must be a power of two",
                self.fft_size
            )));
        }
        if self.hop_size == 0 || self.hop_size > self.fft_size {
            return Err(Error::invalid(format!(
                "hop_size {} must be in 1..={}",
                self.hop_size, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if self.center_padding {
            len / self.hop_size + 1
        } else if len < self.fft_size {
            0
        } else {
            (len - self.fft_size) / self.hop_size + 1
        }
    }
}

/// Complex STFT, stored frame-major (`frames × bins`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn at(&self, frame: usize, bin: usize) -> Complex64 {
        self.data[frame * self.bins + bin]
    }

    pub fn magnitudes(&self) -> RealMatrix {
        RealMatrix {
            rows: self.frames,
            cols: self.bins,
            data: self.data.iter().map(|c| c.norm()).collect(),
        }
    }
}

/// Row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl RealMatrix {
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transposed(&self) -> RealMatrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        RealMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

/// Precomputed window and FFT for one spectrogram geometry.
pub struct StftPlan {
    cfg: SpectrogramConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftPlan").field("cfg", &self.cfg).finish()
    }
}

impl StftPlan {
    pub fn new(cfg: SpectrogramConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg,
            window: cfg.window.coefficients(cfg.fft_size),
            fft,
        })
    }

    pub fn config(&self) -> &SpectrogramConfig {
        &self.cfg
    }

    fn pad(&self) -> usize {
        if self.cfg.center_padding {
            self.cfg.fft_size / 2
        } else {
            0
        }
    }

    /// Spectra of all frames of `x`.
    pub fn analyze(&self, x: &[f64]) -> ComplexSpectrogram {
        let n = self.cfg.fft_size;
        let bins = self.cfg.n_bins();
        let frames = self.cfg.frame_count(x.len());
        let pad = self.pad() as isize;
        let mut data = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for f in 0..frames {
            let start = (f * self.cfg.hop_size) as isize - pad;
            for (i, b) in buf.iter_mut().enumerate() {
                let s = source_index(start + i as isize, x.len(), PadMode::Reflect).unwrap();
                *b = Complex64::new(x[s] * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            data.extend_from_slice(&buf[..bins]);
        }
        ComplexSpectrogram { frames, bins, data }
    }

    /// Pull a gradient with respect to `|X|` back to the time-domain input.
    ///
    /// Bins with zero magnitude contribute nothing (subgradient 0).
    pub fn magnitude_adjoint(&self, len: usize, spec: &ComplexSpectrogram, grad_mag: &[f64]) -> Vec<f64> {
        let n = self.cfg.fft_size;
        let bins = spec.bins;
        let pad = self.pad() as isize;
        let mut gx = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for f in 0..spec.frames {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            let mut any = false;
            for k in 0..bins {
                let x = spec.data[f * bins + k];
                let m = x.norm();
                let g = grad_mag[f * bins + k];
                if m > 0.0 && g != 0.0 {
                    buf[k] = x.conj() * (g / m);
                    any = true;
                }
            }
            if !any {
                continue;
            }
            self.fft.process(&mut buf);
            let start = (f * self.cfg.hop_size) as isize - pad;
            for i in 0..n {
                let s = source_index(start + i as isize, len, PadMode::Reflect).unwrap();
                gx[s] += self.window[i] * buf[i].re;
            }
        }
        gx
    }
}

pub fn stft(audio: &AudioBuffer, cfg: &SpectrogramConfig) -> Result<ComplexSpectrogram> {
    let plan = StftPlan::new(*cfg)?;
    if !cfg.center_padding && audio.len() < cfg.fft_size {
        return Err(Error::invalid(format!(
            "{} samples is shorter than one uncentered frame of {}",
            audio.len(),
            cfg.fft_size
        )));
    }
    Ok(plan.analyze(audio.samples()))
}

/// `ln(|STFT| + floor_eps)`, frames × bins.
pub fn log_spectrogram(audio: &AudioBuffer, cfg: &SpectrogramConfig, floor_eps: f64) -> Result<RealMatrix> {
    if !(floor_eps > 0.0) || !floor_eps.is_finite() {
        return Err(Error::invalid(format!("floor_eps must be positive, got {floor_eps}")));
    }
    let mut m = stft(audio, cfg)?.magnitudes();
    m.data.iter_mut().for_each(|v| *v = (*v + floor_eps).ln());
    Ok(m)
}
