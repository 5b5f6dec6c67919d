use serde::{Deserialize, Serialize};

use super::stft::{stft, RealMatrix, SpectrogramConfig};
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub spectrogram: SpectrogramConfig,
}

impl Default for MelConfig {
    /// 80 bands over 20 Hz - 8 kHz on a 1024/256 STFT.
    fn default() -> Self {
        Self {
            n_mels: 80,
            f_min_hz: 20.0,
            f_max_hz: 8000.0,
            spectrogram: SpectrogramConfig::new(1024, 256),
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

impl MelConfig {
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        self.spectrogram.validate()?;
        let nyquist = sample_rate_hz as f64 / 2.0;
        if self.n_mels == 0 {
            return Err(Error::invalid("n_mels must be positive"));
        }
        if !(self.f_min_hz >= 0.0 && self.f_min_hz < self.f_max_hz) {
            return Err(Error::invalid(format!(
                "mel range must satisfy 0 <= f_min < f_max, got {}..{}",
                self.f_min_hz, self.f_max_hz
            )));
        }
        if self.f_max_hz > nyquist {
            return Err(Error::invalid(format!(
                "f_max {} Hz above Nyquist {} Hz",
                self.f_max_hz, nyquist
            )));
        }
        Ok(())
    }

    /// Filter centers in Hz, ascending.
    pub fn center_frequencies(&self) -> Vec<f64> {
        self.edge_frequencies()[1..=self.n_mels].to_vec()
    }

    fn edge_frequencies(&self) -> Vec<f64> {
        let (lo, hi) = (hz_to_mel(self.f_min_hz), hz_to_mel(self.f_max_hz));
        (0..self.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (self.n_mels + 1) as f64))
            .collect()
    }

    /// Triangular filterbank, `n_mels × (fft_size/2 + 1)`, unit peak.
    pub fn filterbank(&self, sample_rate_hz: u32) -> Result<RealMatrix> {
        self.validate(sample_rate_hz)?;
        let bins = self.spectrogram.n_bins();
        let df = sample_rate_hz as f64 / self.spectrogram.fft_size as f64;
        let edges = self.edge_frequencies();
        let mut data = vec![0.0; self.n_mels * bins];
        for m in 0..self.n_mels {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..bins {
                let f = k as f64 * df;
                let w = if f > l && f <= c {
                    (f - l) / (c - l)
                } else if f > c && f < r {
                    (r - f) / (r - c)
                } else {
                    0.0
                };
                data[m * bins + k] = w;
            }
            if data[m * bins..(m + 1) * bins].iter().all(|&w| w <= 0.0) {
                return Err(Error::invalid(format!(
                    "mel filter {m} ({l:.1}-{r:.1} Hz) covers no FFT bin; use fewer mels or a larger FFT"
                )));
            }
        }
        Ok(RealMatrix {
            rows: self.n_mels,
            cols: bins,
            data,
        })
    }
}

/// `ln(filterbank · |STFT| + floor_eps)`, n_mels × frames.
pub fn mel_spectrogram(audio: &AudioBuffer, mel: &MelConfig, floor_eps: f64) -> Result<RealMatrix> {
    if !(floor_eps > 0.0) {
        return Err(Error::invalid(format!("floor_eps must be positive, got {floor_eps}")));
    }
    let fb = mel.filterbank(audio.sample_rate_hz())?;
    let mags = stft(audio, &mel.spectrogram)?.magnitudes();
    let mut data = vec![0.0; mel.n_mels * mags.rows];
    for m in 0..mel.n_mels {
        let w = fb.row(m);
        for t in 0..mags.rows {
            let e: f64 = w.iter().zip(mags.row(t)).map(|(a, b)| a * b).sum();
            data[m * mags.rows + t] = (e + floor_eps).ln();
        }
    }
    Ok(RealMatrix {
        rows: mel.n_mels,
        cols: mags.rows,
        data,
    })
}
