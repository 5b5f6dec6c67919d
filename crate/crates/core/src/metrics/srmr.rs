//! Simplified speech-to-reverberation modulation energy ratio.
//!
//! Band envelopes come from an STFT with ERB-spaced triangular weights rather
//! than a gammatone filterbank, and the score is the ratio of modulation energy
//! in the four lowest modulation bands to the four highest. Values are not
//! comparable with the published SRMR toolbox.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::{AudioBuffer, WORKING_RATE_HZ};
use crate::dsp::{stft, SpectrogramConfig};
use crate::error::{Error, Result};

pub const N_ACOUSTIC_BANDS: usize = 23;
pub const N_MOD_BANDS: usize = 8;
const ENVELOPE_HOP: usize = 32;
const FFT: usize = 512;
const LOW_HZ: f64 = 125.0;
const HIGH_HZ: f64 = 7000.0;
const MOD_LO_HZ: f64 = 4.0;
const MOD_HI_HZ: f64 = 128.0;

fn erb_rate(f: f64) -> f64 {
    21.4 * (1.0 + 0.00437 * f).log10()
}

/// Modulation band edges `(lo, hi)` in Hz around log-spaced centers 4..128 Hz.
pub fn modulation_bands() -> Vec<(f64, f64)> {
    let ratio = (MOD_HI_HZ / MOD_LO_HZ).powf(1.0 / (N_MOD_BANDS - 1) as f64);
    let half = ratio.sqrt();
    (0..N_MOD_BANDS)
        .map(|i| {
            let c = MOD_LO_HZ * ratio.powi(i as i32);
            (c / half, c * half)
        })
        .collect()
}

/// Triangular weights on the ERB-rate axis, `bands × bins`.
fn erb_weights(sr: f64, bins: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = (erb_rate(LOW_HZ), erb_rate(HIGH_HZ));
    let step = (hi - lo) / (N_ACOUSTIC_BANDS + 1) as f64;
    (0..N_ACOUSTIC_BANDS)
        .map(|b| {
            let (l, c, h) = (lo + b as f64 * step, lo + (b + 1) as f64 * step, lo + (b + 2) as f64 * step);
            (0..bins)
                .map(|k| {
                    let e = erb_rate(k as f64 * sr / (2.0 * (bins - 1) as f64));
                    if e <= l || e >= h {
                        0.0
                    } else if e <= c {
                        (e - l) / (c - l)
                    } else {
                        (h - e) / (h - c)
                    }
                })
                .collect()
        })
        .collect()
}

/// Modulation energy per `(acoustic band, modulation band)`.
pub fn modulation_energies(audio: &AudioBuffer) -> Result<Vec<[f64; N_MOD_BANDS]>> {
    let x = audio.resampled(WORKING_RATE_HZ)?;
    if x.len() < WORKING_RATE_HZ as usize {
        return Err(Error::invalid(format!(
            "srmr needs at least 1 s of audio, got {:.3} s",
            x.duration_s()
        )));
    }
    let cfg = SpectrogramConfig::new(FFT, ENVELOPE_HOP);
    let spec = stft(&x, &cfg)?;
    let weights = erb_weights(WORKING_RATE_HZ as f64, spec.bins);
    let frame_rate = WORKING_RATE_HZ as f64 / ENVELOPE_HOP as f64;
    let n = spec.frames;
    let nfft = n.next_power_of_two();
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let mod_bands = modulation_bands();
    let mut out = Vec::with_capacity(N_ACOUSTIC_BANDS);
    for w in &weights {
        let env: Vec<f64> = (0..n)
            .map(|f| {
                (0..spec.bins)
                    .filter(|&k| w[k] > 0.0)
                    .map(|k| w[k] * spec.at(f, k).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let mean = env.iter().sum::<f64>() / n as f64;
        let mut buf: Vec<Complex64> = (0..nfft)
            .map(|i| Complex64::new(if i < n { (env[i] - mean) * window[i] } else { 0.0 }, 0.0))
            .collect();
        fft.process(&mut buf);
        let mut e = [0.0; N_MOD_BANDS];
        for (k, c) in buf.iter().enumerate().take(nfft / 2 + 1) {
            let f = k as f64 * frame_rate / nfft as f64;
            for (j, &(lo, hi)) in mod_bands.iter().enumerate() {
                if f >= lo && f < hi {
                    e[j] += c.norm_sqr();
                }
            }
        }
        out.push(e);
    }
    Ok(out)
}

/// Low-to-high modulation energy ratio; larger means less reverberant.
pub fn srmr_simplified(audio: &AudioBuffer) -> Result<f64> {
    let e = modulation_energies(audio)?;
    let half = N_MOD_BANDS / 2;
    let low: f64 = e.iter().map(|b| b[..half].iter().sum::<f64>()).sum();
    let high: f64 = e.iter().map(|b| b[half..].iter().sum::<f64>()).sum();
    if high <= 0.0 {
        return Err(Error::invalid("srmr: no high-rate modulation energy (silent input?)"));
    }
    Ok(low / high)
}
