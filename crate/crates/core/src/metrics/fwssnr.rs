//! Frequency-weighted segmental SNR over 25 critical bands.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const FWSSNR_MIN_DB: f64 = -10.0;
pub const FWSSNR_MAX_DB: f64 = 35.0;
const GAMMA: f64 = 0.2;
const FRAME_S: f64 = 0.032;

const CENTER_HZ: [f64; 25] = [
    50.0, 120.0, 190.0, 260.0, 330.0, 400.0, 470.0, 540.0, 617.372, 703.378, 798.717, 904.128, 1020.38, 1148.30,
    1288.72, 1442.54, 1610.70, 1794.16, 1993.93, 2211.08, 2446.71, 2701.97, 2978.04, 3276.17, 3597.63,
];
const BANDWIDTH_HZ: [f64; 25] = [
    70.0, 70.0, 70.0, 70.0, 70.0, 70.0, 70.0, 77.3724, 86.0056, 95.3398, 105.411, 116.256, 127.914, 140.423, 153.823,
    168.154, 183.457, 199.776, 217.153, 235.631, 255.255, 276.072, 298.126, 321.465, 346.136,
];

/// Frame geometry `(length, hop, fft size)` at a sample rate.
pub fn frame_geometry(sample_rate_hz: u32) -> (usize, usize, usize) {
    let win = (FRAME_S * sample_rate_hz as f64).round() as usize;
    let hop = win / 4;
    let nfft = (2 * win).next_power_of_two();
    (win, hop, nfft)
}

/// Gaussian-shaped critical-band weights over the first `nfft/2` bins.
pub fn critical_band_filters(sample_rate_hz: u32, nfft: usize) -> Vec<Vec<f64>> {
    let half = nfft / 2;
    let max_freq = sample_rate_hz as f64 / 2.0;
    let min_factor = (-30.0f64 / (2.0 * 2.303)).exp();
    (0..25)
        .map(|i| {
            let f0 = CENTER_HZ[i] / max_freq * half as f64;
            let bw = BANDWIDTH_HZ[i] / max_freq * half as f64;
            let norm = BANDWIDTH_HZ[0].ln() - BANDWIDTH_HZ[i].ln();
            (0..half)
                .map(|j| {
                    let v = (-11.0 * ((j as f64 - f0.floor()) / bw).powi(2) + norm).exp();
                    if v > min_factor {
                        v
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Symmetric Hann without zero end points.
fn hann_inner(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

/// Spectrum magnitudes normalized to unit area over the first half; `None` for a silent frame.
fn normalized_magnitude(frame: &[f64], win: &[f64], nfft: usize, fft: &dyn rustfft::Fft<f64>) -> Option<Vec<f64>> {
    let mut buf: Vec<Complex64> = (0..nfft)
        .map(|i| Complex64::new(if i < frame.len() { frame[i] * win[i] } else { 0.0 }, 0.0))
        .collect();
    fft.process(&mut buf);
    let mag: Vec<f64> = buf[..nfft / 2].iter().map(|c| c.norm()).collect();
    let s: f64 = mag.iter().sum();
    if s > 0.0 {
        Some(mag.into_iter().map(|m| m / s).collect())
    } else {
        None
    }
}

/// Per-frame clamped values; frames where the reference is silent are `None`.
pub fn fw_ssnr_frames(enhanced: &AudioBuffer, reference: &AudioBuffer) -> Result<Vec<Option<f64>>> {
    if enhanced.len() != reference.len() || enhanced.sample_rate_hz() != reference.sample_rate_hz() {
        return Err(Error::invalid("fw_ssnr needs equal-length signals at the same rate"));
    }
    if reference.energy() == 0.0 {
        return Err(Error::invalid("fw_ssnr reference has zero energy"));
    }
    let sr = reference.sample_rate_hz();
    let (win_len, hop, nfft) = frame_geometry(sr);
    if reference.len() < win_len {
        return Err(Error::invalid(format!(
            "fw_ssnr needs at least one {win_len}-sample frame, got {} samples",
            reference.len()
        )));
    }
    let filters = critical_band_filters(sr, nfft);
    let win = hann_inner(win_len);
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let n_frames = (reference.len() - win_len) / hop + 1;
    let (x, y) = (reference.samples(), enhanced.samples());
    let band = |spec: &[f64]| -> Vec<f64> { filters.iter().map(|f| f.iter().zip(spec).map(|(a, b)| a * b).sum()).collect() };
    let mut out = Vec::with_capacity(n_frames);
    for m in 0..n_frames {
        let s = m * hop;
        let Some(cs) = normalized_magnitude(&x[s..s + win_len], &win, nfft, fft.as_ref()) else {
            out.push(None);
            continue;
        };
        let ce = band(&cs);
        let pe = normalized_magnitude(&y[s..s + win_len], &win, nfft, fft.as_ref())
            .map(|p| band(&p))
            .unwrap_or_else(|| vec![0.0; 25]);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..25 {
            let err = ((ce[i] - pe[i]).powi(2)).max(f64::EPSILON);
            let w = ce[i].powf(GAMMA);
            num += w * 10.0 * (ce[i] * ce[i] / err).log10();
            den += w;
        }
        out.push(Some((num / den).clamp(FWSSNR_MIN_DB, FWSSNR_MAX_DB)));
    }
    Ok(out)
}

/// Mean of the clamped per-frame values over frames with a non-silent reference.
pub fn fw_ssnr(enhanced: &AudioBuffer, reference: &AudioBuffer) -> Result<f64> {
    let frames: Vec<f64> = fw_ssnr_frames(enhanced, reference)?.into_iter().flatten().collect();
    if frames.is_empty() {
        return Err(Error::invalid("fw_ssnr found no non-silent reference frame"));
    }
    Ok(frames.iter().sum::<f64>() / frames.len() as f64)
}
