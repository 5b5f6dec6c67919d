//! Short-time objective intelligibility.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const STOI_RATE_HZ: u32 = 10000;
const FRAME: usize = 256;
const HOP: usize = 128;
const NFFT: usize = 512;
const N_BANDS: usize = 15;
const MIN_FREQ_HZ: f64 = 150.0;
/// Frames per intermediate-intelligibility segment (384 ms).
pub const SEGMENT_FRAMES: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = 1e-12;

/// Symmetric Hann of length `n` without the zero end points.
fn hann_inner(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(FRAME)).step_by(HOP)
}

/// Drop frames whose reference energy is more than 40 dB below the loudest,
/// then overlap-add the survivors of both signals.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = hann_inner(FRAME);
    let frames: Vec<usize> = frame_starts(x.len()).collect();
    let energy: Vec<f64> = frames
        .iter()
        .map(|&s| {
            let e: f64 = (0..FRAME).map(|i| (w[i] * x[s + i]).powi(2)).sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = frames
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| max - DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    if keep.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (keep.len() - 1) * HOP + FRAME;
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (j, &s) in keep.iter().enumerate() {
        for i in 0..FRAME {
            xs[j * HOP + i] += w[i] * x[s + i];
            ys[j * HOP + i] += w[i] * y[s + i];
        }
    }
    (xs, ys)
}

/// Third-octave band edges as FFT bin ranges `[lo, hi)`.
fn third_octave_bins(fs: f64) -> Vec<(usize, usize)> {
    let bins = NFFT / 2 + 1;
    let f: Vec<f64> = (0..bins).map(|k| k as f64 * fs / NFFT as f64).collect();
    let nearest = |target: f64| {
        let mut best = 0;
        for k in 0..bins {
            if (f[k] - target).powi(2) < (f[best] - target).powi(2) {
                best = k;
            }
        }
        best
    };
    (0..N_BANDS)
        .map(|k| {
            let lo = MIN_FREQ_HZ * 2f64.powf((2.0 * k as f64 - 1.0) / 6.0);
            let hi = MIN_FREQ_HZ * 2f64.powf((2.0 * k as f64 + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Band envelopes, `bands × frames`.
fn band_envelopes(x: &[f64], bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let w = hann_inner(FRAME);
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let mut env = vec![vec![0.0; starts.len()]; bands.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); NFFT];
    for (m, &s) in starts.iter().enumerate() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(if i < FRAME { w[i] * x[s + i] } else { 0.0 }, 0.0);
        }
        fft.process(&mut buf);
        for (j, &(lo, hi)) in bands.iter().enumerate() {
            env[j][m] = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        }
    }
    env
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut num, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        na += (x - ma) * (x - ma);
        nb += (y - mb) * (y - mb);
    }
    num / (na.sqrt() * nb.sqrt() + EPS)
}

/// Intelligibility of `enhanced` against `reference`, both resampled to 10 kHz.
pub fn stoi(enhanced: &AudioBuffer, reference: &AudioBuffer) -> Result<f64> {
    if enhanced.len() != reference.len() || enhanced.sample_rate_hz() != reference.sample_rate_hz() {
        return Err(Error::invalid("stoi needs equal-length signals at the same rate"));
    }
    let x = reference.resampled(STOI_RATE_HZ)?;
    let y = enhanced.resampled(STOI_RATE_HZ)?;
    let (xs, ys) = remove_silent_frames(x.samples(), y.samples());
    let bands = third_octave_bins(STOI_RATE_HZ as f64);
    let xe = band_envelopes(&xs, &bands);
    let ye = band_envelopes(&ys, &bands);
    let frames = xe.first().map_or(0, Vec::len);
    if frames < SEGMENT_FRAMES {
        return Err(Error::invalid(format!(
            "stoi needs at least {SEGMENT_FRAMES} non-silent frames, got {frames}"
        )));
    }
    let clip = 1.0 + 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for m in SEGMENT_FRAMES..=frames {
        for j in 0..N_BANDS {
            let xa = &xe[j][m - SEGMENT_FRAMES..m];
            let ya = &ye[j][m - SEGMENT_FRAMES..m];
            let nx = xa.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = ya.iter().map(|v| v * v).sum::<f64>().sqrt();
            let alpha = nx / (ny + EPS);
            let yc: Vec<f64> = ya.iter().zip(xa).map(|(y, x)| (y * alpha).min(x * clip)).collect();
            total += correlation(xa, &yc);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_layout() {
        let b = third_octave_bins(10000.0);
        assert_eq!(b.len(), 15);
        // 150 Hz band spans bins nearest 133.6 and 168.4 Hz at 19.53 Hz spacing.
        assert_eq!(b[0], (7, 9));
        assert!(b.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn short_input_is_rejected() {
        let a = AudioBuffer::new((0..2000).map(|i| (i as f64 * 0.1).sin()).collect(), 16000).unwrap();
        assert!(stoi(&a, &a).is_err());
    }
}
