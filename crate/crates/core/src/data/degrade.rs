//! Signal-level degradations: noise mixing, reverberation, RIR reshaping and EQ.

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::{rms, AudioBuffer};
use crate::dsp::linear_convolution;
use crate::error::{Error, Result};

/// Half-width of the direct-path window around the RIR peak.
pub const DIRECT_WINDOW_S: f64 = 0.0025;

/// Amplitude decay, in nepers, over 60 dB.
const LN_1000: f64 = 6.907755278982137;

/// `clean + g·noise` with `g = rms(clean)/rms(noise)·10^(−snr/20)`.
pub fn mix_at_snr(clean: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<AudioBuffer> {
    if clean.len() != noise.len() {
        return Err(Error::invalid(format!(
            "clean has {} samples, noise {}",
            clean.len(),
            noise.len()
        )));
    }
    if clean.sample_rate_hz() != noise.sample_rate_hz() {
        return Err(Error::invalid("clean and noise sample rates differ"));
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid(format!("snr must be finite, got {snr_db}")));
    }
    let (rc, rn) = (clean.rms(), noise.rms());
    if rc == 0.0 {
        return Err(Error::invalid("clean signal has zero energy"));
    }
    if rn == 0.0 {
        return Err(Error::invalid("noise has zero energy"));
    }
    let g = noise_gain(rc, rn, snr_db);
    clean.with_samples(clean.samples().iter().zip(noise.samples()).map(|(c, n)| c + g * n).collect())
}

pub fn noise_gain(rms_clean: f64, rms_noise: f64, snr_db: f64) -> f64 {
    rms_clean / rms_noise * 10f64.powf(-snr_db / 20.0)
}

/// Index of the largest-magnitude sample (first on ties).
pub fn peak_index(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    best
}

/// Reverberate `clean`, shifted by the RIR peak so direct sound stays aligned.
pub fn apply_rir(clean: &AudioBuffer, rir: &AudioBuffer) -> Result<AudioBuffer> {
    if clean.sample_rate_hz() != rir.sample_rate_hz() {
        return Err(Error::invalid(format!(
            "clean at {} Hz, impulse response at {} Hz",
            clean.sample_rate_hz(),
            rir.sample_rate_hz()
        )));
    }
    let d = peak_index(rir.samples());
    let full = linear_convolution(clean.samples(), rir.samples());
    clean.with_samples(full[d..d + clean.len()].to_vec())
}

/// Direct-path window `[start, end)` around the peak.
pub fn direct_window(len: usize, peak: usize, sample_rate_hz: u32) -> (usize, usize) {
    let half = (DIRECT_WINDOW_S * sample_rate_hz as f64).round() as usize;
    (peak.saturating_sub(half), (peak + half + 1).min(len))
}

/// Reverberation time from Schroeder backward integration.
///
/// Fits a line to the energy decay curve between −5 dB and −25 dB (falling
/// back to −15 dB) and extrapolates to −60 dB.
pub fn schroeder_t60(rir: &AudioBuffer) -> Result<f64> {
    let x = rir.samples();
    let p = peak_index(x);
    let tail = &x[p..];
    let mut edc = vec![0.0; tail.len()];
    let mut acc = 0.0;
    for i in (0..tail.len()).rev() {
        acc += tail[i] * tail[i];
        edc[i] = acc;
    }
    if acc == 0.0 {
        return Err(Error::invalid("impulse response is all zeros"));
    }
    let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / acc).log10()).collect();
    let sr = rir.sample_rate_hz() as f64;
    for lo in [-25.0, -15.0] {
        let pts: Vec<(f64, f64)> = db
            .iter()
            .enumerate()
            .filter(|(_, &d)| d <= -5.0 && d >= lo)
            .map(|(i, &d)| (i as f64 / sr, d))
            .collect();
        if pts.len() < 8 || db.last().copied().unwrap_or(0.0) > lo {
            continue;
        }
        let n = pts.len() as f64;
        let (mt, md) = pts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0 / n, a.1 + b.1 / n));
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (t, d) in &pts {
            sxy += (t - mt) * (d - md);
            sxx += (t - mt) * (t - mt);
        }
        let slope = sxy / sxx;
        if slope < 0.0 {
            return Ok(-60.0 / slope);
        }
    }
    Err(Error::invalid("impulse response decay too short to estimate reverberation time"))
}

/// Shift the direct-to-reverberant ratio and scale the decay time.
///
/// The ±2.5 ms window around the peak is scaled by `10^(drr_offset_db/20)`;
/// samples after the window get an exponential envelope anchored at the window
/// edge that turns a decay time `T` into `rt60_scale·T`.
pub fn reshape_rir(rir: &AudioBuffer, drr_offset_db: f64, rt60_scale: f64) -> Result<AudioBuffer> {
    let x = rir.samples();
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid("impulse response is all zeros"));
    }
    if !drr_offset_db.is_finite() || !(rt60_scale > 0.0) || !rt60_scale.is_finite() {
        return Err(Error::invalid(format!(
            "invalid reshaping (drr {drr_offset_db} dB, rt60 scale {rt60_scale})"
        )));
    }
    let p = peak_index(x);
    let (start, end) = direct_window(x.len(), p, rir.sample_rate_hz());
    let mut out = x.to_vec();
    if drr_offset_db != 0.0 {
        let g = 10f64.powf(drr_offset_db / 20.0);
        out[start..end].iter_mut().for_each(|v| *v *= g);
    }
    if rt60_scale != 1.0 {
        let t60 = schroeder_t60(rir)?;
        let rho = LN_1000 / t60;
        let k = rho * (1.0 - 1.0 / rt60_scale);
        let sr = rir.sample_rate_hz() as f64;
        for (i, v) in out.iter_mut().enumerate().skip(end) {
            *v *= (k * (i - end) as f64 / sr).exp();
        }
    }
    rir.with_samples(out)
}

/// Band centers in cycles per sample, log-spaced from 1/64 to 7/16.
pub fn eq_band_centers(n_bands: usize) -> Vec<f64> {
    let (lo, hi) = (1.0f64 / 64.0, 7.0f64 / 16.0);
    (0..n_bands)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n_bands - 1) as f64))
        .collect()
}

/// Default FIR length of the equalizers.
pub const EQ_TAPS: usize = 511;

/// Linear-phase FIR whose gain interpolates `gains_db` linearly on a log
/// frequency axis between band centers and is held beyond the outer bands.
pub fn multiband_eq_taps(gains_db: &[f64], n_taps: usize) -> Result<Vec<f64>> {
    if gains_db.len() < 2 {
        return Err(Error::invalid("an equalizer needs at least 2 bands"));
    }
    if n_taps % 2 == 0 || n_taps < 3 {
        return Err(Error::invalid(format!("equalizer length must be odd and >= 3, got {n_taps}")));
    }
    let centers = eq_band_centers(gains_db.len());
    let lc: Vec<f64> = centers.iter().map(|c| c.ln()).collect();
    let gain_at = |f: f64| -> f64 {
        if f <= centers[0] {
            return gains_db[0];
        }
        let lf = f.ln();
        for j in 1..centers.len() {
            if f <= centers[j] {
                let a = (lf - lc[j - 1]) / (lc[j] - lc[j - 1]);
                return gains_db[j - 1] * (1.0 - a) + gains_db[j] * a;
            }
        }
        gains_db[gains_db.len() - 1]
    };
    // Windowed frequency sampling: zero-phase response on a dense grid, inverse FFT.
    let grid = 8192;
    let half = (n_taps - 1) / 2;
    let mut spec: Vec<Complex64> = (0..grid)
        .map(|k| {
            let f = k.min(grid - k) as f64 / grid as f64;
            Complex64::new(10f64.powf(gain_at(f) / 20.0), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(grid).process(&mut spec);
    let taps = (0..n_taps)
        .map(|n| {
            let m = n as isize - half as isize;
            let win = 0.5 + 0.5 * (std::f64::consts::PI * m as f64 / (half + 1) as f64).cos();
            spec[m.rem_euclid(grid as isize) as usize].re / grid as f64 * win
        })
        .collect::<Vec<f64>>();
    Ok(taps)
}

/// Per-band gains uniform in `[−max_gain_db, max_gain_db]`.
pub fn draw_eq_gains<R: Rng>(rng: &mut R, n_bands: usize, max_gain_db: f64) -> Vec<f64> {
    (0..n_bands)
        .map(|_| if max_gain_db > 0.0 { rng.gen_range(-max_gain_db..=max_gain_db) } else { 0.0 })
        .collect()
}

/// Random linear-phase multi-band equalizer.
pub fn random_multiband_eq<R: Rng>(rng: &mut R, n_bands: usize, max_gain_db: f64) -> Result<Vec<f64>> {
    if n_bands < 2 {
        return Err(Error::invalid(format!("an equalizer needs at least 2 bands, got {n_bands}")));
    }
    multiband_eq_taps(&draw_eq_gains(rng, n_bands, max_gain_db), EQ_TAPS)
}

/// Zero-delay application of a linear-phase FIR; empty taps mean identity.
pub fn apply_eq(x: &AudioBuffer, taps: &[f64]) -> Result<AudioBuffer> {
    if taps.is_empty() {
        return Ok(x.clone());
    }
    let d = (taps.len() - 1) / 2;
    let full = linear_convolution(x.samples(), taps);
    x.with_samples(full[d..d + x.len()].to_vec())
}

/// Tile (or crop) `noise` to `len` samples starting at `offset`.
pub fn loop_to_length(noise: &[f64], len: usize, offset: usize) -> Vec<f64> {
    let n = noise.len();
    (0..len).map(|i| noise[(offset + i) % n]).collect()
}

pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    20.0 * (rms(signal) / rms(noise)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn buf(v: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(v, 16000).unwrap()
    }

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn mix_gain_examples() {
        assert!((noise_gain(0.1, 0.1, 20.0) - 0.1).abs() < 1e-15);
        assert_eq!(noise_gain(0.3, 0.3, 0.0), 1.0);
        let c = buf(noise(1, 2000));
        let n = buf(noise(2, 2000));
        for snr in [-5.0, 10.0, 17.3, 30.0] {
            let m = mix_at_snr(&c, &n, snr).unwrap();
            let resid: Vec<f64> = m.samples().iter().zip(c.samples()).map(|(a, b)| a - b).collect();
            let ec: f64 = c.samples().iter().map(|v| v * v).sum();
            let en: f64 = resid.iter().map(|v| v * v).sum();
            assert!((10.0 * (ec / en).log10() - snr).abs() < 1e-6);
        }
        assert!(mix_at_snr(&c, &buf(vec![0.0; 2000]), 10.0).is_err());
        assert!(mix_at_snr(&buf(vec![0.0; 2000]), &n, 10.0).is_err());
    }

    #[test]
    fn rir_alignment() {
        let c = buf(noise(3, 500));
        assert_eq!(apply_rir(&c, &buf(vec![1.0])).unwrap(), c);
        let mut h = vec![0.0; 40];
        h[17] = 1.0;
        let y = apply_rir(&c, &buf(h)).unwrap();
        for (a, b) in y.samples().iter().zip(c.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
        let other = AudioBuffer::new(vec![1.0], 8000).unwrap();
        assert!(apply_rir(&c, &other).is_err());
    }

    fn synthetic_rir(t60: f64, seed: u64) -> AudioBuffer {
        let sr = 16000.0;
        let n = (t60 * 1.5 * sr) as usize;
        let rho = LN_1000 / t60;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut h: Vec<f64> = (0..n)
            .map(|i| r.gen_range(-1.0..1.0) * 0.3 * (-rho * i as f64 / sr).exp())
            .collect();
        h[0] = 1.0;
        let mut padded = vec![0.0; 20];
        padded.append(&mut h);
        buf(padded)
    }

    #[test]
    fn reshape_identity_and_schroeder() {
        let h = synthetic_rir(0.4, 5);
        assert_eq!(reshape_rir(&h, 0.0, 1.0).unwrap(), h);
        let t = schroeder_t60(&h).unwrap();
        assert!((t - 0.4).abs() < 0.04, "{t}");
        let s = schroeder_t60(&reshape_rir(&h, 0.0, 0.5).unwrap()).unwrap();
        assert!((s / t - 0.5).abs() < 0.05, "{s} vs {t}");
        assert!(reshape_rir(&buf(vec![0.0; 10]), 1.0, 1.0).is_err());
    }

    #[test]
    fn flat_eq_is_near_delta() {
        let taps = multiband_eq_taps(&[0.0; 8], EQ_TAPS).unwrap();
        let mid = (EQ_TAPS - 1) / 2;
        assert!((taps[mid] - 1.0).abs() < 1e-3);
        let off: f64 = taps.iter().enumerate().filter(|(i, _)| *i != mid).map(|(_, t)| t.abs()).sum();
        assert!(off < 1e-3, "{off}");
        let a = random_multiband_eq(&mut ChaCha8Rng::seed_from_u64(9), 8, 6.0).unwrap();
        let b = random_multiband_eq(&mut ChaCha8Rng::seed_from_u64(9), 8, 6.0).unwrap();
        assert_eq!(a, b);
        assert!(random_multiband_eq(&mut ChaCha8Rng::seed_from_u64(9), 1, 6.0).is_err());
    }

    #[test]
    fn eq_response_at_band_centers() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let gains = draw_eq_gains(&mut rng, 8, 6.0);
            let taps = multiband_eq_taps(&gains, EQ_TAPS).unwrap();
            for (c, g) in eq_band_centers(8).iter().zip(&gains) {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, t) in taps.iter().enumerate() {
                    let w = 2.0 * std::f64::consts::PI * c * n as f64;
                    re += t * w.cos();
                    im -= t * w.sin();
                }
                let db = 10.0 * (re * re + im * im).log10();
                assert!((db - g).abs() < 1.0, "center {c}: {db} vs {g}");
            }
        }
    }
}
