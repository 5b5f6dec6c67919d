use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;
use crate::autograd::kernels::avg_pool1d;
use crate::error::{Error, Result};

/// Causal FIR filtering; output has the input's length.
pub fn fir_filter(audio: &AudioBuffer, taps: &[f64]) -> Result<AudioBuffer> {
    if taps.is_empty() {
        return Err(Error::invalid("FIR taps must be non-empty"));
    }
    if taps.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("FIR taps must be finite"));
    }
    let mut y = linear_convolution(audio.samples(), taps);
    y.truncate(audio.len());
    audio.with_samples(y)
}

/// Full linear convolution, length `len(a) + len(b) - 1`.
pub fn convolve_full(a: &AudioBuffer, b: &[f64]) -> Result<AudioBuffer> {
    if b.is_empty() {
        return Err(Error::invalid("convolution kernel must be non-empty"));
    }
    a.with_samples(linear_convolution(a.samples(), b))
}

/// Full convolution of two buffers that must share a sample rate (e.g. speech and an RIR).
pub fn convolve_buffers(a: &AudioBuffer, b: &AudioBuffer) -> Result<AudioBuffer> {
    if a.sample_rate_hz() != b.sample_rate_hz() {
        return Err(Error::invalid(format!(
            "sample-rate mismatch: {} Hz vs {} Hz",
            a.sample_rate_hz(),
            b.sample_rate_hz()
        )));
    }
    convolve_full(a, b.samples())
}

const DIRECT_LIMIT: usize = 1 << 18;

/// Direct summation for small products, FFT otherwise.
pub fn linear_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let n = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 || a.len() * b.len() <= DIRECT_LIMIT {
        let mut y = vec![0.0; n];
        for (i, &av) in a.iter().enumerate() {
            for (j, &bv) in b.iter().enumerate() {
                y[i + j] += av * bv;
            }
        }
        return y;
    }
    let size = n.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let lift = |x: &[f64]| {
        let mut v: Vec<Complex64> = x.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        v.resize(size, Complex64::new(0.0, 0.0));
        v
    };
    let mut fa = lift(a);
    let mut fb = lift(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..n].iter().map(|c| c.re * scale).collect()
}

/// Halve the rate with strided average pooling (kernel 4, stride 2, reflection pad 1).
pub fn downsample_by_2(audio: &AudioBuffer) -> Result<AudioBuffer> {
    if audio.len() < 4 {
        return Err(Error::invalid(format!(
            "downsampling needs at least 4 samples, got {}",
            audio.len()
        )));
    }
    let y = avg_pool1d(audio.samples(), audio.len(), 4, 2, 1);
    AudioBuffer::new(y, audio.sample_rate_hz() / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn brute(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; a.len() + b.len() - 1];
        for n in 0..y.len() {
            for k in 0..b.len() {
                if n >= k && n - k < a.len() {
                    y[n] += a[n - k] * b[k];
                }
            }
        }
        y
    }

    fn buf(x: &[f64]) -> AudioBuffer {
        AudioBuffer::new(x.to_vec(), 16000).unwrap()
    }

    #[test]
    fn hand_examples() {
        assert_eq!(fir_filter(&buf(&[1.0, -2.0, 3.0]), &[1.0]).unwrap().samples(), &[1.0, -2.0, 3.0]);
        assert_eq!(
            fir_filter(&buf(&[1.0, 1.0, 1.0, 1.0]), &[0.5, 0.5]).unwrap().samples(),
            &[0.5, 1.0, 1.0, 1.0]
        );
        assert_eq!(convolve_full(&buf(&[1.0, 2.0]), &[1.0, 1.0]).unwrap().samples(), &[1.0, 3.0, 2.0]);
        assert_eq!(convolve_full(&buf(&[1.0, 2.0]), &[1.0]).unwrap().samples(), &[1.0, 2.0]);
        assert!(fir_filter(&buf(&[1.0]), &[]).is_err());
        assert!(fir_filter(&buf(&[1.0]), &[f64::NAN]).is_err());
        assert!(convolve_full(&buf(&[1.0]), &[]).is_err());
        let other = AudioBuffer::new(vec![1.0], 8000).unwrap();
        assert!(convolve_buffers(&buf(&[1.0]), &other).is_err());
    }

    #[test]
    fn large_random_convolution_matches_brute_force() {
        let mut s = 12345u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a: Vec<f64> = (0..1000).map(|_| next()).collect();
        let b: Vec<f64> = (0..200).map(|_| next()).collect();
        let want = brute(&a, &b);
        let got = convolve_full(&buf(&a), &b).unwrap();
        let max = got.samples().iter().zip(&want).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(max < 1e-9);
        // FFT path.
        let a: Vec<f64> = (0..5000).map(|_| next()).collect();
        let b: Vec<f64> = (0..300).map(|_| next()).collect();
        let want = brute(&a, &b);
        let got = linear_convolution(&a, &b);
        let max = got.iter().zip(&want).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(max < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn convolution_equals_brute_force(
            a in prop::collection::vec(-1.0f64..1.0, 1..2000),
            b in prop::collection::vec(-1.0f64..1.0, 1..400),
        ) {
            let want = brute(&a, &b);
            let got = linear_convolution(&a, &b);
            prop_assert_eq!(got.len(), want.len());
            for (x, y) in got.iter().zip(&want) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            let swapped = linear_convolution(&b, &a);
            for (x, y) in got.iter().zip(&swapped) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn fir_taps_match_truncated_brute_force(
            a in prop::collection::vec(-1.0f64..1.0, 1..300),
            taps in prop::collection::vec(-1.0f64..1.0, 1..40),
        ) {
            let got = fir_filter(&buf(&a), &taps).unwrap();
            let want = brute(&a, &taps);
            for (x, y) in got.samples().iter().zip(&want[..a.len()]) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn double_downsampling_length(len in 4usize..5000) {
            let a = AudioBuffer::zeros(len, 16000).unwrap();
            let d = downsample_by_2(&a).unwrap();
            prop_assert_eq!(d.len(), len / 2);
            prop_assert_eq!(d.sample_rate_hz(), 8000);
            if d.len() >= 4 {
                let dd = downsample_by_2(&d).unwrap();
                prop_assert_eq!(dd.len(), len / 2 / 2);
                prop_assert_eq!(dd.sample_rate_hz(), 4000);
            }
        }
    }

    #[test]
    fn downsampling_keeps_dc_and_low_tones() {
        let c = downsample_by_2(&buf(&[0.7; 101])).unwrap();
        assert!(c.samples().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        let d = downsample_by_2(&AudioBuffer::zeros(32000, 16000).unwrap()).unwrap();
        assert_eq!((d.len(), d.sample_rate_hz()), (16000, 8000));
        assert!(downsample_by_2(&buf(&[1.0, 2.0, 3.0])).is_err());

        let x: Vec<f64> = (0..16000).map(|n| (2.0 * PI * 100.0 * n as f64 / 16000.0).sin()).collect();
        let y = downsample_by_2(&buf(&x)).unwrap();
        // Output sample t averages input 2t-1..2t+2, centred at 2t + 0.5.
        let ideal: Vec<f64> = (0..y.len())
            .map(|t| (2.0 * PI * 100.0 * (2.0 * t as f64 + 0.5) / 16000.0).sin())
            .collect();
        let corr = pearson(&y.samples()[4..y.len() - 4], &ideal[4..ideal.len() - 4]);
        assert!(corr > 0.99, "corr {corr}");
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }
}
