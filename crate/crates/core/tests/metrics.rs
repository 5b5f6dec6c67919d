use enhance_core::data::degrade::{apply_rir, mix_at_snr};
use enhance_core::data::toy::{toy_noise, toy_utterance};
use enhance_core::metrics::fwssnr::{critical_band_filters, fw_ssnr_frames, frame_geometry};
use enhance_core::metrics::{fw_ssnr, srmr_simplified, stoi};
use enhance_core::AudioBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn speech(seed: u64, len: usize) -> AudioBuffer {
    AudioBuffer::new(toy_utterance(&mut ChaCha8Rng::seed_from_u64(seed), len, 16000.0), 16000).unwrap()
}

fn white(seed: u64, len: usize) -> AudioBuffer {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    AudioBuffer::new((0..len).map(|_| r.gen_range(-0.5..0.5)).collect(), 16000).unwrap()
}

#[test]
fn identity_scores() {
    for seed in 0..3 {
        let x = speech(seed, 24000);
        let s = stoi(&x, &x).unwrap();
        assert!((s - 1.0).abs() <= 0.01, "stoi {s}");
        assert_eq!(fw_ssnr(&x, &x).unwrap(), 35.0);
    }
}

#[test]
fn both_intrusive_metrics_fall_with_snr() {
    let x = speech(4, 24000);
    let n = white(5, 24000);
    let mut last = (f64::INFINITY, f64::INFINITY);
    for snr in [20.0, 10.0, 0.0] {
        let y = mix_at_snr(&x, &n, snr).unwrap();
        let s = stoi(&y, &x).unwrap();
        let f = fw_ssnr(&y, &x).unwrap();
        assert!(s < last.0 && f < last.1, "snr {snr}: stoi {s}, fwssnr {f}");
        last = (s, f);
    }
    let y = mix_at_snr(&x, &n, -10.0).unwrap();
    assert!(stoi(&y, &x).unwrap() < 0.6);
    // Unit-area spectral normalization bounds the per-band error, so broadband
    // noise bottoms out near 0 dB rather than at the floor.
    let y = mix_at_snr(&x, &n, -40.0).unwrap();
    let v = fw_ssnr(&y, &x).unwrap();
    assert!(v < last.1 && v >= -10.0, "{v}");
}

#[test]
fn fwssnr_frames_stay_within_clamp_bounds() {
    let tone = |f: f64| {
        AudioBuffer::new((0..8000).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 16000.0).sin()).collect(), 16000)
            .unwrap()
    };
    let cases = [
        (tone(3500.0), tone(120.0)),
        (white(11, 8000), speech(12, 8000)),
        (speech(13, 8000), white(14, 8000)),
        (mix_at_snr(&speech(15, 8000), &white(16, 8000), -30.0).unwrap(), speech(15, 8000)),
    ];
    for (y, x) in &cases {
        for v in fw_ssnr_frames(y, x).unwrap().into_iter().flatten() {
            assert!((-10.0..=35.0).contains(&v), "{v}");
        }
    }
}

/// Direct per-frame recomputation with naive DFTs.
fn fwssnr_oracle(y: &[f64], x: &[f64], sr: u32) -> f64 {
    let (win, hop, nfft) = frame_geometry(sr);
    let filt = critical_band_filters(sr, nfft);
    let w: Vec<f64> = (1..=win).map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (win + 1) as f64).cos())).collect();
    let mag = |f: &[f64]| -> Vec<f64> {
        (0..nfft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for n in 0..win {
                    let a = -2.0 * std::f64::consts::PI * (k * n) as f64 / nfft as f64;
                    re += f[n] * w[n] * a.cos();
                    im += f[n] * w[n] * a.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    };
    let mut vals = Vec::new();
    let mut s = 0;
    while s + win <= x.len() {
        let cm = mag(&x[s..s + win]);
        let pm = mag(&y[s..s + win]);
        let (cs, ps): (f64, f64) = (cm.iter().sum(), pm.iter().sum());
        let mut num = 0.0;
        let mut den = 0.0;
        for f in &filt {
            let ce: f64 = f.iter().zip(&cm).map(|(a, b)| a * b / cs).sum();
            let pe: f64 = f.iter().zip(&pm).map(|(a, b)| a * b / ps).sum();
            let err = ((ce - pe) * (ce - pe)).max(f64::EPSILON);
            num += ce.powf(0.2) * 10.0 * (ce * ce / err).log10();
            den += ce.powf(0.2);
        }
        vals.push((num / den).clamp(-10.0, 35.0));
        s += hop;
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

#[test]
fn fwssnr_matches_direct_recomputation() {
    let x = white(6, 1500);
    let y = mix_at_snr(&x, &white(7, 1500), 5.0).unwrap();
    let got = fw_ssnr(&y, &x).unwrap();
    let want = fwssnr_oracle(y.samples(), x.samples(), 16000);
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    assert_eq!(fw_ssnr_frames(&y, &x).unwrap().len(), 8);
}

#[test]
fn srmr_orderings() {
    let x = speech(8, 32000);
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let tail: Vec<f64> = (0..16000)
        .map(|i| if i == 0 { 1.0 } else { r.gen_range(-1.0..1.0) * 0.3 * (-6.9 * i as f64 / 16000.0).exp() })
        .collect();
    let wet = apply_rir(&x, &AudioBuffer::new(tail, 16000).unwrap()).unwrap();
    let (a, b) = (srmr_simplified(&x).unwrap(), srmr_simplified(&wet).unwrap());
    assert!(a > b, "dry {a} vs reverberant {b}");
    assert_eq!(srmr_simplified(&x).unwrap(), a);

    let n = AudioBuffer::new(toy_noise(&mut ChaCha8Rng::seed_from_u64(10), 32000), 16000).unwrap();
    let am = n.with_samples(
        n.samples()
            .iter()
            .enumerate()
            .map(|(i, v)| v * (1.0 + (2.0 * std::f64::consts::PI * 4.0 * i as f64 / 16000.0).sin()))
            .collect(),
    )
    .unwrap();
    let (s, m) = (srmr_simplified(&n).unwrap(), srmr_simplified(&am).unwrap());
    assert!(s < m, "stationary {s} vs modulated {m}");
}
