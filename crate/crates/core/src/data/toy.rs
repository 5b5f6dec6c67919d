//! A tiny synthetic corpus: voiced tone complexes, exponential-decay impulse
//! responses and colored noise.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::manifest::{Manifest, ManifestEntry, Split};
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyCorpusConfig {
    pub n_utterances: usize,
    pub utterance_s: f64,
    pub n_rirs: usize,
    pub n_noises: usize,
    pub noise_s: f64,
    pub sample_rate_hz: u32,
}

impl Default for ToyCorpusConfig {
    fn default() -> Self {
        Self {
            n_utterances: 50,
            utterance_s: 1.25,
            n_rirs: 8,
            n_noises: 6,
            noise_s: 2.0,
            sample_rate_hz: 16000,
        }
    }
}

/// Level of the white floor under each toy utterance, relative to its peak.
pub const TOY_NOISE_FLOOR_DB: f64 = -55.0;

/// Harmonic complex with a gliding pitch, fixed formant envelope and syllable-rate gating.
pub fn toy_utterance<R: Rng>(rng: &mut R, len: usize, sr: f64) -> Vec<f64> {
    let f0 = rng.gen_range(100.0..220.0);
    let glide_hz = rng.gen_range(0.3..1.2);
    let glide_phase = rng.gen_range(0.0..2.0 * PI);
    let formants: Vec<(f64, f64)> = [(400.0, 900.0), (1000.0, 2000.0), (2200.0, 3200.0)]
        .iter()
        .map(|&(lo, hi)| (rng.gen_range(lo..hi), rng.gen_range(120.0..300.0)))
        .collect();
    let syll_hz = rng.gen_range(3.0..5.5);
    let syll_phase = rng.gen_range(0.0..2.0 * PI);
    let n_harm = (3800.0 / f0) as usize;
    let amps: Vec<f64> = (1..=n_harm)
        .map(|h| {
            let f = h as f64 * f0;
            formants.iter().map(|(c, bw)| (-0.5 * ((f - c) / bw).powi(2)).exp()).sum::<f64>() + 0.02
        })
        .collect();
    let mut phase = 0.0;
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let t = i as f64 / sr;
        let f = f0 * (1.0 + 0.08 * (2.0 * PI * glide_hz * t + glide_phase).sin());
        phase += 2.0 * PI * f / sr;
        let mut s = 0.0;
        for (h, a) in amps.iter().enumerate() {
            s += a * ((h + 1) as f64 * phase).sin();
        }
        let env = (2.0 * PI * syll_hz * t + syll_phase).sin().max(0.0).powf(1.5);
        out.push(s * env);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let target = rng.gen_range(0.3..0.7);
    // Recording noise floor; real corpora are never digitally silent.
    let floor = target * 10f64.powf(TOY_NOISE_FLOOR_DB / 20.0);
    out.iter_mut().for_each(|v| {
        let z: f64 = StandardNormal.sample(rng);
        *v = *v * target / peak + floor * z;
    });
    out
}

/// Unit direct path after a short pre-delay, then a noise tail with decay time
/// `t60_s`, scaled so the direct-to-reverberant ratio is `drr_db`.
pub fn toy_rir<R: Rng>(rng: &mut R, t60_s: f64, drr_db: f64, sr: f64) -> Vec<f64> {
    let pre = 16;
    let gap = (0.003 * sr) as usize;
    let len = pre + (1.2 * t60_s * sr) as usize;
    let rho = 6.907755278982137 / t60_s;
    let mut h = vec![0.0; len];
    h[pre] = 1.0;
    for (i, v) in h.iter_mut().enumerate().skip(pre + gap) {
        let t = (i - pre) as f64 / sr;
        let z: f64 = StandardNormal.sample(rng);
        *v = z * (-rho * t).exp();
    }
    let tail: f64 = h[pre + gap..].iter().map(|v| v * v).sum();
    let level = (10f64.powf(-drr_db / 10.0) / tail.max(1e-30)).sqrt();
    h[pre + gap..].iter_mut().for_each(|v| *v *= level);
    h
}

/// White noise through a random one-pole low-pass, normalized to unit peak 0.5.
pub fn toy_noise<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let a: f64 = rng.gen_range(0.0..0.9);
    let mut y = 0.0;
    let mut out: Vec<f64> = (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            y = a * y + (1.0 - a) * z;
            y
        })
        .collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    out
}

fn split_for(i: usize, n: usize) -> Split {
    let n_hold = (n / 10).max(1);
    if i < n - 2 * n_hold {
        Split::Train
    } else if i < n - n_hold {
        Split::Val
    } else {
        Split::Test
    }
}

fn write(path: &Path, samples: Vec<f64>, sr: u32) -> Result<()> {
    AudioBuffer::new(samples, sr)?.write_wav_f32(path)
}

/// Write the corpus under `out_dir` and return the manifest path.
pub fn make_toy_dataset(out_dir: &Path, seed: u64, cfg: &ToyCorpusConfig) -> Result<PathBuf> {
    if cfg.n_utterances < 3 {
        return Err(Error::invalid(format!(
            "a toy corpus needs at least 3 utterances for three splits, got {}",
            cfg.n_utterances
        )));
    }
    if cfg.n_rirs == 0 || cfg.n_noises == 0 {
        return Err(Error::invalid("a toy corpus needs at least one impulse response and one noise"));
    }
    for sub in ["clean", "rir", "noise"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let sr = cfg.sample_rate_hz;
    let srf = sr as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rirs = Vec::new();
    for i in 0..cfg.n_rirs {
        let rel = PathBuf::from(format!("rir/rir_{i:02}.wav"));
        let t60 = rng.gen_range(0.2..0.6);
        let drr = rng.gen_range(0.0..8.0);
        write(&out_dir.join(&rel), toy_rir(&mut rng, t60, drr, srf), sr)?;
        rirs.push(rel);
    }
    let mut noises = Vec::new();
    for i in 0..cfg.n_noises {
        let rel = PathBuf::from(format!("noise/noise_{i:02}.wav"));
        write(&out_dir.join(&rel), toy_noise(&mut rng, (cfg.noise_s * srf) as usize), sr)?;
        noises.push(rel);
    }
    let len = (cfg.utterance_s * srf) as usize;
    let mut entries = Vec::with_capacity(cfg.n_utterances);
    for i in 0..cfg.n_utterances {
        let rel = PathBuf::from(format!("clean/utt_{i:04}.wav"));
        write(&out_dir.join(&rel), toy_utterance(&mut rng, len, srf), sr)?;
        entries.push(ManifestEntry {
            clean_path: rel,
            rir_path: Some(rirs[i % rirs.len()].clone()),
            noise_path: Some(noises[i % noises.len()].clone()),
            split: split_for(i, cfg.n_utterances),
        });
    }
    let manifest = Manifest {
        root: out_dir.to_path_buf(),
        entries,
    };
    let path = out_dir.join("manifest.jsonl");
    manifest.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_are_disjoint_and_non_empty() {
        for n in [3, 10, 50, 101] {
            let s: Vec<Split> = (0..n).map(|i| split_for(i, n)).collect();
            for want in [Split::Train, Split::Val, Split::Test] {
                assert!(s.contains(&want), "n={n} lacks {want}");
            }
        }
    }

    #[test]
    fn corpus_is_reproducible() {
        let cfg = ToyCorpusConfig {
            n_utterances: 10,
            utterance_s: 0.1,
            n_rirs: 2,
            n_noises: 2,
            noise_s: 0.1,
            ..Default::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let pa = make_toy_dataset(a.path(), 7, &cfg).unwrap();
        let pb = make_toy_dataset(b.path(), 7, &cfg).unwrap();
        assert_eq!(fs::read(&pa).unwrap(), fs::read(&pb).unwrap());
        assert_eq!(
            fs::read(a.path().join("clean/utt_0003.wav")).unwrap(),
            fs::read(b.path().join("clean/utt_0003.wav")).unwrap()
        );
        let m = Manifest::load(&pa).unwrap();
        assert_eq!(m.entries.len(), 10);
        assert_eq!(m.load_assets(16000).unwrap().rirs.len(), 2);
    }

    #[test]
    fn rir_hits_requested_drr() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for drr in [0.0, 4.5, 8.0] {
            let h = toy_rir(&mut rng, 0.4, drr, 16000.0);
            let tail: f64 = h[17..].iter().map(|v| v * v).sum();
            assert!((10.0 * (1.0 / tail).log10() - drr).abs() < 1e-9);
        }
    }
}
