use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::degrade::{apply_eq, apply_rir, draw_eq_gains, loop_to_length, mix_at_snr, multiband_eq_taps, reshape_rir, EQ_TAPS};
use super::manifest::ManifestEntry;
use crate::audio::{resample_by_step, AudioBuffer};
use crate::error::{Error, Result};

/// Ranges of the random degradations. Ranges are inclusive `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    pub snr_db: (f64, f64),
    pub speed: (f64, f64),
    pub gain: (f64, f64),
    pub drr_offset_db: (f64, f64),
    pub rt60_scale: (f64, f64),
    pub eq_bands: usize,
    pub eq_max_gain_db: f64,
    pub use_reverb: bool,
    pub use_noise: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            snr_db: (10.0, 30.0),
            speed: (0.9, 1.1),
            gain: (0.25, 1.0),
            drr_offset_db: (-6.0, 6.0),
            rt60_scale: (0.5, 1.5),
            eq_bands: 8,
            eq_max_gain_db: 6.0,
            use_reverb: true,
            use_noise: true,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("snr_db", self.snr_db),
            ("speed", self.speed),
            ("gain", self.gain),
            ("drr_offset_db", self.drr_offset_db),
            ("rt60_scale", self.rt60_scale),
        ];
        for (name, (lo, hi)) in ranges {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::config(format!("augmentation range {name} = ({lo}, {hi}) is invalid")));
            }
        }
        for (name, (lo, _)) in [("speed", self.speed), ("gain", self.gain), ("rt60_scale", self.rt60_scale)] {
            if lo <= 0.0 {
                return Err(Error::config(format!("augmentation range {name} must be positive")));
            }
        }
        if self.eq_bands < 2 {
            return Err(Error::config("eq_bands must be at least 2"));
        }
        Ok(())
    }
}

/// Every random choice behind one training pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub rir_id: Option<String>,
    pub noise_id: Option<String>,
    pub snr_db: f64,
    pub eq_taps_noise: Vec<f64>,
    pub eq_taps_rir: Vec<f64>,
    pub speed_factor: f64,
    pub gain: f64,
    pub drr_offset_db: f64,
    pub rt60_scale: f64,
    pub seed: u64,
}

impl SimulationSpec {
    /// No degradation at all; `snr_db` is unused without a noise id.
    pub fn identity(seed: u64) -> Self {
        Self {
            rir_id: None,
            noise_id: None,
            snr_db: 0.0,
            eq_taps_noise: Vec::new(),
            eq_taps_rir: Vec::new(),
            speed_factor: 1.0,
            gain: 1.0,
            drr_offset_db: 0.0,
            rt60_scale: 1.0,
            seed,
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Draw a spec from the configured ranges.
///
/// With `augment` off the pair is still reverberated and noised at a random
/// SNR, but EQ is flat and speed, gain, DRR and RT60 are left unchanged.
pub fn sample_spec<R: Rng>(
    rng: &mut R,
    cfg: &AugmentationConfig,
    rir_ids: &[String],
    noise_ids: &[String],
    augment: bool,
) -> Result<SimulationSpec> {
    if cfg.use_reverb && rir_ids.is_empty() {
        return Err(Error::config("reverberation is enabled but no impulse responses are available"));
    }
    if cfg.use_noise && noise_ids.is_empty() {
        return Err(Error::config("noise is enabled but no noise recordings are available"));
    }
    let rir_id = cfg.use_reverb.then(|| rir_ids[rng.gen_range(0..rir_ids.len())].clone());
    let noise_id = cfg.use_noise.then(|| noise_ids[rng.gen_range(0..noise_ids.len())].clone());
    let snr_db = uniform(rng, cfg.snr_db);
    let mut spec = SimulationSpec {
        rir_id,
        noise_id,
        snr_db,
        ..SimulationSpec::identity(0)
    };
    if augment {
        spec.eq_taps_noise = multiband_eq_taps(&draw_eq_gains(rng, cfg.eq_bands, cfg.eq_max_gain_db), EQ_TAPS)?;
        spec.eq_taps_rir = multiband_eq_taps(&draw_eq_gains(rng, cfg.eq_bands, cfg.eq_max_gain_db), EQ_TAPS)?;
        spec.speed_factor = uniform(rng, cfg.speed);
        spec.gain = uniform(rng, cfg.gain);
        spec.drr_offset_db = uniform(rng, cfg.drr_offset_db);
        spec.rt60_scale = uniform(rng, cfg.rt60_scale);
    }
    spec.seed = rng.gen();
    Ok(spec)
}

/// Fixed degradation for a held-out utterance: the entry's own impulse response
/// and noise at an SNR drawn from `(seed, index)`, with no augmentation.
pub fn held_out_spec(entry: &ManifestEntry, index: usize, seed: u64, cfg: &AugmentationConfig) -> SimulationSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let snr_db = uniform(&mut rng, cfg.snr_db);
    SimulationSpec {
        rir_id: entry.rir_path.as_ref().filter(|_| cfg.use_reverb).map(|p| p.display().to_string()),
        noise_id: entry.noise_path.as_ref().filter(|_| cfg.use_noise).map(|p| p.display().to_string()),
        snr_db,
        ..SimulationSpec::identity(rng.gen())
    }
}

/// Impulse responses and noise recordings addressed by id.
#[derive(Debug, Clone, Default)]
pub struct Assets {
    pub rirs: BTreeMap<String, AudioBuffer>,
    pub noises: BTreeMap<String, AudioBuffer>,
}

impl Assets {
    pub fn rir_ids(&self) -> Vec<String> {
        self.rirs.keys().cloned().collect()
    }

    pub fn noise_ids(&self) -> Vec<String> {
        self.noises.keys().cloned().collect()
    }

    fn rir(&self, id: &str) -> Result<&AudioBuffer> {
        self.rirs.get(id).ok_or_else(|| Error::invalid(format!("unknown impulse response `{id}`")))
    }

    fn noise(&self, id: &str) -> Result<&AudioBuffer> {
        self.noises.get(id).ok_or_else(|| Error::invalid(format!("unknown noise `{id}`")))
    }
}

/// Speed change by resample-and-relabel: the output is `round(len / speed)` long.
pub fn change_speed(x: &AudioBuffer, speed: f64) -> Result<AudioBuffer> {
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(Error::invalid(format!("speed factor must be positive, got {speed}")));
    }
    if speed == 1.0 {
        return Ok(x.clone());
    }
    let n = ((x.len() as f64 / speed).round() as usize).max(1);
    x.with_samples(resample_by_step(x.samples(), speed, n))
}

/// Build a `(degraded, target)` pair.
///
/// The target is the speed- and gain-perturbed clean signal; reverberation and
/// noise are applied to the degraded side only. Both have the length of the
/// speed-changed signal.
pub fn simulate_pair(clean: &AudioBuffer, spec: &SimulationSpec, assets: &Assets) -> Result<(AudioBuffer, AudioBuffer)> {
    if !(spec.gain > 0.0) {
        return Err(Error::invalid(format!("gain must be positive, got {}", spec.gain)));
    }
    let mut target = change_speed(clean, spec.speed_factor)?;
    if spec.gain != 1.0 {
        target = target.scaled(spec.gain)?;
    }
    let mut degraded = target.clone();
    if let Some(id) = &spec.rir_id {
        let rir = reshape_rir(assets.rir(id)?, spec.drr_offset_db, spec.rt60_scale)?;
        let rir = apply_eq(&rir, &spec.eq_taps_rir)?;
        degraded = apply_rir(&degraded, &rir)?;
    }
    if let Some(id) = &spec.noise_id {
        let raw = assets.noise(id)?;
        let offset = ChaCha8Rng::seed_from_u64(spec.seed).gen_range(0..raw.len());
        let noise = degraded.with_samples(loop_to_length(raw.samples(), degraded.len(), offset))?;
        let noise = apply_eq(&noise, &spec.eq_taps_noise)?;
        degraded = mix_at_snr(&degraded, &noise, spec.snr_db)?;
    }
    Ok((degraded, target))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize) -> AudioBuffer {
        AudioBuffer::new((0..n).map(|i| (i as f64 * 0.07).sin() * 0.5).collect(), 16000).unwrap()
    }

    fn assets() -> Assets {
        let mut a = Assets::default();
        let mut h: Vec<f64> = (0..3000).map(|i| ((i * 7919 % 113) as f64 / 56.0 - 1.0) * 0.2 * (-(i as f64) / 600.0).exp()).collect();
        h[10] = 1.0;
        a.rirs.insert("r".into(), AudioBuffer::new(h, 16000).unwrap());
        let n: Vec<f64> = (0..5000).map(|i| ((i * 104729 % 997) as f64 / 498.0 - 1.0) * 0.3).collect();
        a.noises.insert("n".into(), AudioBuffer::new(n, 16000).unwrap());
        a
    }

    #[test]
    fn identity_pipeline() {
        let c = tone(4000);
        let mut a = assets();
        a.rirs.insert("delta".into(), AudioBuffer::new(vec![1.0], 16000).unwrap());
        let spec = SimulationSpec {
            rir_id: Some("delta".into()),
            ..SimulationSpec::identity(1)
        };
        let (d, t) = simulate_pair(&c, &spec, &a).unwrap();
        assert_eq!(d, c);
        assert_eq!(t, c);
    }

    #[test]
    fn noise_only_hits_requested_snr() {
        let c = tone(4000);
        let spec = SimulationSpec {
            noise_id: Some("n".into()),
            snr_db: 10.0,
            ..SimulationSpec::identity(2)
        };
        let (d, t) = simulate_pair(&c, &spec, &assets()).unwrap();
        let resid: Vec<f64> = d.samples().iter().zip(t.samples()).map(|(a, b)| a - b).collect();
        let snr = 10.0 * (t.energy() / resid.iter().map(|v| v * v).sum::<f64>()).log10();
        assert!((snr - 10.0).abs() < 0.1);
    }

    #[test]
    fn lengths_and_determinism() {
        let cfg = AugmentationConfig::default();
        let a = assets();
        for n in [4000, 32000, 50000] {
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            let spec = sample_spec(&mut rng, &cfg, &a.rir_ids(), &a.noise_ids(), true).unwrap();
            let (d, t) = simulate_pair(&tone(n), &spec, &a).unwrap();
            assert_eq!(d.len(), t.len());
            assert_eq!(t.len(), (n as f64 / spec.speed_factor).round() as usize);
            let (d2, t2) = simulate_pair(&tone(n), &spec, &a).unwrap();
            assert_eq!((d, t), (d2, t2));
        }
    }

    #[test]
    fn sample_spec_ranges_and_errors() {
        let cfg = AugmentationConfig::default();
        let ids = vec!["a".to_string()];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let s = sample_spec(&mut rng, &cfg, &ids, &ids, true).unwrap();
            assert!((10.0..=30.0).contains(&s.snr_db));
            assert!((0.9..=1.1).contains(&s.speed_factor));
            assert!((0.25..=1.0).contains(&s.gain));
        }
        let a = sample_spec(&mut ChaCha8Rng::seed_from_u64(5), &cfg, &ids, &ids, true).unwrap();
        let b = sample_spec(&mut ChaCha8Rng::seed_from_u64(5), &cfg, &ids, &ids, true).unwrap();
        assert_eq!(a, b);
        assert!(sample_spec(&mut rng, &cfg, &[], &ids, true).is_err());
        let plain = sample_spec(&mut rng, &cfg, &ids, &ids, false).unwrap();
        assert_eq!((plain.speed_factor, plain.gain, plain.eq_taps_rir.len()), (1.0, 1.0, 0));
    }
}
