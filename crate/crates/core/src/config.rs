//! The single declarative run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::WORKING_RATE_HZ;
use crate::data::AugmentationConfig;
use crate::dsp::{MelConfig, SpectrogramConfig};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::nn::{GeneratorConfig, SpecDiscConfig, WaveDiscConfig};

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "ENHANCE_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DspConfig {
    pub sample_rate_hz: u32,
    pub mel: MelConfig,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: WORKING_RATE_HZ,
            mel: MelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorsConfig {
    pub wave: WaveDiscConfig,
    pub spec: SpecDiscConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Relative paths resolve against the config file's directory.
    pub manifest: Option<PathBuf>,
    pub crop_len: usize,
    pub batch_size: usize,
    pub augmentation: AugmentationConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            crop_len: 32000,
            batch_size: 6,
            augmentation: AugmentationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub stage_id: u8,
    pub steps: usize,
    pub lr_generator: f64,
    pub lr_discriminators: f64,
    pub use_postnet: bool,
    pub use_augmentation: bool,
    pub use_adversarial: bool,
    pub disc_updates_per_gen_step: usize,
}

impl StageConfig {
    pub fn full(stage_id: u8) -> Self {
        match stage_id {
            1 => Self {
                stage_id,
                steps: 500_000,
                lr_generator: 1e-3,
                lr_discriminators: 0.0,
                use_postnet: false,
                use_augmentation: false,
                use_adversarial: false,
                disc_updates_per_gen_step: 0,
            },
            2 => Self {
                stage_id,
                steps: 500_000,
                lr_generator: 1e-4,
                use_postnet: true,
                use_augmentation: true,
                ..Self::full(1)
            },
            _ => Self {
                stage_id: 3,
                steps: 50_000,
                lr_generator: 1e-5,
                lr_discriminators: 1e-3,
                use_postnet: true,
                use_augmentation: true,
                use_adversarial: true,
                disc_updates_per_gen_step: 2,
            },
        }
    }

    /// Step count after the global scale factor; never below 1.
    pub fn scaled_steps(&self, scale: f64) -> usize {
        ((self.steps as f64 * scale).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagesConfig {
    pub stage_scale: f64,
    pub schedule: Vec<StageConfig>,
    pub adam_generator: AdamConfig,
    pub adam_discriminators: AdamConfig,
    pub clip_grad_norm: f64,
    pub checkpoint_every: usize,
    pub validate_every: usize,
    pub disc_seed_offset: u64,
}

impl Default for StagesConfig {
    fn default() -> Self {
        Self {
            stage_scale: 1.0,
            schedule: vec![StageConfig::full(1), StageConfig::full(2), StageConfig::full(3)],
            adam_generator: AdamConfig {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            adam_discriminators: AdamConfig {
                beta1: 0.5,
                beta2: 0.9,
                eps: 1e-8,
            },
            clip_grad_norm: 10.0,
            checkpoint_every: 10_000,
            validate_every: 10_000,
            disc_seed_offset: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Seed of the fixed held-out degradations.
    pub pair_seed: u64,
    pub pesq_command: Option<String>,
    pub chunk_len: usize,
    pub chunk_overlap: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pair_seed: 12345,
            pesq_command: None,
            chunk_len: 32000,
            chunk_overlap: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dsp: DspConfig,
    pub generator: GeneratorConfig,
    pub discriminators: DiscriminatorsConfig,
    pub losses: LossWeights,
    pub data: DataConfig,
    pub stages: StagesConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Laptop-scale networks and crops for the synthetic corpus.
    pub fn toy() -> Self {
        let mut c = RunConfig::default();
        c.generator = GeneratorConfig {
            n_layers: 14,
            dilation_cycle: vec![1, 2, 4, 8, 16, 32, 64],
            kernel_size: 3,
            channels: 16,
            postnet_layers: 3,
            postnet_channels: 8,
            postnet_kernel: 32,
        };
        c.discriminators.wave = WaveDiscConfig {
            channels: vec![4, 8, 16, 32, 32, 32, 1],
            groups: vec![1, 2, 4, 8, 8, 1, 1],
            ..WaveDiscConfig::default()
        };
        c.discriminators.spec.channels = 8;
        c.dsp.mel = MelConfig {
            n_mels: 40,
            spectrogram: SpectrogramConfig::new(512, 128),
            ..MelConfig::default()
        };
        c.data.crop_len = 4096;
        c.data.batch_size = 4;
        c.stages.stage_scale = 0.001;
        c.stages.checkpoint_every = 250;
        c.stages.validate_every = 250;
        c.eval.chunk_len = 8192;
        c.eval.chunk_overlap = 1024;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminators.wave.validate()?;
        self.discriminators.spec.validate()?;
        self.dsp.mel.validate(self.dsp.sample_rate_hz)?;
        self.losses.validate()?;
        self.data.augmentation.validate()?;
        if self.data.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.data.crop_len < crate::losses::MIN_SPEC_LOSS_LEN {
            return Err(Error::config(format!(
                "crop_len must be at least {}",
                crate::losses::MIN_SPEC_LOSS_LEN
            )));
        }
        let s = &self.stages;
        if !(s.stage_scale > 0.0) || !s.stage_scale.is_finite() {
            return Err(Error::config("stage_scale must be positive"));
        }
        if s.schedule.is_empty() {
            return Err(Error::config("the stage schedule is empty"));
        }
        for w in s.schedule.windows(2) {
            if w[1].stage_id <= w[0].stage_id {
                return Err(Error::config("stages must be ordered by increasing stage_id"));
            }
        }
        for st in &s.schedule {
            if !(1..=3).contains(&st.stage_id) {
                return Err(Error::config(format!("stage_id {} is not 1, 2 or 3", st.stage_id)));
            }
            if st.use_adversarial && st.disc_updates_per_gen_step == 0 {
                return Err(Error::config("an adversarial stage needs disc_updates_per_gen_step >= 1"));
            }
            if !(st.lr_generator >= 0.0) || !(st.lr_discriminators >= 0.0) {
                return Err(Error::config("learning rates must be non-negative"));
            }
        }
        if s.checkpoint_every == 0 || s.validate_every == 0 {
            return Err(Error::config("checkpoint_every and validate_every must be positive"));
        }
        if !(s.clip_grad_norm > 0.0) {
            return Err(Error::config("clip_grad_norm must be positive"));
        }
        if self.eval.chunk_overlap >= self.eval.chunk_len {
            return Err(Error::config("chunk_overlap must be smaller than chunk_len"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Parse a file; a relative manifest path is resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::from_toml_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if let (Some(m), Some(dir)) = (&c.data.manifest, path.parent()) {
            if m.is_relative() {
                c.data.manifest = Some(dir.join(m));
            }
        }
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Top-level sections whose values differ, ignoring the manifest location.
    pub fn differing_sections(&self, other: &RunConfig) -> Vec<&'static str> {
        let mut a = self.clone();
        let mut b = other.clone();
        a.data.manifest = None;
        b.data.manifest = None;
        let mut out = Vec::new();
        if a.seed != b.seed {
            out.push("seed");
        }
        if a.dsp != b.dsp {
            out.push("dsp");
        }
        if a.generator != b.generator {
            out.push("generator");
        }
        if a.discriminators != b.discriminators {
            out.push("discriminators");
        }
        if a.losses != b.losses {
            out.push("losses");
        }
        if a.data != b.data {
            out.push("data");
        }
        if a.stages != b.stages {
            out.push("stages");
        }
        if a.eval != b.eval {
            out.push("eval");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for c in [RunConfig::default(), RunConfig::toy()] {
            c.validate().unwrap();
            let text = c.to_toml_string().unwrap();
            assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
        }
        let s = StageConfig::full(3);
        assert_eq!((s.scaled_steps(0.001), s.disc_updates_per_gen_step), (50, 2));
        assert_eq!(StageConfig::full(1).scaled_steps(0.001), 500);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = RunConfig::toy().to_toml_string().unwrap();
        text = text.replacen("[generator]\n", "[generator]\nwidth = 3\n", 1);
        assert!(matches!(RunConfig::from_toml_str(&text), Err(Error::Config(_))));
        let mut c = RunConfig::toy();
        c.generator.channels = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn differing_sections_ignore_manifest() {
        let a = RunConfig::toy();
        let mut b = a.clone();
        b.data.manifest = Some("x.jsonl".into());
        assert!(a.differing_sections(&b).is_empty());
        b.losses.w_fm = 3.0;
        assert_eq!(a.differing_sections(&b), vec!["losses"]);
    }
}
