//! Waveform discriminators at three rates and a log-mel discriminator.
//!
//! Each returns a real score per example and the activations of every layer
//! except the output layer, which feed the feature-matching loss.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{init_fan_in, Bound, Layout, Params};
use crate::audio::AudioBuffer;
use crate::autograd::{Conv1dSpec, Conv2dSpec, PadMode, Tensor, Var};
use crate::dsp::{MelConfig, StftPlan, LOG_FLOOR};
use crate::error::{Error, Result};

/// Parameter namespaces of the four discriminators, in loss order.
pub const DISC_NAMES: [&str; 4] = ["wave_disc_16k", "wave_disc_8k", "wave_disc_4k", "spec_disc"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveDiscConfig {
    pub kernel_sizes: Vec<usize>,
    pub strides: Vec<usize>,
    pub channels: Vec<usize>,
    pub groups: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for WaveDiscConfig {
    fn default() -> Self {
        Self {
            kernel_sizes: vec![15, 41, 41, 41, 41, 5, 3],
            strides: vec![1, 4, 4, 4, 4, 1, 1],
            channels: vec![16, 64, 256, 1024, 1024, 1024, 1],
            groups: vec![1, 4, 16, 64, 256, 1, 1],
            leaky_slope: 0.2,
        }
    }
}

impl WaveDiscConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.kernel_sizes.len();
        if n != 7 || self.strides.len() != 7 || self.channels.len() != 7 || self.groups.len() != 7 {
            return Err(Error::config("waveform discriminator tuples must all have length 7"));
        }
        if self.channels[6] != 1 {
            return Err(Error::config("waveform discriminator output layer must have 1 channel"));
        }
        for i in 0..n {
            let cin = if i == 0 { 1 } else { self.channels[i - 1] };
            let (c, g) = (self.channels[i], self.groups[i]);
            if c == 0 || g == 0 || self.kernel_sizes[i] == 0 || self.strides[i] == 0 {
                return Err(Error::config(format!("waveform discriminator layer {i} has a zero size")));
            }
            if c % g != 0 || cin % g != 0 {
                return Err(Error::config(format!(
                    "layer {i}: channels {cin}->{c} not divisible by {g} groups"
                )));
            }
        }
        Ok(())
    }

    pub fn total_stride(&self) -> usize {
        self.strides.iter().product()
    }

    fn in_channels(&self, i: usize) -> usize {
        if i == 0 {
            1
        } else {
            self.channels[i - 1]
        }
    }

    fn layer_spec(&self, i: usize) -> Conv1dSpec {
        let total = self.kernel_sizes[i] - 1;
        Conv1dSpec {
            stride: self.strides[i],
            dilation: 1,
            groups: self.groups[i],
            pad_left: total / 2,
            pad_right: total - total / 2,
            pad_mode: PadMode::Reflect,
        }
    }

    /// Temporal length after every layer for an input of `len` samples.
    pub fn shape_trace(&self, len: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(7);
        let mut l = len;
        for i in 0..7 {
            l = self.layer_spec(i).output_len(l, self.kernel_sizes[i]);
            out.push(l);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDiscConfig {
    /// (frequency, time) kernel of each block.
    pub kernel_sizes: [(usize, usize); 4],
    /// (frequency, time) stride of each block.
    pub strides: [(usize, usize); 4],
    /// Channels after each gated linear unit.
    pub channels: usize,
    pub head_kernel: (usize, usize),
    pub bn_eps: f64,
}

impl Default for SpecDiscConfig {
    fn default() -> Self {
        Self {
            kernel_sizes: [(3, 9), (3, 8), (3, 8), (3, 6)],
            strides: [(1, 2); 4],
            channels: 32,
            head_kernel: (3, 3),
            bn_eps: 1e-5,
        }
    }
}

impl SpecDiscConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::config("spectrogram discriminator channels must be positive"));
        }
        let all = self.kernel_sizes.iter().chain(self.strides.iter()).chain(std::iter::once(&self.head_kernel));
        if all.clone().any(|&(a, b)| a == 0 || b == 0) {
            return Err(Error::config("spectrogram discriminator kernels and strides must be positive"));
        }
        Ok(())
    }

    /// Same-style zero padding: output = ceil(input / stride) on both axes.
    fn block_spec(&self, i: usize) -> Conv2dSpec {
        let (kf, kt) = self.kernel_sizes[i];
        Conv2dSpec {
            stride: self.strides[i],
            pad: ((kf - 1) / 2, kf - 1 - (kf - 1) / 2, (kt - 1) / 2, kt - 1 - (kt - 1) / 2),
        }
    }

    fn head_spec(&self) -> Conv2dSpec {
        let (kf, kt) = self.head_kernel;
        Conv2dSpec {
            stride: (1, 1),
            pad: ((kf - 1) / 2, kf - 1 - (kf - 1) / 2, (kt - 1) / 2, kt - 1 - (kt - 1) / 2),
        }
    }

    /// (frequency, time) extent after each block.
    pub fn shape_trace(&self, n_mels: usize, frames: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(4);
        let (mut h, mut w) = (n_mels, frames);
        for i in 0..4 {
            let s = self.block_spec(i);
            let (kf, kt) = self.kernel_sizes[i];
            h = (h + s.pad.0 + s.pad.1 - kf) / s.stride.0 + 1;
            w = (w + s.pad.2 + s.pad.3 - kt) / s.stride.1 + 1;
            out.push((h, w));
        }
        out
    }

    pub fn min_frames(&self) -> usize {
        self.strides.iter().map(|s| s.1).product()
    }
}

/// Intermediate activations `D^(i)` of one discriminator, output layer excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapStack {
    pub layers: Vec<Tensor>,
}

impl FeatureMapStack {
    /// Scalars per example in each layer (`N_i`).
    pub fn unit_counts(&self) -> Vec<usize> {
        self.layers.iter().map(|t| t.numel() / t.dim(0).max(1)).collect()
    }
}

/// Per-example score of one discriminator with its feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorVerdict {
    pub score: f64,
    pub features: FeatureMapStack,
}

/// Graph-attached scores (`[batch]`) and feature maps.
pub struct VerdictVars {
    pub score: Var,
    pub features: Vec<Var>,
}

impl VerdictVars {
    /// Values for a single-example batch.
    pub fn to_verdict(&self) -> DiscriminatorVerdict {
        DiscriminatorVerdict {
            score: self.score.value().data()[0],
            features: FeatureMapStack {
                layers: self.features.iter().map(|v| v.value().clone()).collect(),
            },
        }
    }
}

fn to_batch(x: &AudioBuffer) -> Var {
    Var::constant(Tensor::new(vec![1, 1, x.len()], x.samples().to_vec()))
}

#[derive(Debug, Clone)]
pub struct WaveDiscriminator {
    cfg: WaveDiscConfig,
    prefix: String,
    layout: Layout,
}

impl WaveDiscriminator {
    pub fn new(cfg: WaveDiscConfig, prefix: &str) -> Result<Self> {
        cfg.validate()?;
        let mut layout = Layout::new();
        for i in 0..7 {
            let cin_g = cfg.in_channels(i) / cfg.groups[i];
            layout.push((format!("{prefix}.conv{i}.weight"), vec![cfg.channels[i], cin_g, cfg.kernel_sizes[i]]));
            layout.push((format!("{prefix}.conv{i}.bias"), vec![cfg.channels[i]]));
        }
        layout.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Self {
            cfg,
            prefix: prefix.to_string(),
            layout,
        })
    }

    pub fn config(&self) -> &WaveDiscConfig {
        &self.cfg
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Scalars per layer: weights `cin·cout·k/groups` plus `cout` biases.
    pub fn layer_parameter_counts(&self) -> Vec<usize> {
        (0..7)
            .map(|i| {
                let c = &self.cfg;
                c.in_channels(i) * c.channels[i] * c.kernel_sizes[i] / c.groups[i] + c.channels[i]
            })
            .collect()
    }

    /// Output layer starts at zero so untrained scores are exactly 0.
    pub fn init_params(&self, seed: u64) -> Params {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out_prefix = format!("{}.conv6.", self.prefix);
        let mut p = Params::new();
        for (name, shape) in &self.layout {
            let t = if name.ends_with(".bias") || name.starts_with(&out_prefix) {
                Tensor::zeros(shape)
            } else {
                init_fan_in(&mut rng, shape, shape[1] * shape[2])
            };
            p.insert(name.clone(), t);
        }
        p
    }

    /// Forward over `[batch, 1, time]`.
    pub fn forward(&self, p: &Bound, x: &Var) -> Result<VerdictVars> {
        let s = x.shape();
        if s.len() != 3 || s[1] != 1 {
            return Err(Error::invalid(format!("waveform discriminator input must be [batch, 1, time], got {s:?}")));
        }
        let min = self.cfg.total_stride();
        if s[2] < min {
            return Err(Error::invalid(format!(
                "waveform discriminator needs at least {min} samples, got {}",
                s[2]
            )));
        }
        let mut h = x.clone();
        let mut features = Vec::with_capacity(6);
        for i in 0..7 {
            let w = p.var(&format!("{}.conv{i}.weight", self.prefix))?;
            let b = p.var(&format!("{}.conv{i}.bias", self.prefix))?;
            h = h.conv1d(w, Some(b), self.cfg.layer_spec(i));
            if i < 6 {
                h = h.leaky_relu(self.cfg.leaky_slope);
                features.push(h.clone());
            }
        }
        Ok(VerdictVars {
            score: h.mean_per_example(),
            features,
        })
    }
}

/// Fixed log-mel standardization applied before the spectrogram discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelNorm {
    pub mean: f64,
    pub std: f64,
}

impl Default for MelNorm {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

pub struct SpecDiscriminator {
    cfg: SpecDiscConfig,
    mel: MelConfig,
    sample_rate_hz: u32,
    plan: Rc<StftPlan>,
    /// Transposed filterbank, `bins × n_mels`.
    fb_t: Rc<Tensor>,
    layout: Layout,
    pub norm: MelNorm,
}

impl std::fmt::Debug for SpecDiscriminator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpecDiscriminator")
            .field("cfg", &self.cfg)
            .field("mel", &self.mel)
            .field("norm", &self.norm)
            .finish()
    }
}

impl SpecDiscriminator {
    pub const PREFIX: &'static str = "spec_disc";

    pub fn new(cfg: SpecDiscConfig, mel: MelConfig, sample_rate_hz: u32) -> Result<Self> {
        cfg.validate()?;
        let fb = mel.filterbank(sample_rate_hz)?.transposed();
        let fb_t = Rc::new(Tensor::new(vec![fb.rows, fb.cols], fb.data));
        let plan = Rc::new(StftPlan::new(mel.spectrogram)?);
        let p = Self::PREFIX;
        let c = cfg.channels;
        let mut layout = Layout::new();
        for i in 0..4 {
            let cin = if i == 0 { 1 } else { c };
            let (kf, kt) = cfg.kernel_sizes[i];
            layout.push((format!("{p}.block{i}.conv.weight"), vec![2 * c, cin, kf, kt]));
            layout.push((format!("{p}.block{i}.bn.gamma"), vec![2 * c]));
            layout.push((format!("{p}.block{i}.bn.beta"), vec![2 * c]));
        }
        layout.push((format!("{p}.head.weight"), vec![1, c, cfg.head_kernel.0, cfg.head_kernel.1]));
        layout.push((format!("{p}.head.bias"), vec![1]));
        layout.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Self {
            cfg,
            mel,
            sample_rate_hz,
            plan,
            fb_t,
            layout,
            norm: MelNorm::default(),
        })
    }

    pub fn config(&self) -> &SpecDiscConfig {
        &self.cfg
    }

    pub fn mel(&self) -> &MelConfig {
        &self.mel
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn init_params(&self, seed: u64) -> Params {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Params::new();
        for (name, shape) in &self.layout {
            let t = if name.ends_with(".gamma") {
                Tensor::full(shape, 1.0)
            } else if name.ends_with(".beta") || name.contains(".head.") {
                Tensor::zeros(shape)
            } else {
                init_fan_in(&mut rng, shape, shape[1] * shape[2] * shape[3])
            };
            p.insert(name.clone(), t);
        }
        p
    }

    /// Natural-log mel energies, `[batch, frames, n_mels]`, before normalization.
    pub fn log_mel(&self, x: &Var) -> Var {
        let (b, len) = (x.shape()[0], x.shape()[2]);
        x.reshape(&[b, len])
            .stft_magnitude(self.plan.clone())
            .matmul_const(self.fb_t.clone())
            .add_scalar(LOG_FLOOR)
            .ln()
    }

    /// Forward over a `[batch, 1, time]` waveform at the configured rate.
    pub fn forward(&self, p: &Bound, x: &Var) -> Result<VerdictVars> {
        let s = x.shape();
        if s.len() != 3 || s[1] != 1 {
            return Err(Error::invalid(format!("spectrogram discriminator input must be [batch, 1, time], got {s:?}")));
        }
        let frames = self.mel.spectrogram.frame_count(s[2]);
        if frames < self.cfg.min_frames() {
            return Err(Error::invalid(format!(
                "spectrogram discriminator needs at least {} frames, {} samples give {frames}",
                self.cfg.min_frames(),
                s[2]
            )));
        }
        let b = s[0];
        let c = self.cfg.channels;
        let pre = Self::PREFIX;
        let mel = self
            .log_mel(x)
            .add_scalar(-self.norm.mean)
            .scale(1.0 / self.norm.std)
            .transpose_last2()
            .reshape(&[b, 1, self.mel.n_mels, frames]);
        let mut h = mel;
        let mut features = Vec::with_capacity(4);
        for i in 0..4 {
            let z = h
                .conv2d(p.var(&format!("{pre}.block{i}.conv.weight"))?, None, self.cfg.block_spec(i))
                .batch_norm(self.cfg.bn_eps)
                .channel_affine(
                    p.var(&format!("{pre}.block{i}.bn.gamma"))?,
                    p.var(&format!("{pre}.block{i}.bn.beta"))?,
                );
            h = z.narrow(1, 0, c).mul(&z.narrow(1, c, c).sigmoid());
            features.push(h.clone());
        }
        let out = h.conv2d(
            p.var(&format!("{pre}.head.weight"))?,
            Some(p.var(&format!("{pre}.head.bias"))?),
            self.cfg.head_spec(),
        );
        Ok(VerdictVars {
            score: out.mean_per_example(),
            features,
        })
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }
}

/// The three waveform discriminators and the spectrogram discriminator.
#[derive(Debug)]
pub struct DiscriminatorSet {
    pub wave: [WaveDiscriminator; 3],
    pub spec: SpecDiscriminator,
}

impl DiscriminatorSet {
    pub fn new(wave: WaveDiscConfig, spec: SpecDiscConfig, mel: MelConfig, sample_rate_hz: u32) -> Result<Self> {
        Ok(Self {
            wave: [
                WaveDiscriminator::new(wave.clone(), DISC_NAMES[0])?,
                WaveDiscriminator::new(wave.clone(), DISC_NAMES[1])?,
                WaveDiscriminator::new(wave, DISC_NAMES[2])?,
            ],
            spec: SpecDiscriminator::new(spec, mel, sample_rate_hz)?,
        })
    }

    /// Independent initializations; the four parameter sets share no tensors.
    pub fn init_params(&self, seed: u64) -> [Params; 4] {
        [
            self.wave[0].init_params(seed),
            self.wave[1].init_params(seed.wrapping_add(1)),
            self.wave[2].init_params(seed.wrapping_add(2)),
            self.spec.init_params(seed.wrapping_add(3)),
        ]
    }

    pub fn layouts(&self) -> [&Layout; 4] {
        [self.wave[0].layout(), self.wave[1].layout(), self.wave[2].layout(), self.spec.layout()]
    }

    /// Verdicts of all four discriminators on a `[batch, 1, time]` working-rate waveform.
    pub fn forward(&self, params: &[Bound; 4], x: &Var) -> Result<[VerdictVars; 4]> {
        let [w16, w8, w4] = multi_scale_forward(&self.wave, [&params[0], &params[1], &params[2]], x)?;
        let s = self.spec.forward(&params[3], x)?;
        Ok([w16, w8, w4, s])
    }
}

/// Waveform verdicts at the input rate, half and quarter rate, in that order.
pub fn multi_scale_forward(discs: &[WaveDiscriminator; 3], params: [&Bound; 3], x: &Var) -> Result<[VerdictVars; 3]> {
    let len = x.shape()[2];
    if len < 4 || len / 2 < 4 {
        return Err(Error::invalid(format!("{len} samples too short for two halvings")));
    }
    let half = x.avg_pool1d(4, 2, 1);
    let quarter = half.avg_pool1d(4, 2, 1);
    Ok([
        discs[0].forward(params[0], x)?,
        discs[1].forward(params[1], &half)?,
        discs[2].forward(params[2], &quarter)?,
    ])
}

/// Single-buffer waveform discriminator.
pub fn wave_disc_forward(w: &AudioBuffer, params: &Params, cfg: &WaveDiscConfig, prefix: &str) -> Result<DiscriminatorVerdict> {
    let d = WaveDiscriminator::new(cfg.clone(), prefix)?;
    params.check_layout(d.layout())?;
    Ok(d.forward(&params.bind_frozen(), &to_batch(w))?.to_verdict())
}

/// Single-buffer spectrogram discriminator.
pub fn spec_disc_forward(x: &AudioBuffer, params: &Params, cfg: &SpecDiscConfig, mel: &MelConfig) -> Result<DiscriminatorVerdict> {
    let d = SpecDiscriminator::new(*cfg, *mel, x.sample_rate_hz())?;
    params.check_layout(d.layout())?;
    Ok(d.forward(&params.bind_frozen(), &to_batch(x))?.to_verdict())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::backward;
    use crate::dsp::SpectrogramConfig;

    fn tiny_wave() -> WaveDiscConfig {
        WaveDiscConfig {
            channels: vec![2, 2, 2, 2, 2, 2, 1],
            groups: vec![1; 7],
            ..WaveDiscConfig::default()
        }
    }

    fn tiny_mel() -> MelConfig {
        MelConfig {
            n_mels: 12,
            f_min_hz: 20.0,
            f_max_hz: 8000.0,
            spectrogram: SpectrogramConfig::new(128, 32),
        }
    }

    #[test]
    fn full_wave_disc_shape_trace() {
        let cfg = WaveDiscConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.shape_trace(32000), vec![32000, 8000, 2000, 500, 125, 125, 125]);
        assert_eq!(cfg.total_stride(), 256);
    }

    #[test]
    fn grouped_parameter_counts() {
        let d = WaveDiscriminator::new(WaveDiscConfig::default(), "w").unwrap();
        let counts = d.layer_parameter_counts();
        // Brute force: count weight entries of each layout tensor.
        for i in 0..7 {
            let w: usize = d.layout().iter().find(|(n, _)| *n == format!("w.conv{i}.weight")).unwrap().1.iter().product();
            let b: usize = d.layout().iter().find(|(n, _)| *n == format!("w.conv{i}.bias")).unwrap().1.iter().product();
            assert_eq!(counts[i], w + b);
        }
        assert_eq!(counts[1], 16 * 64 * 41 / 4 + 64);
        assert_eq!(counts[4], 1024 * 1024 * 41 / 256 + 1024);
    }

    #[test]
    fn wave_disc_zero_input_scores_zero_and_rejects_short() {
        let d = WaveDiscriminator::new(tiny_wave(), "w").unwrap();
        let mut p = d.init_params(1);
        // Random output layer, bias-free: a zero input still scores 0.
        let t = init_fan_in(&mut ChaCha8Rng::seed_from_u64(2), &[1, 2, 3], 6);
        p.insert("w.conv6.weight", t);
        let v = wave_disc_forward(&AudioBuffer::zeros(1024, 16000).unwrap(), &p, &tiny_wave(), "w").unwrap();
        assert_eq!(v.score, 0.0);
        assert_eq!(v.features.layers.len(), 6);
        assert!(wave_disc_forward(&AudioBuffer::zeros(255, 16000).unwrap(), &p, &tiny_wave(), "w").is_err());
    }

    #[test]
    fn spec_disc_shapes() {
        let cfg = SpecDiscConfig::default();
        assert_eq!(
            cfg.shape_trace(80, 126),
            vec![(80, 63), (80, 32), (80, 16), (80, 8)]
        );
        let d = SpecDiscriminator::new(SpecDiscConfig { channels: 4, ..cfg }, tiny_mel(), 16000).unwrap();
        let p = d.init_params(3);
        let x = AudioBuffer::new((0..1024).map(|i| (i as f64 * 0.05).sin() * 0.3).collect(), 16000).unwrap();
        let v = d.forward(&p.bind_frozen(), &to_batch(&x)).unwrap();
        assert_eq!(v.features.len(), 4);
        assert_eq!(v.features[3].shape(), &[1, 4, 12, 3]);
        assert_eq!(v.score.value().data(), &[0.0]);
        let short = AudioBuffer::zeros(32 * 14, 16000).unwrap();
        assert!(d.forward(&p.bind_frozen(), &to_batch(&short)).is_err());
    }

    #[test]
    fn multi_scale_lengths_and_independence() {
        let set = DiscriminatorSet::new(tiny_wave(), SpecDiscConfig { channels: 4, ..Default::default() }, tiny_mel(), 16000).unwrap();
        let mut ps = set.init_params(7);
        for p in ps.iter_mut().take(3) {
            let names: Vec<String> = p.iter().map(|(n, _)| n.clone()).filter(|n| n.contains("conv6.weight")).collect();
            for n in names {
                let t = p.get(&n).unwrap().map(|_| 0.3);
                p.insert(n, t);
            }
        }
        let x = Var::constant(Tensor::new(vec![1, 1, 2048], (0..2048).map(|i| (i as f64 * 0.01).sin()).collect()));
        let bound: [Bound; 3] = [ps[0].bind_frozen(), ps[1].bind_frozen(), ps[2].bind_frozen()];
        let v = multi_scale_forward(&set.wave, [&bound[0], &bound[1], &bound[2]], &x).unwrap();
        assert_eq!(v[0].features[0].shape()[2], 2048);
        assert_eq!(v[1].features[0].shape()[2], 1024);
        assert_eq!(v[2].features[0].shape()[2], 512);
        let before = v[0].score.item();

        // Mutate disc-2 parameters only.
        let mut p2 = ps[1].clone();
        for (_, t) in p2.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += 1.0);
        }
        let b2 = [ps[0].bind_frozen(), p2.bind_frozen(), ps[2].bind_frozen()];
        let v2 = multi_scale_forward(&set.wave, [&b2[0], &b2[1], &b2[2]], &x).unwrap();
        assert_eq!(v2[0].score.item(), before);
        assert_ne!(v2[1].score.item(), v[1].score.item());
    }

    #[test]
    fn scores_reach_the_input_through_downsampling() {
        let set = DiscriminatorSet::new(tiny_wave(), SpecDiscConfig { channels: 4, ..Default::default() }, tiny_mel(), 16000).unwrap();
        let mut ps = set.init_params(11);
        for p in ps.iter_mut() {
            let names: Vec<String> = p.iter().map(|(n, _)| n.clone()).filter(|n| n.contains("conv6.weight") || n.contains("head.weight")).collect();
            for n in names {
                let t = p.get(&n).unwrap().map(|_| 0.5);
                p.insert(n, t);
            }
        }
        let bound = [ps[0].bind_frozen(), ps[1].bind_frozen(), ps[2].bind_frozen(), ps[3].bind_frozen()];
        let x0: Vec<f64> = (0..1024).map(|i| ((i * 31 % 23) as f64 / 11.5 - 1.0) * 0.4).collect();
        for k in 0..4 {
            let f = |x: &Var| set.forward(&bound, x).unwrap()[k].score.sum();
            let xv = Var::param(Tensor::new(vec![1, 1, 1024], x0.clone()));
            let g = backward(&f(&xv)).get(&xv).unwrap().clone();
            let h = 1e-5;
            for i in [3usize, 200, 511, 900] {
                let mut a = x0.clone();
                a[i] += h;
                let mut b = x0.clone();
                b[i] -= h;
                let fa = f(&Var::constant(Tensor::new(vec![1, 1, 1024], a))).item();
                let fb = f(&Var::constant(Tensor::new(vec![1, 1, 1024], b))).item();
                let num = (fa - fb) / (2.0 * h);
                let ana = g.data()[i];
                assert!(
                    (num - ana).abs() <= 1e-3 * num.abs().max(ana.abs()).max(1e-4),
                    "disc {k} sample {i}: {num} vs {ana}"
                );
            }
        }
    }
}
