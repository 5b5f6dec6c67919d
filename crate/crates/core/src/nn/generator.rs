//! The enhancement network: a non-causal feed-forward WaveNet followed by a
//! convolutional postnet whose output is added back to the coarse prediction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{init_fan_in, Bound, Layout, Params};
use crate::audio::AudioBuffer;
use crate::autograd::{Conv1dSpec, PadMode, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_layers: usize,
    /// Dilations of one stack; repeated `n_layers / len` times.
    pub dilation_cycle: Vec<usize>,
    pub kernel_size: usize,
    pub channels: usize,
    pub postnet_layers: usize,
    pub postnet_channels: usize,
    pub postnet_kernel: usize,
}

impl Default for GeneratorConfig {
    /// 20 layers in two stacks of dilations 1..512, 128 channels; 12-layer postnet.
    fn default() -> Self {
        Self {
            n_layers: 20,
            dilation_cycle: (0..10).map(|k| 1 << k).collect(),
            kernel_size: 3,
            channels: 128,
            postnet_layers: 12,
            postnet_channels: 128,
            postnet_kernel: 32,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("n_layers", self.n_layers),
            ("kernel_size", self.kernel_size),
            ("channels", self.channels),
            ("postnet_layers", self.postnet_layers),
            ("postnet_channels", self.postnet_channels),
            ("postnet_kernel", self.postnet_kernel),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("generator {name} must be positive")));
        }
        let cycle = &self.dilation_cycle;
        if cycle.is_empty() || self.n_layers % cycle.len() != 0 {
            return Err(Error::config(format!(
                "n_layers {} is not a whole number of {}-layer dilation stacks",
                self.n_layers,
                cycle.len()
            )));
        }
        if cycle.iter().any(|d| !d.is_power_of_two()) || cycle.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(format!(
                "dilation cycle {cycle:?} must be increasing powers of two"
            )));
        }
        Ok(())
    }

    pub fn stacks(&self) -> usize {
        self.n_layers / self.dilation_cycle.len()
    }

    /// Dilation of every main-network layer in order.
    pub fn dilations(&self) -> Vec<usize> {
        (0..self.n_layers).map(|i| self.dilation_cycle[i % self.dilation_cycle.len()]).collect()
    }

    fn postnet_widths(&self, layer: usize) -> (usize, usize) {
        let cin = if layer == 0 { 1 } else { self.postnet_channels };
        let cout = if layer + 1 == self.postnet_layers { 1 } else { self.postnet_channels };
        (cin, cout)
    }
}

/// Input span of one main-network output sample: `1 + Σ (kernel-1)·dilation`.
pub fn receptive_field(cfg: &GeneratorConfig) -> usize {
    1 + cfg.dilations().iter().map(|d| (cfg.kernel_size - 1) * d).sum::<usize>()
}

/// Extra span contributed by the postnet: `(postnet_kernel-1)·postnet_layers`.
pub fn postnet_extension(cfg: &GeneratorConfig) -> usize {
    (cfg.postnet_kernel - 1) * cfg.postnet_layers
}

/// Span of one post-postnet output sample.
pub fn total_receptive_field(cfg: &GeneratorConfig) -> usize {
    receptive_field(cfg) + postnet_extension(cfg)
}

/// Trainable scalars per named tensor, in forward order.
pub fn parameter_breakdown(cfg: &GeneratorConfig) -> Vec<(String, usize)> {
    layout(cfg)
        .into_iter()
        .map(|(n, s)| (n, s.iter().product()))
        .collect()
}

/// Main network plus postnet.
pub fn count_parameters(cfg: &GeneratorConfig) -> usize {
    parameter_breakdown(cfg).iter().map(|(_, n)| n).sum()
}

pub fn count_postnet_parameters(cfg: &GeneratorConfig) -> usize {
    parameter_breakdown(cfg)
        .iter()
        .filter(|(n, _)| n.starts_with("generator.postnet."))
        .map(|(_, n)| n)
        .sum()
}

fn layer_name(i: usize) -> String {
    format!("generator.main.layer{i:02}")
}

fn layout(cfg: &GeneratorConfig) -> Layout {
    let c = cfg.channels;
    let mut l: Layout = vec![
        ("generator.main.input.weight".into(), vec![c, 1, 1]),
        ("generator.main.input.bias".into(), vec![c]),
    ];
    for i in 0..cfg.n_layers {
        let p = layer_name(i);
        l.push((format!("{p}.dilated.weight"), vec![2 * c, c, cfg.kernel_size]));
        l.push((format!("{p}.dilated.bias"), vec![2 * c]));
        l.push((format!("{p}.residual.weight"), vec![c, c, 1]));
        l.push((format!("{p}.residual.bias"), vec![c]));
        l.push((format!("{p}.skip.weight"), vec![c, c, 1]));
        l.push((format!("{p}.skip.bias"), vec![c]));
    }
    l.push(("generator.main.out1.weight".into(), vec![c, c, 1]));
    l.push(("generator.main.out1.bias".into(), vec![c]));
    l.push(("generator.main.out2.weight".into(), vec![1, c, 1]));
    l.push(("generator.main.out2.bias".into(), vec![1]));
    for i in 0..cfg.postnet_layers {
        let (cin, cout) = cfg.postnet_widths(i);
        l.push((format!("generator.postnet.conv{i:02}.weight"), vec![cout, cin, cfg.postnet_kernel]));
        l.push((format!("generator.postnet.conv{i:02}.bias"), vec![cout]));
    }
    l.sort_by(|a, b| a.0.cmp(&b.0));
    l
}

/// Coarse and refined predictions, both length- and rate-preserving.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorOutput {
    pub pre_postnet: AudioBuffer,
    pub post_postnet: AudioBuffer,
}

/// Differentiable counterpart of [`GeneratorOutput`] over a `[batch, 1, time]` input.
pub struct GeneratorVars {
    pub pre_postnet: Var,
    pub post_postnet: Var,
}

#[derive(Debug, Clone)]
pub struct Generator {
    cfg: GeneratorConfig,
    layout: Layout,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = layout(&cfg);
        Ok(Self { cfg, layout })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Fan-in scaled Gaussian weights, zero biases, zero final postnet layer.
    pub fn init_params(&self, seed: u64) -> Params {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last_postnet = format!("generator.postnet.conv{:02}.", self.cfg.postnet_layers - 1);
        let mut p = Params::new();
        for (name, shape) in &self.layout {
            let t = if name.ends_with(".bias") || name.starts_with(&last_postnet) {
                Tensor::zeros(shape)
            } else {
                init_fan_in(&mut rng, shape, shape[1] * shape[2])
            };
            p.insert(name.clone(), t);
        }
        p
    }

    /// Main network on `[batch, 1, time]`.
    pub fn main_forward(&self, p: &Bound, x: &Var) -> Result<Var> {
        check_input(x)?;
        let c = self.cfg.channels;
        let pw = Conv1dSpec::pointwise();
        let w = |n: &str| p.var(n);
        let mut h = x.conv1d(w("generator.main.input.weight")?, Some(w("generator.main.input.bias")?), pw);
        let mut skip: Option<Var> = None;
        for (i, d) in self.cfg.dilations().into_iter().enumerate() {
            let name = layer_name(i);
            let spec = Conv1dSpec::same(self.cfg.kernel_size, d);
            let z = h.conv1d(
                w(&format!("{name}.dilated.weight"))?,
                Some(w(&format!("{name}.dilated.bias"))?),
                spec,
            );
            let gated = z.narrow(1, 0, c).tanh().mul(&z.narrow(1, c, c).sigmoid());
            let s = gated.conv1d(w(&format!("{name}.skip.weight"))?, Some(w(&format!("{name}.skip.bias"))?), pw);
            skip = Some(match skip {
                Some(acc) => acc.add(&s),
                None => s,
            });
            let r = gated.conv1d(
                w(&format!("{name}.residual.weight"))?,
                Some(w(&format!("{name}.residual.bias"))?),
                pw,
            );
            h = h.add(&r);
        }
        let skip = skip.expect("at least one layer");
        let o = skip
            .relu()
            .conv1d(w("generator.main.out1.weight")?, Some(w("generator.main.out1.bias")?), pw)
            .relu()
            .conv1d(w("generator.main.out2.weight")?, Some(w("generator.main.out2.bias")?), pw);
        Ok(o)
    }

    /// Residual correction computed by the postnet.
    pub fn postnet_forward(&self, p: &Bound, coarse: &Var) -> Result<Var> {
        let k = self.cfg.postnet_kernel;
        let spec = Conv1dSpec {
            stride: 1,
            dilation: 1,
            groups: 1,
            pad_left: k / 2,
            pad_right: k - 1 - k / 2,
            pad_mode: PadMode::Zero,
        };
        let mut h = coarse.clone();
        for i in 0..self.cfg.postnet_layers {
            h = h.conv1d(
                p.var(&format!("generator.postnet.conv{i:02}.weight"))?,
                Some(p.var(&format!("generator.postnet.conv{i:02}.bias"))?),
                spec,
            );
            if i + 1 < self.cfg.postnet_layers {
                h = h.tanh();
            }
        }
        Ok(h)
    }

    /// Both outputs; with `use_postnet` false the refined output is the coarse one.
    pub fn forward(&self, p: &Bound, x: &Var, use_postnet: bool) -> Result<GeneratorVars> {
        let pre = self.main_forward(p, x)?;
        let post = if use_postnet {
            pre.add(&self.postnet_forward(p, &pre)?)
        } else {
            pre.clone()
        };
        Ok(GeneratorVars {
            pre_postnet: pre,
            post_postnet: post,
        })
    }

    /// Evaluation-mode enhancement of one buffer.
    pub fn enhance(&self, params: &Params, x: &AudioBuffer) -> Result<GeneratorOutput> {
        params.check_layout(&self.layout)?;
        let input = Var::constant(Tensor::new(vec![1, 1, x.len()], x.samples().to_vec()));
        let out = self.forward(&params.bind_frozen(), &input, true)?;
        let to_buf = |v: &Var| {
            if !v.value().all_finite() {
                return Err(Error::NonFinite("generator produced a non-finite sample".into()));
            }
            x.with_samples(v.value().data().to_vec())
        };
        Ok(GeneratorOutput {
            pre_postnet: to_buf(&out.pre_postnet)?,
            post_postnet: to_buf(&out.post_postnet)?,
        })
    }
}

fn check_input(x: &Var) -> Result<()> {
    let s = x.shape();
    if s.len() != 3 || s[1] != 1 || s[2] == 0 {
        return Err(Error::invalid(format!("generator input must be [batch, 1, time], got {s:?}")));
    }
    Ok(())
}

/// Run the generator on one waveform.
pub fn generator_forward(x: &AudioBuffer, params: &Params, cfg: &GeneratorConfig) -> Result<GeneratorOutput> {
    Generator::new(cfg.clone())?.enhance(params, x)
}
