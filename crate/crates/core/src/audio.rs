//! Mono waveform container, WAVE file I/O and band-limited resampling.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// Default working sample rate for every model and metric.
pub const WORKING_RATE_HZ: u32 = 16_000;

/// A single-channel waveform. Samples are finite; length is at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("audio buffer must contain at least one sample"));
        }
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    /// Same rate, new content. Fails on the same conditions as [`AudioBuffer::new`].
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sample_rate_hz)
    }

    pub fn scaled(&self, gain: f64) -> Result<Self> {
        self.with_samples(self.samples.iter().map(|v| v * gain).collect())
    }

    /// Resample to `target_hz` with a windowed-sinc interpolator.
    pub fn resampled(&self, target_hz: u32) -> Result<Self> {
        if target_hz == 0 {
            return Err(Error::invalid("target sample rate must be positive"));
        }
        if target_hz == self.sample_rate_hz {
            return Ok(self.clone());
        }
        let ratio = self.sample_rate_hz as f64 / target_hz as f64;
        let out_len = ((self.samples.len() as f64) / ratio).round().max(1.0) as usize;
        Self::new(resample_by_step(&self.samples, ratio, out_len), target_hz)
    }

    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let wav_err = |source| Error::Wav {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(Error::invalid(format!(
                "{}: expected mono audio, found {} channels",
                path.display(),
                spec.channels
            )));
        }
        let samples: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Float => reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?,
            hound::SampleFormat::Int => {
                let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(wav_err)?
            }
        };
        Self::new(samples, spec.sample_rate)
    }

    /// Read a file and bring it to `working_rate_hz`.
    pub fn read_wav_at(path: impl AsRef<Path>, working_rate_hz: u32) -> Result<Self> {
        Self::read_wav(path)?.resampled(working_rate_hz)
    }

    /// Write 32-bit float WAVE. Values are clipped to [-1, 1].
    pub fn write_wav_f32(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_wav(path.as_ref(), WavFormat::Float32)
    }

    /// Write 16-bit PCM WAVE without dither. Values are clipped to [-1, 1].
    pub fn write_wav_pcm16(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_wav(path.as_ref(), WavFormat::Pcm16)
    }

    pub fn write_wav(&self, path: &Path, format: WavFormat) -> Result<()> {
        let wav_err = |source| Error::Wav {
            path: path.to_path_buf(),
            source,
        };
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate_hz,
            bits_per_sample: match format {
                WavFormat::Float32 => 32,
                WavFormat::Pcm16 => 16,
            },
            sample_format: match format {
                WavFormat::Float32 => hound::SampleFormat::Float,
                WavFormat::Pcm16 => hound::SampleFormat::Int,
            },
        };
        let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
        for &s in &self.samples {
            let c = s.clamp(-1.0, 1.0);
            match format {
                WavFormat::Float32 => writer.write_sample(c as f32).map_err(wav_err)?,
                WavFormat::Pcm16 => writer
                    .write_sample((c * 32767.0).round() as i16)
                    .map_err(wav_err)?,
            }
        }
        writer.finalize().map_err(wav_err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Float32,
    Pcm16,
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

const SINC_ZERO_CROSSINGS: f64 = 24.0;

/// Band-limited interpolation reading the input at positions `n * step`.
///
/// `step > 1` shortens (and low-passes) the signal, `step < 1` stretches it.
pub fn resample_by_step(x: &[f64], step: f64, out_len: usize) -> Vec<f64> {
    let cutoff = (1.0 / step).min(1.0);
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    let n = x.len() as isize;
    (0..out_len)
        .map(|i| {
            let t = i as f64 * step;
            let lo = (t - half_width).ceil().max(0.0) as isize;
            let hi = ((t + half_width).floor() as isize).min(n - 1);
            let mut acc = 0.0;
            for k in lo..=hi {
                let d = t - k as f64;
                let w = 0.5 + 0.5 * (PI * d / half_width).cos();
                acc += x[k as usize] * cutoff * sinc(cutoff * d) * w;
            }
            acc
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}
