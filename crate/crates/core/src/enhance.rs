//! Inference on arbitrary-length recordings.

use crate::audio::AudioBuffer;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::nn::{Generator, Params};

/// Chunk start positions covering `len`; the last chunk ends flush with the input.
pub fn chunk_starts(len: usize, window: usize, overlap: usize) -> Vec<usize> {
    if len <= window {
        return vec![0];
    }
    let hop = window - overlap;
    let mut starts: Vec<usize> = (0..).map(|k| k * hop).take_while(|&s| s + window < len).collect();
    starts.push(len - window);
    starts
}

/// Generator output over overlapping windows joined by linear cross-fades.
///
/// With `overlap` at least the receptive field, samples outside the fades match
/// whole-input processing.
pub fn enhance_chunked(g: &Generator, params: &Params, x: &AudioBuffer, window: usize, overlap: usize) -> Result<AudioBuffer> {
    if window == 0 || overlap >= window {
        return Err(Error::config(format!("invalid chunking: window {window}, overlap {overlap}")));
    }
    let n = x.len();
    if n <= window {
        return Ok(g.enhance(params, x)?.post_postnet);
    }
    let starts = chunk_starts(n, window, overlap);
    let mut acc = vec![0.0; n];
    let mut wsum = vec![0.0; n];
    for (k, &s) in starts.iter().enumerate() {
        let chunk = x.with_samples(x.samples()[s..s + window].to_vec())?;
        let y = g.enhance(params, &chunk)?.post_postnet;
        let fade_in = if k > 0 { starts[k - 1] + window - s } else { 0 };
        let fade_out = starts.get(k + 1).map_or(0, |&next| s + window - next);
        for (i, v) in y.samples().iter().enumerate() {
            let mut w = 1.0f64;
            if i < fade_in {
                w = w.min((i as f64 + 0.5) / fade_in as f64);
            }
            if i + fade_out >= window {
                w = w.min(((window - i) as f64 - 0.5) / fade_out as f64);
            }
            acc[s + i] += w * v;
            wsum[s + i] += w;
        }
    }
    x.with_samples(acc.iter().zip(&wsum).map(|(a, w)| a / w).collect())
}

/// Resample to the working rate, enhance in windows and clip to [-1, 1].
pub fn enhance_audio(cfg: &RunConfig, g: &Generator, params: &Params, x: &AudioBuffer) -> Result<AudioBuffer> {
    let x = x.resampled(cfg.dsp.sample_rate_hz)?;
    let y = enhance_chunked(g, params, &x, cfg.eval.chunk_len, cfg.eval.chunk_overlap)?;
    y.with_samples(y.samples().iter().map(|v| v.clamp(-1.0, 1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_the_input() {
        assert_eq!(chunk_starts(100, 200, 10), vec![0]);
        assert_eq!(chunk_starts(200, 200, 10), vec![0]);
        assert_eq!(chunk_starts(201, 200, 10), vec![0, 1]);
        assert_eq!(chunk_starts(1000, 400, 100), vec![0, 300, 600]);
        assert_eq!(chunk_starts(1001, 400, 100), vec![0, 300, 600, 601]);
    }
}
