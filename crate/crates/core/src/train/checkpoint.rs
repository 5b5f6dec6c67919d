//! Checkpoint directories: `meta.json` plus one binary blob per tensor.
//!
//! Blob layout: magic `ENT1`, `u32` rank, `u64` dims, then `f64` values, all
//! little-endian.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::optim::AdamState;
use super::{DiscState, TrainState};
use crate::autograd::Tensor;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::nn::{Generator, MelNorm, Params, DISC_NAMES};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"ENT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub step: usize,
    pub stage_id: u8,
    pub disc_updates: u64,
    pub generator_adam_t: u64,
    pub disc_adam_t: Option<[u64; 4]>,
    pub mel_norm: Option<MelNorm>,
    pub loss_history: Vec<f64>,
    /// The effective run configuration, verbatim.
    pub config: String,
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + 8 * (t.ndim() + t.numel()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let b = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::Checkpoint(format!("{}: {why}", path.display()));
    if b.len() < 8 || &b[..4] != MAGIC {
        return Err(bad("not a tensor blob"));
    }
    let ndim = u32::from_le_bytes(b[4..8].try_into().unwrap()) as usize;
    let head = 8 + 8 * ndim;
    if b.len() < head {
        return Err(bad("truncated header"));
    }
    let shape: Vec<usize> = (0..ndim)
        .map(|i| u64::from_le_bytes(b[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize)
        .collect();
    let n: usize = shape.iter().product();
    if b.len() != head + 8 * n {
        return Err(bad(&format!("expected {} values, file holds {} bytes", n, b.len() - head)));
    }
    let data = b[head..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Tensor::new(shape, data))
}

fn write_group(dir: &Path, p: &Params) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, t) in p.iter() {
        write_tensor(&dir.join(format!("{name}.bin")), t)?;
    }
    Ok(())
}

fn read_group(dir: &Path, layout: &[(String, Vec<usize>)]) -> Result<Params> {
    let mut p = Params::new();
    for (name, _) in layout {
        let path = dir.join(format!("{name}.bin"));
        if !path.is_file() {
            return Err(Error::Checkpoint(format!("missing tensor {}", path.display())));
        }
        p.insert(name.clone(), read_tensor(&path)?);
    }
    p.check_layout(&layout.to_vec())
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", dir.display())))?;
    let extra = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.count();
    if extra != layout.len() {
        return Err(Error::Checkpoint(format!(
            "{} holds {extra} tensors, configuration expects {}",
            dir.display(),
            layout.len()
        )));
    }
    Ok(p)
}

/// Write atomically: build in a sibling temporary directory, then rename.
pub fn save(dir: &Path, state: &TrainState, stage_id: u8, cfg: &RunConfig) -> Result<()> {
    let parent = dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let tmp = parent.join(format!(
        ".{}.tmp",
        dir.file_name().and_then(|s| s.to_str()).unwrap_or("checkpoint")
    ));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    write_group(&tmp.join("generator"), &state.generator)?;
    write_group(&tmp.join("generator_adam_m"), &state.gen_opt.m)?;
    write_group(&tmp.join("generator_adam_v"), &state.gen_opt.v)?;
    if let Some(d) = &state.discriminators {
        for k in 0..4 {
            write_group(&tmp.join(DISC_NAMES[k]), &d.params[k])?;
            write_group(&tmp.join(format!("{}_adam_m", DISC_NAMES[k])), &d.opt[k].m)?;
            write_group(&tmp.join(format!("{}_adam_v", DISC_NAMES[k])), &d.opt[k].v)?;
        }
    }
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        step: state.step,
        stage_id,
        disc_updates: state.disc_updates,
        generator_adam_t: state.gen_opt.t,
        disc_adam_t: state.discriminators.as_ref().map(|d| std::array::from_fn(|k| d.opt[k].t)),
        mel_norm: state.discriminators.as_ref().map(|d| d.mel_norm),
        loss_history: state.loss_history.iter().copied().collect(),
        config: cfg.to_toml_string()?,
    };
    let mp = tmp.join("meta.json");
    fs::write(&mp, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&mp, e))?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

pub fn read_meta(dir: &Path) -> Result<(CheckpointMeta, RunConfig)> {
    let mp = dir.join("meta.json");
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", mp.display())))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: format version {} is not supported (expected {FORMAT_VERSION})",
            mp.display(),
            meta.format_version
        )));
    }
    let cfg = RunConfig::from_toml_str(&meta.config)
        .map_err(|e| Error::Checkpoint(format!("{}: stored configuration is invalid: {e}", mp.display())))?;
    Ok((meta, cfg))
}

/// Generator weights and the configuration they were trained with.
pub fn load_generator(dir: &Path) -> Result<(RunConfig, Params)> {
    let (_, cfg) = read_meta(dir)?;
    let g = Generator::new(cfg.generator.clone())?;
    let p = read_group(&dir.join("generator"), g.layout())?;
    Ok((cfg, p))
}

/// Full training state; fails with a configuration error if `expected` differs
/// from the stored configuration.
pub fn load(dir: &Path, expected: &RunConfig) -> Result<(TrainState, u8)> {
    let (meta, stored) = read_meta(dir)?;
    let diff = stored.differing_sections(expected);
    if !diff.is_empty() {
        return Err(Error::config(format!(
            "checkpoint {} was written with a different configuration (sections: {})",
            dir.display(),
            diff.join(", ")
        )));
    }
    let g = Generator::new(stored.generator.clone())?;
    let generator = read_group(&dir.join("generator"), g.layout())?;
    let gen_opt = AdamState {
        m: read_group(&dir.join("generator_adam_m"), g.layout())?,
        v: read_group(&dir.join("generator_adam_v"), g.layout())?,
        t: meta.generator_adam_t,
    };
    let discriminators = match (meta.disc_adam_t, meta.mel_norm) {
        (Some(ts), Some(mel_norm)) => {
            let set = crate::nn::DiscriminatorSet::new(
                stored.discriminators.wave.clone(),
                stored.discriminators.spec,
                stored.dsp.mel,
                stored.dsp.sample_rate_hz,
            )?;
            let layouts = set.layouts();
            let mut params = Vec::with_capacity(4);
            let mut opt = Vec::with_capacity(4);
            for k in 0..4 {
                params.push(read_group(&dir.join(DISC_NAMES[k]), layouts[k])?);
                opt.push(AdamState {
                    m: read_group(&dir.join(format!("{}_adam_m", DISC_NAMES[k])), layouts[k])?,
                    v: read_group(&dir.join(format!("{}_adam_v", DISC_NAMES[k])), layouts[k])?,
                    t: ts[k],
                });
            }
            Some(DiscState {
                params: params.try_into().expect("four"),
                opt: opt.try_into().expect("four"),
                mel_norm,
            })
        }
        (None, None) => None,
        _ => return Err(Error::Checkpoint(format!("{}: inconsistent discriminator metadata", dir.display()))),
    };
    Ok((
        TrainState {
            step: meta.step,
            generator,
            gen_opt,
            discriminators,
            disc_updates: meta.disc_updates,
            loss_history: VecDeque::from(meta.loss_history),
        },
        meta.stage_id,
    ))
}

/// Checkpoint directories under `root` named `step_XXXXXXXX`, by step.
pub fn list_checkpoints(root: &Path) -> Vec<(usize, PathBuf)> {
    let mut out: Vec<(usize, PathBuf)> = fs::read_dir(root)
        .into_iter()
        .flatten()
        .flatten()
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let step = name.strip_prefix("step_")?.parse().ok()?;
            e.path().join("meta.json").is_file().then(|| (step, e.path()))
        })
        .collect();
    out.sort();
    out
}
