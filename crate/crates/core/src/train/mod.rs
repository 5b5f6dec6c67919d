//! Staged training: batch simulation, generator and discriminator updates,
//! validation, logging and checkpointing.

pub mod checkpoint;
pub mod optim;

use std::collections::VecDeque;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::audio::AudioBuffer;
use crate::autograd::{backward, Tensor, Var};
use crate::config::{RunConfig, StageConfig};
use crate::data::{held_out_spec, sample_spec, simulate_pair, Assets, AugmentationConfig, Manifest, Split};
use crate::error::{Error, Result};
use crate::losses::{
    discriminator_objective, generator_objective, l1_sample_loss, mean_scores, multires_spec_loss, Adversary,
    LossReport, SpecLoss,
};
use crate::nn::{DiscriminatorSet, Generator, MelNorm, Params};
use optim::{clip_global_norm, AdamState};

pub const LOSS_HISTORY_LEN: usize = 100;
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const VALIDATION_LOG: &str = "validation.jsonl";

/// SplitMix64 finalizer over a pair; used to derive every per-step seed.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Discriminator parameters, their optimizers and the fixed log-mel standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscState {
    pub params: [Params; 4],
    pub opt: [AdamState; 4],
    pub mel_norm: MelNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Generator steps completed.
    pub step: usize,
    pub generator: Params,
    pub gen_opt: AdamState,
    /// Created on entry to the first adversarial stage.
    pub discriminators: Option<DiscState>,
    pub disc_updates: u64,
    pub loss_history: VecDeque<f64>,
}

/// Stage boundaries after scaling.
#[derive(Debug, Clone)]
pub struct Schedule {
    stages: Vec<(StageConfig, usize, usize)>,
}

impl Schedule {
    pub fn new(cfg: &RunConfig) -> Self {
        let mut start = 0;
        let stages = cfg
            .stages
            .schedule
            .iter()
            .map(|s| {
                let n = s.scaled_steps(cfg.stages.stage_scale);
                let r = (*s, start, start + n);
                start += n;
                r
            })
            .collect();
        Self { stages }
    }

    pub fn total_steps(&self) -> usize {
        self.stages.last().map_or(0, |s| s.2)
    }

    /// `(config, first step, end step)` per stage.
    pub fn stages(&self) -> &[(StageConfig, usize, usize)] {
        &self.stages
    }

    /// The stage that runs generator step `step` (0-based); the last stage past the end.
    pub fn stage_at(&self, step: usize) -> &StageConfig {
        self.stages
            .iter()
            .find(|s| step < s.2)
            .or(self.stages.last())
            .map(|s| &s.0)
            .expect("non-empty schedule")
    }

    /// True when `completed` steps end a stage.
    pub fn is_boundary(&self, completed: usize) -> bool {
        self.stages.iter().any(|s| s.2 == completed)
    }
}

/// One batch of aligned crops, `[batch, 1, crop]`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub degraded: Tensor,
    pub target: Tensor,
    pub seed: u64,
}

/// Simulates training pairs on the fly. Each item's randomness comes from
/// `(batch seed, item index)`, so batches do not depend on worker scheduling.
pub struct BatchSource {
    clean: Vec<AudioBuffer>,
    assets: Assets,
    rir_ids: Vec<String>,
    noise_ids: Vec<String>,
    aug: AugmentationConfig,
    crop_len: usize,
    batch_size: usize,
    pool: rayon::ThreadPool,
}

impl BatchSource {
    pub fn new(
        clean: Vec<AudioBuffer>,
        assets: Assets,
        aug: AugmentationConfig,
        crop_len: usize,
        batch_size: usize,
        workers: usize,
    ) -> Result<Self> {
        if clean.is_empty() {
            return Err(Error::invalid("the training split is empty"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("cannot start data workers: {e}")))?;
        Ok(Self {
            rir_ids: assets.rir_ids(),
            noise_ids: assets.noise_ids(),
            clean,
            assets,
            aug,
            crop_len,
            batch_size,
            pool,
        })
    }

    pub fn clean(&self) -> &[AudioBuffer] {
        &self.clean
    }

    fn item(&self, seed: u64, augment: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let utt = &self.clean[rng.gen_range(0..self.clean.len())];
        let spec = sample_spec(&mut rng, &self.aug, &self.rir_ids, &self.noise_ids, augment)?;
        let (x, t) = simulate_pair(utt, &spec, &self.assets)?;
        let (x, t) = (x.samples(), t.samples());
        let n = self.crop_len;
        if x.len() >= n {
            let s = rng.gen_range(0..=x.len() - n);
            Ok((x[s..s + n].to_vec(), t[s..s + n].to_vec()))
        } else {
            let left = (n - x.len()) / 2;
            let pad = |v: &[f64]| {
                let mut o = vec![0.0; n];
                o[left..left + v.len()].copy_from_slice(v);
                o
            };
            Ok((pad(x), pad(t)))
        }
    }

    pub fn batch(&self, seed: u64, augment: bool) -> Result<Batch> {
        let items: Vec<(Vec<f64>, Vec<f64>)> = self.pool.install(|| {
            (0..self.batch_size)
                .into_par_iter()
                .map(|i| self.item(mix(seed, i as u64), augment))
                .collect::<Result<_>>()
        })?;
        let shape = vec![self.batch_size, 1, self.crop_len];
        let (mut x, mut t) = (Vec::with_capacity(shape.iter().product()), Vec::new());
        for (a, b) in items {
            x.extend(a);
            t.extend(b);
        }
        Ok(Batch {
            degraded: Tensor::new(shape.clone(), x),
            target: Tensor::new(shape, t),
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    pub spec_loss: f64,
    pub l1: f64,
}

pub struct Trainer {
    pub cfg: RunConfig,
    pub generator: Generator,
    pub discs: DiscriminatorSet,
    pub source: BatchSource,
    spec_loss: SpecLoss,
    schedule: Schedule,
    /// Fixed `(degraded, target)` validation pairs.
    val: Vec<(AudioBuffer, AudioBuffer)>,
}

impl Trainer {
    pub fn new(cfg: RunConfig, manifest: &Manifest, workers: usize) -> Result<Self> {
        cfg.validate()?;
        let sr = cfg.dsp.sample_rate_hz;
        let assets = manifest.load_assets(sr)?;
        let clean = manifest
            .split(Split::Train)
            .into_iter()
            .map(|e| manifest.load_clean(e, sr))
            .collect::<Result<Vec<_>>>()?;
        let mut val = Vec::new();
        for (i, e) in manifest.split(Split::Val).into_iter().enumerate() {
            let spec = held_out_spec(e, i, cfg.eval.pair_seed, &cfg.data.augmentation);
            val.push(simulate_pair(&manifest.load_clean(e, sr)?, &spec, &assets)?);
        }
        let source = BatchSource::new(
            clean,
            assets,
            cfg.data.augmentation.clone(),
            cfg.data.crop_len,
            cfg.data.batch_size,
            workers,
        )?;
        Ok(Self {
            generator: Generator::new(cfg.generator.clone())?,
            discs: DiscriminatorSet::new(
                cfg.discriminators.wave.clone(),
                cfg.discriminators.spec,
                cfg.dsp.mel,
                sr,
            )?,
            spec_loss: SpecLoss::new()?,
            schedule: Schedule::new(&cfg),
            source,
            val,
            cfg,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn init_state(&self) -> TrainState {
        let generator = self.generator.init_params(self.cfg.seed);
        TrainState {
            step: 0,
            gen_opt: AdamState::new(&generator),
            generator,
            discriminators: None,
            disc_updates: 0,
            loss_history: VecDeque::with_capacity(LOSS_HISTORY_LEN),
        }
    }

    /// Seed of the batch for generator step `step`; slot 0 feeds the generator,
    /// slots `1..` the discriminator updates of that step.
    pub fn batch_seed(&self, step: usize, slot: usize) -> u64 {
        mix(mix(self.cfg.seed, step as u64), slot as u64)
    }

    /// Log-mel mean and standard deviation over the training clean audio.
    pub fn mel_norm(&self) -> MelNorm {
        let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
        for a in self.source.clean() {
            let x = Var::constant(Tensor::new(vec![1, 1, a.len()], a.samples().to_vec()));
            for &v in self.discs.spec.log_mel(&x).value().data() {
                n += 1;
                s += v;
                s2 += v * v;
            }
        }
        let mean = s / n.max(1) as f64;
        let var = (s2 / n.max(1) as f64 - mean * mean).max(0.0);
        MelNorm {
            mean,
            std: if var > 0.0 { var.sqrt() } else { 1.0 },
        }
    }

    /// Fresh discriminators, as at the start of the adversarial stage.
    pub fn init_discriminators(&mut self, state: &mut TrainState) {
        let params = self.discs.init_params(mix(self.cfg.seed, self.cfg.stages.disc_seed_offset));
        let opt = std::array::from_fn(|k| AdamState::new(&params[k]));
        let mel_norm = self.mel_norm();
        self.discs.spec.norm = mel_norm;
        state.discriminators = Some(DiscState { params, opt, mel_norm });
    }

    fn sync_norm(&mut self, state: &TrainState) {
        if let Some(d) = &state.discriminators {
            self.discs.spec.norm = d.mel_norm;
        }
    }

    /// One generator update. Discriminators are read but never modified.
    pub fn train_step_generator(&mut self, state: &mut TrainState, stage: &StageConfig, batch: &Batch) -> Result<LossReport> {
        self.sync_norm(state);
        let bound = state.generator.bind();
        let x = Var::constant(batch.degraded.clone());
        let t = Var::constant(batch.target.clone());
        let out = self.generator.forward(&bound, &x, stage.use_postnet)?;
        let frozen;
        let adversary = if stage.use_adversarial {
            let d = state
                .discriminators
                .as_ref()
                .ok_or_else(|| Error::invalid("adversarial stage without discriminators"))?;
            frozen = [0, 1, 2, 3].map(|k| d.params[k].bind_frozen());
            Some(Adversary {
                discs: &self.discs,
                params: &frozen,
            })
        } else {
            None
        };
        let (loss, report) = generator_objective(&out, &t, adversary, &self.spec_loss, &self.cfg.losses)?;
        if !report.all_finite() {
            return Err(Error::NonFinite(format!(
                "generator loss at step {} (batch seed {}): {:?}",
                state.step, batch.seed, report
            )));
        }
        let mut grads = bound.grads(&backward(&loss));
        clip_global_norm(&mut grads, self.cfg.stages.clip_grad_norm);
        if !grads.all_finite() {
            return Err(Error::NonFinite(format!(
                "generator gradient at step {} (batch seed {})",
                state.step, batch.seed
            )));
        }
        state
            .gen_opt
            .step(&mut state.generator, &grads, stage.lr_generator, &self.cfg.stages.adam_generator)?;
        Ok(report)
    }

    fn fake(&self, generator: &Params, stage: &StageConfig, batch: &Batch) -> Result<(Var, Var)> {
        let x = Var::constant(batch.degraded.clone());
        let out = self.generator.forward(&generator.bind_frozen(), &x, stage.use_postnet)?;
        Ok((out.post_postnet, Var::constant(batch.target.clone())))
    }

    /// One update of each discriminator on its own hinge loss; the generator is frozen.
    pub fn train_step_discriminators(&mut self, state: &mut TrainState, stage: &StageConfig, batch: &Batch) -> Result<[f64; 4]> {
        self.sync_norm(state);
        let (fake, t) = self.fake(&state.generator, stage, batch)?;
        let d = state
            .discriminators
            .as_mut()
            .ok_or_else(|| Error::invalid("discriminator update before discriminators exist"))?;
        let bound = [0, 1, 2, 3].map(|k| d.params[k].bind());
        let (losses, values) = discriminator_objective(&fake, &t, &self.discs, &bound)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "discriminator loss {values:?} at step {} (batch seed {})",
                state.step, batch.seed
            )));
        }
        // The four losses share no parameters, so one backward pass serves all.
        let total = losses[0].add(&losses[1]).add(&losses[2]).add(&losses[3]);
        let g = backward(&total);
        for k in 0..4 {
            let mut grads = bound[k].grads(&g);
            clip_global_norm(&mut grads, self.cfg.stages.clip_grad_norm);
            if !grads.all_finite() {
                return Err(Error::NonFinite(format!(
                    "discriminator {k} gradient at step {} (batch seed {})",
                    state.step, batch.seed
                )));
            }
            d.opt[k].step(&mut d.params[k], &grads, stage.lr_discriminators, &self.cfg.stages.adam_discriminators)?;
        }
        state.disc_updates += 1;
        Ok(values)
    }

    /// Mean discriminator scores on `(real, fake)` for one batch.
    pub fn disc_scores(&mut self, state: &TrainState, stage: &StageConfig, batch: &Batch) -> Result<([f64; 4], [f64; 4])> {
        self.sync_norm(state);
        let (fake, t) = self.fake(&state.generator, stage, batch)?;
        let d = state
            .discriminators
            .as_ref()
            .ok_or_else(|| Error::invalid("no discriminators to score with"))?;
        let frozen = [0, 1, 2, 3].map(|k| d.params[k].bind_frozen());
        let real = self.discs.forward(&frozen, &t)?;
        let fake = self.discs.forward(&frozen, &fake)?;
        Ok((mean_scores(&real), mean_scores(&fake)))
    }

    /// One scheduled generator step, preceded by its discriminator updates.
    pub fn step(&mut self, state: &mut TrainState) -> Result<(StageConfig, LossReport)> {
        let stage = *self.schedule.stage_at(state.step);
        let mut d_losses = [0.0; 4];
        if stage.use_adversarial {
            if state.discriminators.is_none() {
                self.init_discriminators(state);
            }
            for j in 0..stage.disc_updates_per_gen_step {
                let b = self.source.batch(self.batch_seed(state.step, 1 + j), stage.use_augmentation)?;
                d_losses = self.train_step_discriminators(state, &stage, &b)?;
            }
        }
        let b = self.source.batch(self.batch_seed(state.step, 0), stage.use_augmentation)?;
        let mut report = self.train_step_generator(state, &stage, &b)?;
        report.d_losses = d_losses;
        state.step += 1;
        if state.loss_history.len() == LOSS_HISTORY_LEN {
            state.loss_history.pop_front();
        }
        state.loss_history.push_back(report.total_g);
        Ok((stage, report))
    }

    /// Spectrogram and sample losses of the refined output on the fixed validation pairs.
    pub fn validate(&self, generator: &Params) -> Result<Validation> {
        if self.val.is_empty() {
            return Err(Error::invalid("the validation split is empty"));
        }
        let (mut s, mut l) = (0.0, 0.0);
        for (x, t) in &self.val {
            let y = self.generator.enhance(generator, x)?.post_postnet;
            s += multires_spec_loss(&y, t)?;
            l += l1_sample_loss(&y, t)?;
        }
        let n = self.val.len() as f64;
        Ok(Validation {
            spec_loss: s / n,
            l1: l / n,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub resume: bool,
    /// Return after this many completed steps, as if killed.
    pub stop_after: Option<usize>,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: Option<PathBuf>,
    pub steps: usize,
    pub disc_updates: u64,
    /// False when `stop_after` ended the run early.
    pub completed: bool,
}

pub fn checkpoint_name(step: usize) -> String {
    format!("step_{step:08}")
}

fn append_line(path: &Path, v: &Value) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{v}").map_err(|e| Error::io(path, e))
}

/// Parse a JSON-lines log.
pub fn read_log(path: &Path) -> Result<Vec<Map<String, Value>>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line)? {
            Value::Object(m) => out.push(m),
            _ => return Err(Error::invalid(format!("{}: log line is not an object", path.display()))),
        }
    }
    Ok(out)
}

/// Keep only records with `step <= last`.
fn truncate_log(path: &Path, last: usize) -> Result<Vec<Map<String, Value>>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let keep: Vec<_> = read_log(path)?
        .into_iter()
        .filter(|m| m.get("step").and_then(Value::as_u64).is_some_and(|s| s as usize <= last))
        .collect();
    let mut text = String::new();
    for m in &keep {
        text.push_str(&serde_json::to_string(m)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(keep)
}

fn log_validation(out: &Path, step: usize, stage: u8, v: &Validation) -> Result<()> {
    append_line(
        &out.join(VALIDATION_LOG),
        &json!({"step": step, "stage": stage, "spec_loss": v.spec_loss, "l1": v.l1}),
    )
}

/// Run the configured stages under `out_dir`, resuming from the newest
/// checkpoint when `opts.resume` is set.
///
/// Writes `config.toml`, `train_log.jsonl` (one object per generator step),
/// `validation.jsonl`, `checkpoints/step_XXXXXXXX`, `best` and `final`.
pub fn run_schedule(cfg: &RunConfig, manifest: &Manifest, out_dir: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ckpt_root = out_dir.join("checkpoints");
    let cfg_path = out_dir.join("config.toml");
    let existing = checkpoint::list_checkpoints(&ckpt_root);
    let mut trainer = Trainer::new(cfg.clone(), manifest, opts.workers)?;
    let train_log = out_dir.join(TRAIN_LOG);
    let val_log = out_dir.join(VALIDATION_LOG);
    let mut best: Option<f64> = None;
    let mut state = match (opts.resume, existing.last()) {
        (true, Some((step, dir))) => {
            if cfg_path.exists() {
                let archived = RunConfig::load(&cfg_path)?;
                let diff = archived.differing_sections(cfg);
                if !diff.is_empty() {
                    return Err(Error::config(format!(
                        "cannot resume {}: configuration differs in {}",
                        out_dir.display(),
                        diff.join(", ")
                    )));
                }
            }
            let (state, _) = checkpoint::load(dir, cfg)?;
            log::info!("resuming from {} at step {step}", dir.display());
            truncate_log(&train_log, *step)?;
            for m in truncate_log(&val_log, *step)? {
                if let Some(v) = m.get("spec_loss").and_then(Value::as_f64) {
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                }
            }
            state
        }
        (false, Some(_)) => {
            return Err(Error::config(format!(
                "{} already holds checkpoints; pass resume or choose a fresh output directory",
                out_dir.display()
            )))
        }
        _ => {
            for p in [&train_log, &val_log] {
                if p.exists() {
                    fs::remove_file(p).map_err(|e| Error::io(p, e))?;
                }
            }
            trainer.init_state()
        }
    };
    fs::write(&cfg_path, cfg.to_toml_string()?).map_err(|e| Error::io(&cfg_path, e))?;

    let total = trainer.schedule().total_steps();
    let best_dir = out_dir.join("best");
    let consider = |state: &TrainState, stage: u8, v: Validation, best: &mut Option<f64>| -> Result<()> {
        log_validation(out_dir, state.step, stage, &v)?;
        if best.map_or(true, |b| v.spec_loss < b) {
            *best = Some(v.spec_loss);
            checkpoint::save(&best_dir, state, stage, cfg)?;
        }
        Ok(())
    };
    if state.step == 0 {
        let v = trainer.validate(&state.generator)?;
        consider(&state, trainer.schedule().stage_at(0).stage_id, v, &mut best)?;
    }

    let start = Instant::now();
    let mut stage_id = trainer.schedule().stage_at(state.step.saturating_sub(1)).stage_id;
    while state.step < total {
        if opts.stop_after.is_some_and(|s| state.step >= s) {
            return Ok(RunOutcome {
                final_checkpoint: existing_latest(&ckpt_root)?,
                best_checkpoint: best_dir.exists().then(|| best_dir.clone()),
                steps: state.step,
                disc_updates: state.disc_updates,
                completed: false,
            });
        }
        let (stage, report) = match trainer.step(&mut state) {
            Ok(r) => r,
            Err(Error::NonFinite(msg)) => {
                let dump = json!({
                    "step": state.step,
                    "stage": trainer.schedule().stage_at(state.step).stage_id,
                    "generator_batch_seed": trainer.batch_seed(state.step, 0),
                    "discriminator_batch_seeds": (1..=trainer.schedule().stage_at(state.step).disc_updates_per_gen_step)
                        .map(|j| trainer.batch_seed(state.step, j)).collect::<Vec<_>>(),
                    "error": msg,
                });
                let p = out_dir.join("nan_dump.json");
                fs::write(&p, serde_json::to_string_pretty(&dump)?).map_err(|e| Error::io(&p, e))?;
                return Err(Error::NonFinite(format!("{msg}; diagnostics in {}", p.display())));
            }
            Err(e) => return Err(e),
        };
        stage_id = stage.stage_id;
        let mut rec = report.to_record();
        rec.insert("step".into(), json!(state.step));
        rec.insert("stage".into(), json!(stage.stage_id));
        rec.insert("lr_generator".into(), json!(stage.lr_generator));
        rec.insert("lr_discriminators".into(), json!(if stage.use_adversarial { stage.lr_discriminators } else { 0.0 }));
        rec.insert("disc_updates".into(), json!(state.disc_updates));
        rec.insert("wall_time".into(), json!(start.elapsed().as_secs_f64()));
        append_line(&train_log, &Value::Object(rec))?;

        let boundary = trainer.schedule().is_boundary(state.step);
        if state.step % cfg.stages.validate_every == 0 || state.step == total {
            let v = trainer.validate(&state.generator)?;
            consider(&state, stage_id, v, &mut best)?;
        }
        if state.step % cfg.stages.checkpoint_every == 0 || boundary {
            checkpoint::save(&ckpt_root.join(checkpoint_name(state.step)), &state, stage_id, cfg)?;
        }
    }
    let final_dir = out_dir.join("final");
    checkpoint::save(&final_dir, &state, stage_id, cfg)?;
    Ok(RunOutcome {
        final_checkpoint: final_dir,
        best_checkpoint: best_dir.exists().then_some(best_dir),
        steps: state.step,
        disc_updates: state.disc_updates,
        completed: true,
    })
}

fn existing_latest(root: &Path) -> Result<PathBuf> {
    checkpoint::list_checkpoints(root)
        .pop()
        .map(|(_, p)| p)
        .ok_or_else(|| Error::Checkpoint(format!("no checkpoint under {}", root.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_arithmetic() {
        let cfg = RunConfig::toy();
        let s = Schedule::new(&cfg);
        assert_eq!(s.total_steps(), 1050);
        assert_eq!(s.stage_at(0).stage_id, 1);
        assert_eq!(s.stage_at(499).stage_id, 1);
        assert_eq!(s.stage_at(500).stage_id, 2);
        assert_eq!(s.stage_at(1000).stage_id, 3);
        assert_eq!(s.stage_at(5000).stage_id, 3);
        assert!(s.is_boundary(500) && s.is_boundary(1000) && s.is_boundary(1050) && !s.is_boundary(501));
    }

    #[test]
    fn mix_spreads_nearby_inputs() {
        assert_ne!(mix(0, 0), mix(0, 1));
        assert_ne!(mix(1, 0), mix(0, 1));
        assert_eq!(mix(7, 9), mix(7, 9));
    }
}
