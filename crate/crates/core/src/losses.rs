//! Training objectives and their weighted combination.
//!
//! Scalar functions operate on single buffers and are the reference forms.
//! The `*_var` functions build the same quantities on the autograd tape for
//! `[batch, 1, time]` tensors, averaging per-example values over the batch.

use std::rc::Rc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::audio::AudioBuffer;
use crate::autograd::Var;
use crate::dsp::{log_spectrogram, SpectrogramConfig, StftPlan, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::nn::{Bound, DiscriminatorSet, FeatureMapStack, GeneratorVars, VerdictVars, DISC_NAMES};

/// Shortest input accepted by the spectrogram loss.
pub const MIN_SPEC_LOSS_LEN: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub w_l1: f64,
    pub w_spec: f64,
    pub w_adv: f64,
    pub w_fm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_l1: 100.0,
            w_spec: 1.0,
            w_adv: 1.0,
            w_fm: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_l1, self.w_spec, self.w_adv, self.w_fm];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(format!("loss weights must be finite and non-negative, got {w:?}")));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::config("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

/// Itemized losses of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub l1_pre: f64,
    pub l1_post: f64,
    pub spec_pre: f64,
    pub spec_post: f64,
    pub adv_per_disc: [f64; 4],
    pub fm_per_disc: [f64; 4],
    pub total_g: f64,
    pub d_losses: [f64; 4],
}

impl LossReport {
    /// The generator objective from the itemized terms, in the order the graph uses.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        let mut t = (self.l1_pre + self.l1_post) * w.w_l1 + (self.spec_pre + self.spec_post) * w.w_spec;
        t += sum4(&self.adv_per_disc) * w.w_adv;
        t += sum4(&self.fm_per_disc) * w.w_fm;
        t
    }

    /// Flat key/value record for the training log.
    pub fn to_record(&self) -> Map<String, Value> {
        let mut m = Map::new();
        for (k, v) in self.fields() {
            m.insert(k, Value::from(v));
        }
        m
    }

    pub fn from_record(m: &Map<String, Value>) -> Result<Self> {
        let get = |k: &str| {
            m.get(k)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::invalid(format!("loss record lacks numeric `{k}`")))
        };
        let mut r = LossReport {
            l1_pre: get("l1_pre")?,
            l1_post: get("l1_post")?,
            spec_pre: get("spec_pre")?,
            spec_post: get("spec_post")?,
            total_g: get("total_g")?,
            ..Default::default()
        };
        for (i, name) in DISC_NAMES.iter().enumerate() {
            r.adv_per_disc[i] = get(&format!("adv_{name}"))?;
            r.fm_per_disc[i] = get(&format!("fm_{name}"))?;
            r.d_losses[i] = get(&format!("d_loss_{name}"))?;
        }
        Ok(r)
    }

    pub fn fields(&self) -> Vec<(String, f64)> {
        let mut f = vec![
            ("l1_pre".to_string(), self.l1_pre),
            ("l1_post".to_string(), self.l1_post),
            ("spec_pre".to_string(), self.spec_pre),
            ("spec_post".to_string(), self.spec_post),
        ];
        for (i, name) in DISC_NAMES.iter().enumerate() {
            f.push((format!("adv_{name}"), self.adv_per_disc[i]));
        }
        for (i, name) in DISC_NAMES.iter().enumerate() {
            f.push((format!("fm_{name}"), self.fm_per_disc[i]));
        }
        f.push(("total_g".to_string(), self.total_g));
        for (i, name) in DISC_NAMES.iter().enumerate() {
            f.push((format!("d_loss_{name}"), self.d_losses[i]));
        }
        f
    }

    pub fn all_finite(&self) -> bool {
        self.fields().iter().all(|(_, v)| v.is_finite())
    }
}

impl Serialize for LossReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LossReport {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = Map::deserialize(d)?;
        LossReport::from_record(&m).map_err(serde::de::Error::custom)
    }
}

fn sum4(v: &[f64; 4]) -> f64 {
    ((v[0] + v[1]) + v[2]) + v[3]
}

fn same_len(y: &AudioBuffer, t: &AudioBuffer) -> Result<()> {
    if y.len() != t.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", y.len(), t.len())));
    }
    Ok(())
}

/// Mean absolute sample difference.
pub fn l1_sample_loss(y: &AudioBuffer, t: &AudioBuffer) -> Result<f64> {
    same_len(y, t)?;
    let s: f64 = y.samples().iter().zip(t.samples()).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / y.len() as f64)
}

/// The two spectrogram geometries, equally weighted.
pub fn spec_loss_resolutions() -> [SpectrogramConfig; 2] {
    [SpectrogramConfig::large(), SpectrogramConfig::small()]
}

/// `0.5·MSE` of log magnitudes at (2048, 512) plus `0.5·MSE` at (512, 128).
pub fn multires_spec_loss(y: &AudioBuffer, t: &AudioBuffer) -> Result<f64> {
    same_len(y, t)?;
    if y.len() < MIN_SPEC_LOSS_LEN {
        return Err(Error::invalid(format!(
            "spectrogram loss needs at least {MIN_SPEC_LOSS_LEN} samples, got {}",
            y.len()
        )));
    }
    let mut total = 0.0;
    for cfg in spec_loss_resolutions() {
        let a = log_spectrogram(y, &cfg, LOG_FLOOR)?;
        let b = log_spectrogram(t, &cfg, LOG_FLOOR)?;
        let mse = a.data.iter().zip(&b.data).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.data.len() as f64;
        total += 0.5 * mse;
    }
    Ok(total)
}

pub fn hinge_g(score_fake: f64) -> f64 {
    (1.0 - score_fake).max(0.0)
}

pub fn hinge_d(score_fake: f64, score_real: f64) -> f64 {
    (1.0 + score_fake).max(0.0) + (1.0 - score_real).max(0.0)
}

/// Sum over layers of the per-unit mean absolute difference.
pub fn feature_match(f_fake: &FeatureMapStack, f_real: &FeatureMapStack) -> Result<f64> {
    if f_fake.layers.len() != f_real.layers.len() {
        return Err(Error::invalid(format!(
            "feature stacks have {} and {} layers",
            f_fake.layers.len(),
            f_real.layers.len()
        )));
    }
    let mut total = 0.0;
    for (i, (a, b)) in f_fake.layers.iter().zip(&f_real.layers).enumerate() {
        if a.shape() != b.shape() {
            return Err(Error::invalid(format!(
                "feature layer {i} shapes differ: {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        if a.numel() == 0 {
            continue;
        }
        let l1: f64 = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).sum();
        total += l1 / a.numel() as f64;
    }
    Ok(total)
}

/// Graph form of the spectrogram loss with cached plans.
#[derive(Debug, Clone)]
pub struct SpecLoss {
    plans: [Rc<StftPlan>; 2],
}

impl SpecLoss {
    pub fn new() -> Result<Self> {
        let [a, b] = spec_loss_resolutions();
        Ok(Self {
            plans: [Rc::new(StftPlan::new(a)?), Rc::new(StftPlan::new(b)?)],
        })
    }

    /// Batch-mean loss for `[batch, 1, time]` tensors.
    pub fn var(&self, y: &Var, t: &Var) -> Result<Var> {
        check_pair(y, t)?;
        let (b, len) = (y.shape()[0], y.shape()[2]);
        if len < MIN_SPEC_LOSS_LEN {
            return Err(Error::invalid(format!(
                "spectrogram loss needs at least {MIN_SPEC_LOSS_LEN} samples, got {len}"
            )));
        }
        let (y2, t2) = (y.reshape(&[b, len]), t.reshape(&[b, len]));
        let mut total: Option<Var> = None;
        for plan in &self.plans {
            let ly = y2.stft_magnitude(plan.clone()).add_scalar(LOG_FLOOR).ln();
            let lt = t2.stft_magnitude(plan.clone()).add_scalar(LOG_FLOOR).ln();
            let term = ly.sub(&lt).square().mean().scale(0.5);
            total = Some(match total {
                None => term,
                Some(acc) => acc.add(&term),
            });
        }
        Ok(total.expect("two resolutions"))
    }
}

fn check_pair(y: &Var, t: &Var) -> Result<()> {
    if y.shape() != t.shape() || y.shape().len() != 3 || y.shape()[1] != 1 {
        return Err(Error::invalid(format!(
            "expected matching [batch, 1, time] tensors, got {:?} and {:?}",
            y.shape(),
            t.shape()
        )));
    }
    Ok(())
}

pub fn l1_var(y: &Var, t: &Var) -> Result<Var> {
    check_pair(y, t)?;
    Ok(y.sub(t).abs().mean())
}

/// Batch mean of `max(1 − s, 0)`.
pub fn hinge_g_var(score_fake: &Var) -> Var {
    score_fake.scale(-1.0).add_scalar(1.0).relu().mean()
}

/// Batch mean of `max(1 + fake, 0) + max(1 − real, 0)`.
pub fn hinge_d_var(score_fake: &Var, score_real: &Var) -> Var {
    let f = score_fake.add_scalar(1.0).relu().mean();
    let r = score_real.scale(-1.0).add_scalar(1.0).relu().mean();
    f.add(&r)
}

/// Batched feature matching: the per-layer mean over all elements equals the
/// batch average of per-example `L1 / N_i`.
pub fn feature_match_var(fake: &[Var], real: &[Var]) -> Result<Var> {
    if fake.len() != real.len() || fake.is_empty() {
        return Err(Error::invalid(format!("feature stacks have {} and {} layers", fake.len(), real.len())));
    }
    let mut total: Option<Var> = None;
    for (i, (a, b)) in fake.iter().zip(real).enumerate() {
        if a.shape() != b.shape() {
            return Err(Error::invalid(format!(
                "feature layer {i} shapes differ: {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let term = a.sub(b).abs().mean();
        total = Some(match total {
            None => term,
            Some(acc) => acc.add(&term),
        });
    }
    Ok(total.expect("non-empty"))
}

/// Discriminators and their bound parameters for the adversarial terms.
pub struct Adversary<'a> {
    pub discs: &'a DiscriminatorSet,
    pub params: &'a [Bound; 4],
}

fn acc(total: Var, term: Var) -> Var {
    total.add(&term)
}

/// Generator objective and its itemization.
///
/// Adversarial and feature-matching terms use the post-postnet output only and
/// are skipped entirely when `adversary` is `None` (reported as 0).
pub fn generator_objective(
    out: &GeneratorVars,
    target: &Var,
    adversary: Option<Adversary<'_>>,
    spec: &SpecLoss,
    w: &LossWeights,
) -> Result<(Var, LossReport)> {
    let l1_pre = l1_var(&out.pre_postnet, target)?;
    let l1_post = l1_var(&out.post_postnet, target)?;
    let spec_pre = spec.var(&out.pre_postnet, target)?;
    let spec_post = if out.pre_postnet.id() == out.post_postnet.id() {
        spec_pre.clone()
    } else {
        spec.var(&out.post_postnet, target)?
    };
    let mut report = LossReport {
        l1_pre: l1_pre.item(),
        l1_post: l1_post.item(),
        spec_pre: spec_pre.item(),
        spec_post: spec_post.item(),
        ..Default::default()
    };
    let mut total = l1_pre.add(&l1_post).scale(w.w_l1).add(&spec_pre.add(&spec_post).scale(w.w_spec));
    if let Some(adv) = adversary {
        let fake = adv.discs.forward(adv.params, &out.post_postnet)?;
        let real = adv.discs.forward(adv.params, &target.detach())?;
        let adv_terms: Vec<Var> = fake.iter().map(|v| hinge_g_var(&v.score)).collect();
        let fm_terms: Vec<Var> = fake
            .iter()
            .zip(real.iter())
            .map(|(f, r)| {
                let rf: Vec<Var> = r.features.iter().map(Var::detach).collect();
                feature_match_var(&f.features, &rf)
            })
            .collect::<Result<_>>()?;
        for k in 0..4 {
            report.adv_per_disc[k] = adv_terms[k].item();
            report.fm_per_disc[k] = fm_terms[k].item();
        }
        let sum = |t: &[Var]| t[0].add(&t[1]).add(&t[2]).add(&t[3]);
        total = acc(total, sum(&adv_terms).scale(w.w_adv));
        total = acc(total, sum(&fm_terms).scale(w.w_fm));
    } else {
        // Mirror the graph's float operations so `weighted_total` stays exact.
        total = acc(total, Var::constant(crate::autograd::Tensor::scalar(0.0 * w.w_adv)));
        total = acc(total, Var::constant(crate::autograd::Tensor::scalar(0.0 * w.w_fm)));
    }
    report.total_g = total.item();
    Ok((total, report))
}

/// Per-discriminator hinge losses with the generator output as a constant.
pub fn discriminator_objective(
    fake: &Var,
    target: &Var,
    discs: &DiscriminatorSet,
    params: &[Bound; 4],
) -> Result<([Var; 4], [f64; 4])> {
    check_pair(fake, target)?;
    let f = discs.forward(params, &fake.detach())?;
    let r = discs.forward(params, &target.detach())?;
    let losses: [Var; 4] = std::array::from_fn(|k| hinge_d_var(&f[k].score, &r[k].score));
    let values = std::array::from_fn(|k| losses[k].item());
    Ok((losses, values))
}

/// Mean scores on fake and real input, per discriminator.
pub fn mean_scores(v: &[VerdictVars; 4]) -> [f64; 4] {
    std::array::from_fn(|k| v[k].score.value().data().iter().sum::<f64>() / v[k].score.value().numel() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;

    fn buf(v: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(v, 16000).unwrap()
    }

    fn stack(layers: Vec<(Vec<usize>, Vec<f64>)>) -> FeatureMapStack {
        FeatureMapStack {
            layers: layers.into_iter().map(|(s, d)| Tensor::new(s, d)).collect(),
        }
    }

    #[test]
    fn small_examples() {
        assert_eq!(l1_sample_loss(&buf(vec![0.0, 1.0]), &buf(vec![0.0, 0.0])).unwrap(), 0.5);
        assert!(l1_sample_loss(&buf(vec![0.0, 1.0]), &buf(vec![0.0])).is_err());
        assert_eq!(hinge_g(1.0), 0.0);
        assert_eq!(hinge_g(-1.0), 2.0);
        assert_eq!(hinge_g(3.0), 0.0);
        assert!((hinge_d(-0.5, 0.7) - 0.8).abs() < 1e-15);
        assert_eq!(hinge_d(-1.0, 1.0), 0.0);
        assert_eq!(hinge_d(0.0, 0.0), 2.0);
        let a = stack(vec![(vec![1, 2], vec![1.0, 2.0])]);
        let b = stack(vec![(vec![1, 2], vec![1.0, 4.0])]);
        assert_eq!(feature_match(&a, &b).unwrap(), 1.0);
        assert_eq!(feature_match(&a, &a).unwrap(), 0.0);
        let c = stack(vec![(vec![1, 3], vec![1.0, 2.0, 3.0])]);
        assert!(feature_match(&a, &c).is_err());
    }

    #[test]
    fn spec_loss_identity_and_silence() {
        let y = buf((0..600).map(|i| (i as f64 * 0.1).sin()).collect());
        assert_eq!(multires_spec_loss(&y, &y).unwrap(), 0.0);
        let z = buf(vec![0.0; 600]);
        assert_eq!(multires_spec_loss(&z, &z).unwrap(), 0.0);
        assert!(multires_spec_loss(&buf(vec![0.0; 511]), &buf(vec![0.0; 511])).is_err());
    }

    #[test]
    fn graph_forms_match_scalar_forms() {
        let y: Vec<f64> = (0..1500).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) * 0.3).collect();
        let t: Vec<f64> = (0..1500).map(|i| (i as f64 * 0.03).sin() * 0.4).collect();
        let yv = Var::constant(Tensor::new(vec![1, 1, 1500], y.clone()));
        let tv = Var::constant(Tensor::new(vec![1, 1, 1500], t.clone()));
        let spec = SpecLoss::new().unwrap();
        let a = spec.var(&yv, &tv).unwrap().item();
        let b = multires_spec_loss(&buf(y.clone()), &buf(t.clone())).unwrap();
        assert!((a - b).abs() <= 1e-12 * b.abs());
        let a = l1_var(&yv, &tv).unwrap().item();
        let b = l1_sample_loss(&buf(y), &buf(t)).unwrap();
        assert!((a - b).abs() <= 1e-15);
        let s = Var::constant(Tensor::new(vec![3], vec![-0.5, 0.2, 2.0]));
        let r = Var::constant(Tensor::new(vec![3], vec![0.7, -2.0, 1.5]));
        let want = (hinge_g(-0.5) + hinge_g(0.2) + hinge_g(2.0)) / 3.0;
        assert!((hinge_g_var(&s).item() - want).abs() < 1e-15);
        let want = (hinge_d(-0.5, 0.7) + hinge_d(0.2, -2.0) + hinge_d(2.0, 1.5)) / 3.0;
        assert!((hinge_d_var(&s, &r).item() - want).abs() < 1e-15);
    }

    #[test]
    fn batched_feature_match_averages_examples() {
        // Two layers of shape [2, 1, 2]; example b owns elements 2b and 2b+1.
        let fa = [vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0, 1.0]];
        let fr = [vec![1.0, 1.0, 0.0, 0.0], vec![0.5, -1.0, 2.0, 3.0]];
        let mk = |d: &Vec<f64>| Var::constant(Tensor::new(vec![2, 1, 2], d.clone()));
        let got = feature_match_var(&[mk(&fa[0]), mk(&fa[1])], &[mk(&fr[0]), mk(&fr[1])]).unwrap().item();
        let per_example = |b: usize| {
            let layer = |l: usize| {
                let x = stack(vec![(vec![1, 1, 2], fa[l][2 * b..2 * b + 2].to_vec())]);
                let y = stack(vec![(vec![1, 1, 2], fr[l][2 * b..2 * b + 2].to_vec())]);
                feature_match(&x, &y).unwrap()
            };
            layer(0) + layer(1)
        };
        assert!((got - (per_example(0) + per_example(1)) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn report_record_round_trip() {
        let r = LossReport {
            l1_pre: 1.0,
            l1_post: 2.0,
            spec_pre: 3.0,
            spec_post: 4.0,
            adv_per_disc: [5.0, 6.0, 7.0, 8.0],
            fm_per_disc: [9.0, 10.0, 11.0, 12.0],
            total_g: 13.0,
            d_losses: [14.0, 15.0, 16.0, 17.0],
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"adv_wave_disc_8k\":6.0"));
        let back: LossReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert!(LossWeights { w_l1: 0.0, w_spec: 0.0, w_adv: 0.0, w_fm: 0.0 }.validate().is_err());
        assert!(LossWeights { w_l1: -1.0, ..Default::default() }.validate().is_err());
    }
}
