//! Objective quality metrics and the dataset evaluation harness.

pub mod fwssnr;
pub mod srmr;
pub mod stoi;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fwssnr::{fw_ssnr, FWSSNR_MAX_DB, FWSSNR_MIN_DB};
pub use srmr::srmr_simplified;
pub use stoi::stoi;

use crate::audio::AudioBuffer;
use crate::data::{held_out_spec, simulate_pair, AugmentationConfig, Manifest, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub utterance_id: String,
    pub stoi: f64,
    pub fwssnr_db: f64,
    pub srmr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pesq: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MetricStat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self { mean, std: var.sqrt(), n }
    }
}

/// Metric name to statistics; `pesq` appears only when an external scorer ran.
pub type Summary = BTreeMap<String, MetricStat>;

pub fn summarize(rows: &[MetricRow]) -> Summary {
    let mut s = Summary::new();
    let col = |f: fn(&MetricRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    s.insert("stoi".into(), MetricStat::of(&col(|r| r.stoi)));
    s.insert("fwssnr_db".into(), MetricStat::of(&col(|r| r.fwssnr_db)));
    s.insert("srmr".into(), MetricStat::of(&col(|r| r.srmr)));
    let pesq: Vec<f64> = rows.iter().filter_map(|r| r.pesq).collect();
    if !pesq.is_empty() {
        s.insert("pesq".into(), MetricStat::of(&pesq));
    }
    s
}

/// Which input each utterance is enhanced from.
#[derive(Debug, Clone, PartialEq)]
pub enum PairMode {
    /// The clean recording itself.
    Clean,
    /// A fixed simulated degradation per utterance.
    Simulated { seed: u64, augmentation: AugmentationConfig },
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub mode: PairMode,
    /// Shell command with `{reference}` and `{degraded}` placeholders printing a PESQ score.
    pub pesq_command: Option<String>,
    pub workers: usize,
    pub sample_rate_hz: u32,
}

/// Score every intrusive and non-intrusive metric for one utterance.
pub fn score(utterance_id: &str, enhanced: &AudioBuffer, reference: &AudioBuffer) -> Result<MetricRow> {
    Ok(MetricRow {
        utterance_id: utterance_id.to_string(),
        stoi: stoi(enhanced, reference)?,
        fwssnr_db: fw_ssnr(enhanced, reference)?,
        srmr: srmr_simplified(enhanced)?,
        pesq: None,
    })
}

/// Last real number printed by the external scorer.
pub fn parse_last_number(text: &str) -> Option<f64> {
    text.split(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == 'e' || c == 'E' || c == '+'))
        .filter_map(|t| t.parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .last()
}

fn run_pesq(template: &str, reference: &AudioBuffer, degraded: &AudioBuffer, tmp: &Path, tag: &str) -> Result<f64> {
    fs::create_dir_all(tmp).map_err(|e| Error::io(tmp, e))?;
    let r = tmp.join(format!("{tag}_ref.wav"));
    let d = tmp.join(format!("{tag}_deg.wav"));
    reference.write_wav_pcm16(&r)?;
    degraded.write_wav_pcm16(&d)?;
    let cmd = template
        .replace("{reference}", &r.display().to_string())
        .replace("{degraded}", &d.display().to_string());
    let out = Command::new("sh").arg("-c").arg(&cmd).output().map_err(|e| Error::io(tmp, e))?;
    let _ = fs::remove_file(&r);
    let _ = fs::remove_file(&d);
    if !out.status.success() {
        return Err(Error::invalid(format!("PESQ command `{cmd}` failed with {}", out.status)));
    }
    parse_last_number(&String::from_utf8_lossy(&out.stdout))
        .ok_or_else(|| Error::invalid(format!("PESQ command `{cmd}` printed no number")))
}

/// Evaluation result and where it was written.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rows: Vec<MetricRow>,
    pub summary: Summary,
    pub table_path: PathBuf,
    pub summary_path: PathBuf,
}

pub fn write_table(rows: &[MetricRow], path: &Path) -> Result<()> {
    let with_pesq = rows.iter().any(|r| r.pesq.is_some());
    let mut out = String::from("utterance_id\tstoi\tfwssnr_db\tsrmr");
    if with_pesq {
        out.push_str("\tpesq");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{}\t{:.6}\t{:.6}\t{:.6}", r.utterance_id, r.stoi, r.fwssnr_db, r.srmr));
        if with_pesq {
            out.push_str(&r.pesq.map_or("\t".to_string(), |p| format!("\t{p:.6}")));
        }
        out.push('\n');
    }
    let s = summarize(rows);
    out.push_str(&format!(
        "mean\t{:.6}\t{:.6}\t{:.6}",
        s["stoi"].mean, s["fwssnr_db"].mean, s["srmr"].mean
    ));
    if let Some(p) = s.get("pesq") {
        out.push_str(&format!("\t{:.6}", p.mean));
    }
    out.push('\n');
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Enhance and score every utterance of a split.
///
/// Files are written as `metrics.tsv` and `summary.json` under `out_dir`.
/// If any utterance fails, the others are still written and the failures are
/// returned as an error.
pub fn evaluate_dataset<F>(manifest: &Manifest, split: Split, enhancer: F, opts: &EvalOptions, out_dir: &Path) -> Result<Evaluation>
where
    F: Fn(&AudioBuffer) -> Result<AudioBuffer> + Sync,
{
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let sr = opts.sample_rate_hz;
    let assets = match opts.mode {
        PairMode::Clean => Default::default(),
        PairMode::Simulated { .. } => manifest.load_assets(sr)?,
    };
    let jobs: Vec<(usize, &crate::data::ManifestEntry)> = manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.split == split)
        .collect();
    if jobs.is_empty() {
        return Err(Error::invalid(format!("manifest has no {split} utterances")));
    }
    let tmp = out_dir.join("pesq_tmp");
    let one = |(idx, e): &(usize, &crate::data::ManifestEntry)| -> Result<MetricRow> {
        let id = e.clean_path.display().to_string();
        let clean = manifest.load_clean(e, sr)?;
        let (input, reference) = match &opts.mode {
            PairMode::Clean => (clean.clone(), clean),
            PairMode::Simulated { seed, augmentation } => {
                simulate_pair(&clean, &held_out_spec(e, *idx, *seed, augmentation), &assets)?
            }
        };
        let enhanced = enhancer(&input)?;
        if enhanced.len() != reference.len() {
            return Err(Error::invalid(format!(
                "{id}: enhancer returned {} samples for {}",
                enhanced.len(),
                reference.len()
            )));
        }
        let mut row = score(&id, &enhanced, &reference)?;
        if let Some(t) = &opts.pesq_command {
            row.pesq = Some(run_pesq(t, &reference, &enhanced, &tmp, &format!("u{idx}"))?);
        }
        Ok(row)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    let results: Vec<Result<MetricRow>> = pool.install(|| jobs.par_iter().map(one).collect());
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for ((_, e), r) in jobs.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(err) => failures.push(format!("{}: {err}", e.clean_path.display())),
        }
    }
    let table_path = out_dir.join("metrics.tsv");
    let summary_path = out_dir.join("summary.json");
    let summary = summarize(&rows);
    write_table(&rows, &table_path)?;
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&summary_path, e))?;
    let _ = fs::remove_dir(&tmp);
    if !failures.is_empty() {
        return Err(Error::invalid(format!(
            "{} of {} utterances failed:\n{}",
            failures.len(),
            jobs.len(),
            failures.join("\n")
        )));
    }
    Ok(Evaluation {
        rows,
        summary,
        table_path,
        summary_path,
    })
}
