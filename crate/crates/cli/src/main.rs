use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use enhance_core::config::{RunConfig, CONFIG_ENV};
use enhance_core::data::{
    held_out_spec, make_toy_dataset, sample_spec, simulate_pair, Manifest, Split, ToyCorpusConfig,
};
use enhance_core::enhance::enhance_audio;
use enhance_core::metrics::{evaluate_dataset, EvalOptions, MetricStat, PairMode, Summary};
use enhance_core::nn::Generator;
use enhance_core::plot::{bar_chart_svg, line_chart_svg};
use enhance_core::train::{checkpoint, mix, read_log, run_schedule, RunOptions};
use enhance_core::AudioBuffer;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser, Debug)]
#[command(name = "enhance", version, about = "Train, run and evaluate the waveform speech enhancer")]
struct Cli {
    /// Run configuration (TOML). Falls back to the environment variable, then to --preset.
    #[arg(long, global = true, env = CONFIG_ENV, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in configuration used when no file is given.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Full)]
    preset: Preset,
    /// Override the configuration seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for data simulation and evaluation.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    workers: usize,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Full-size networks and schedule.
    Full,
    /// Small networks for the synthetic corpus.
    Toy,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus (clean speech, impulse responses, noise) and its manifest.
    MakeToyDataset(ToyArgs),
    /// Write simulated (degraded, target) pairs for inspection.
    Simulate(SimulateArgs),
    /// Run the staged training schedule.
    Train(TrainArgs),
    /// Enhance one recording with a trained checkpoint.
    Enhance(EnhanceArgs),
    /// Score a manifest split with a checkpoint or the identity enhancer.
    Evaluate(EvaluateArgs),
    /// Draw SVG charts from training logs and evaluation summaries.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct ToyArgs {
    /// Number of utterances.
    #[arg(long, default_value_t = 50)]
    n_utterances: usize,
    /// Utterance duration in seconds.
    #[arg(long, default_value_t = 1.25)]
    utterance_seconds: f64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Corpus manifest; defaults to the configured one.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Split to draw from; val and test use the fixed held-out degradations.
    #[arg(long, default_value = "train")]
    split: Split,
    /// Number of pairs.
    #[arg(long, default_value_t = 4)]
    count: usize,
    /// Apply speed, gain, EQ, DRR and RT60 augmentation (train split only).
    #[arg(long)]
    augment: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Corpus manifest; defaults to the configured one.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Multiply every stage's step count by this factor.
    #[arg(long)]
    stage_scale: Option<f64>,
    /// Keep only these stages, e.g. `1,2`.
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<u8>>,
    /// Continue from the newest checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Debug)]
struct EnhanceArgs {
    /// Checkpoint directory.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input WAVE file (any rate, mono).
    #[arg(long)]
    input: PathBuf,
    /// Output WAVE file at the working rate.
    #[arg(long)]
    output: PathBuf,
    /// Write 16-bit PCM instead of 32-bit float.
    #[arg(long)]
    pcm16: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Enhance the clean recordings themselves.
    Clean,
    /// Enhance the fixed simulated degradation of each utterance.
    Simulated,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Checkpoint directory to evaluate.
    #[arg(long, conflicts_with = "identity", required_unless_present = "identity")]
    checkpoint: Option<PathBuf>,
    /// Evaluate the unprocessed input instead of a model.
    #[arg(long)]
    identity: bool,
    /// Corpus manifest; defaults to the configured one.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, value_enum, default_value_t = Mode::Simulated)]
    mode: Mode,
    /// Shell command printing a PESQ score, with {reference} and {degraded} placeholders.
    #[arg(long)]
    pesq_command: Option<String>,
    /// Also write one SVG bar chart per metric.
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Training logs (train_log.jsonl); one curve chart per loss key.
    #[arg(long = "log")]
    logs: Vec<PathBuf>,
    /// Evaluation summaries (summary.json); one bar chart per metric across runs.
    #[arg(long = "summary")]
    summaries: Vec<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => match cli.preset {
            Preset::Full => RunConfig::default(),
            Preset::Toy => RunConfig::toy(),
        },
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().context("this command needs --out DIR")
}

fn archive_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    fs::write(path, cfg.to_toml_string()?).with_context(|| format!("writing {}", path.display()))
}

fn manifest_for(cfg: &RunConfig, flag: &Option<PathBuf>) -> Result<(Manifest, PathBuf)> {
    let p = flag
        .clone()
        .or_else(|| cfg.data.manifest.clone())
        .context("no manifest: pass --manifest or set data.manifest in the configuration")?;
    Ok((Manifest::load(&p)?, p))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::MakeToyDataset(a) => {
            let out = out_dir(&cli)?;
            let toy = ToyCorpusConfig {
                n_utterances: a.n_utterances,
                utterance_s: a.utterance_seconds,
                ..Default::default()
            };
            let m = make_toy_dataset(out, cfg.seed, &toy)?;
            cfg.data.manifest = Some(m.clone());
            archive_config(&cfg, &out.join("config.toml"))?;
            println!("{}", m.display());
        }
        Command::Simulate(a) => {
            let out = out_dir(&cli)?;
            let (m, mp) = manifest_for(&cfg, &a.manifest)?;
            cfg.data.manifest = Some(mp);
            let sr = cfg.dsp.sample_rate_hz;
            let assets = m.load_assets(sr)?;
            let entries: Vec<_> = m.entries.iter().enumerate().filter(|(_, e)| e.split == a.split).collect();
            if entries.is_empty() {
                bail!("manifest has no {} utterances", a.split);
            }
            fs::create_dir_all(out)?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x51));
            for k in 0..a.count {
                let (idx, e) = entries[k % entries.len()];
                let spec = if a.split == Split::Train {
                    sample_spec(&mut rng, &cfg.data.augmentation, &assets.rir_ids(), &assets.noise_ids(), a.augment)?
                } else {
                    held_out_spec(e, idx, cfg.eval.pair_seed, &cfg.data.augmentation)
                };
                let (x, t) = simulate_pair(&m.load_clean(e, sr)?, &spec, &assets)?;
                x.write_wav_f32(out.join(format!("pair_{k:04}_degraded.wav")))?;
                t.write_wav_f32(out.join(format!("pair_{k:04}_target.wav")))?;
                let mut rec = Map::new();
                rec.insert("clean_path".into(), Value::from(e.clean_path.display().to_string()));
                rec.insert("spec".into(), serde_json::to_value(&spec)?);
                fs::write(out.join(format!("pair_{k:04}.json")), serde_json::to_string_pretty(&rec)?)?;
            }
            archive_config(&cfg, &out.join("config.toml"))?;
            println!("{} pairs in {}", a.count, out.display());
        }
        Command::Train(a) => {
            let out = out_dir(&cli)?;
            if let Some(s) = a.stage_scale {
                cfg.stages.stage_scale = s;
            }
            if let Some(keep) = &a.stages {
                cfg.stages.schedule.retain(|s| keep.contains(&s.stage_id));
            }
            let (m, mp) = manifest_for(&cfg, &a.manifest)?;
            cfg.data.manifest = Some(mp);
            cfg.validate()?;
            let o = run_schedule(
                &cfg,
                &m,
                out,
                &RunOptions {
                    resume: a.resume,
                    stop_after: None,
                    workers: cli.workers,
                },
            )?;
            println!("{}", o.final_checkpoint.display());
        }
        Command::Enhance(a) => {
            let (ck, params) = checkpoint::load_generator(&a.checkpoint)?;
            let g = Generator::new(ck.generator.clone())?;
            let x = AudioBuffer::read_wav(&a.input)?;
            let y = enhance_audio(&ck, &g, &params, &x)?;
            if let Some(d) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(d)?;
            }
            if a.pcm16 {
                y.write_wav_pcm16(&a.output)?;
            } else {
                y.write_wav_f32(&a.output)?;
            }
            archive_config(&ck, &a.output.with_extension("config.toml"))?;
        }
        Command::Evaluate(a) => {
            let out = out_dir(&cli)?;
            let (m, mp) = manifest_for(&cfg, &a.manifest)?;
            cfg.data.manifest = Some(mp);
            let model = match &a.checkpoint {
                Some(dir) => {
                    let (ck, params) = checkpoint::load_generator(dir)?;
                    let g = Generator::new(ck.generator.clone())?;
                    cfg.generator = ck.generator.clone();
                    cfg.eval.chunk_len = ck.eval.chunk_len;
                    cfg.eval.chunk_overlap = ck.eval.chunk_overlap;
                    Some((g, params))
                }
                None => None,
            };
            let opts = EvalOptions {
                mode: match a.mode {
                    Mode::Clean => PairMode::Clean,
                    Mode::Simulated => PairMode::Simulated {
                        seed: cfg.eval.pair_seed,
                        augmentation: cfg.data.augmentation.clone(),
                    },
                },
                pesq_command: a.pesq_command.clone().or_else(|| cfg.eval.pesq_command.clone()),
                workers: cli.workers,
                sample_rate_hz: cfg.dsp.sample_rate_hz,
            };
            archive_config(&cfg, &out.join("config.toml"))?;
            let ev = evaluate_dataset(
                &m,
                a.split,
                |x: &AudioBuffer| match &model {
                    Some((g, p)) => enhance_audio(&cfg, g, p, x),
                    None => Ok(x.clone()),
                },
                &opts,
                out,
            )?;
            if a.plot {
                let labels: Vec<String> = ev.rows.iter().map(|r| r.utterance_id.clone()).collect();
                for (name, f) in [
                    ("stoi", (|r| r.stoi) as fn(&enhance_core::metrics::MetricRow) -> f64),
                    ("fwssnr_db", |r| r.fwssnr_db),
                    ("srmr", |r| r.srmr),
                ] {
                    let v: Vec<f64> = ev.rows.iter().map(f).collect();
                    fs::write(out.join(format!("{name}.svg")), bar_chart_svg(name, &labels, &v))?;
                }
            }
            for (k, s) in &ev.summary {
                println!("{k}\t{:.4}\t(std {:.4}, n {})", s.mean, s.std, s.n);
            }
        }
        Command::Plot(a) => {
            let out = out_dir(&cli)?;
            if a.logs.is_empty() && a.summaries.is_empty() {
                bail!("nothing to plot: pass --log and/or --summary");
            }
            fs::create_dir_all(out)?;
            plot_logs(&a.logs, out)?;
            plot_summaries(&a.summaries, out)?;
            println!("charts in {}", out.display());
        }
    }
    Ok(())
}

fn run_label(p: &Path) -> String {
    p.parent()
        .and_then(|d| d.file_name())
        .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn plot_logs(logs: &[PathBuf], out: &Path) -> Result<()> {
    if logs.is_empty() {
        return Ok(());
    }
    let keys = ["total_g", "l1_post", "spec_post"];
    let mut runs = Vec::new();
    for p in logs {
        runs.push((run_label(p), read_log(p).with_context(|| format!("reading {}", p.display()))?));
    }
    for key in keys {
        let series: Vec<(String, Vec<(f64, f64)>)> = runs
            .iter()
            .map(|(label, recs)| {
                let pts = recs
                    .iter()
                    .filter_map(|m| Some((m.get("step")?.as_f64()?, m.get(key)?.as_f64()?)))
                    .collect();
                (label.clone(), pts)
            })
            .collect();
        fs::write(out.join(format!("curve_{key}.svg")), line_chart_svg(key, &series, true))?;
    }
    Ok(())
}

fn plot_summaries(paths: &[PathBuf], out: &Path) -> Result<()> {
    if paths.is_empty() {
        return Ok(());
    }
    let mut runs: Vec<(String, Summary)> = Vec::new();
    for p in paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        runs.push((run_label(p), serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?));
    }
    let mut metrics: Vec<&String> = runs.iter().flat_map(|(_, s)| s.keys()).collect();
    metrics.sort();
    metrics.dedup();
    for m in metrics {
        let labels: Vec<String> = runs.iter().map(|r| r.0.clone()).collect();
        let values: Vec<f64> = runs
            .iter()
            .map(|(_, s)| s.get(m).map_or(f64::NAN, |x: &MetricStat| x.mean))
            .collect();
        fs::write(out.join(format!("bar_{m}.svg")), bar_chart_svg(m, &labels, &values))?;
    }
    Ok(())
}
