use std::path::Path;
use std::process::{Command, Output};

fn enhance(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_enhance"))
        .args(args)
        .env_remove("ENHANCE_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "enhance {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn every_subcommand_has_help() {
    let top = String::from_utf8(enhance(&["--help"]).stdout).unwrap();
    for sub in ["make-toy-dataset", "simulate", "train", "enhance", "evaluate", "plot"] {
        assert!(top.contains(sub), "{sub} missing from top-level help");
        let h = String::from_utf8(enhance(&[sub, "--help"]).stdout).unwrap();
        assert!(h.contains("--out") && h.contains("--seed"), "{sub} help lacks global flags");
    }
}

#[test]
fn missing_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_enhance"))
        .args(["enhance", "--checkpoint", p(&dir.path().join("none")), "--input", "x.wav", "--output", "y.wav"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn toy_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    let manifest = String::from_utf8(
        enhance(&["--preset", "toy", "--out", p(&data), "make-toy-dataset", "--n-utterances", "10"]).stdout,
    )
    .unwrap();
    let manifest = manifest.trim();
    assert!(Path::new(manifest).exists());
    assert!(data.join("config.toml").exists());

    let sim = d.join("sim");
    enhance(&["--preset", "toy", "--out", p(&sim), "simulate", "--manifest", manifest, "--count", "2", "--augment"]);
    for f in ["pair_0001_degraded.wav", "pair_0001_target.wav", "pair_0001.json", "config.toml"] {
        assert!(sim.join(f).exists(), "{f}");
    }

    // Two generator steps in stages 1 and 2 and one in stage 3, which keeps its 2:1 discriminator updates.
    let run = d.join("run");
    let common = ["--preset", "toy", "--out", p(&run), "train", "--manifest", manifest];
    enhance(&[&common[..], &["--stage-scale", "4e-6"]].concat());
    let log = std::fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[4].contains("\"disc_updates\":2"), "{}", lines[4]);
    // Resuming a finished run is a no-op that still succeeds.
    enhance(&[&common[..], &["--stage-scale", "4e-6", "--resume"]].concat());
    assert_eq!(std::fs::read_to_string(run.join("train_log.jsonl")).unwrap(), log);

    let wav = d.join("enhanced/out.wav");
    let input = sim.join("pair_0000_degraded.wav");
    enhance(&["enhance", "--checkpoint", p(&run.join("final")), "--input", p(&input), "--output", p(&wav)]);
    assert!(wav.exists());
    assert!(d.join("enhanced/out.config.toml").exists());

    let ev = d.join("eval");
    let stdout = String::from_utf8(
        enhance(&[
            "--preset", "toy", "--out", p(&ev), "evaluate", "--checkpoint", p(&run.join("final")), "--manifest",
            manifest, "--split", "test", "--plot",
        ])
        .stdout,
    )
    .unwrap();
    assert!(stdout.contains("stoi"), "{stdout}");
    assert!(ev.join("summary.json").exists());
    assert!(ev.join("stoi.svg").exists());

    let idn = d.join("identity");
    enhance(&["--preset", "toy", "--out", p(&idn), "evaluate", "--identity", "--manifest", manifest]);

    let charts = d.join("charts");
    enhance(&[
        "--out",
        p(&charts),
        "plot",
        "--log",
        p(&run.join("train_log.jsonl")),
        "--summary",
        p(&ev.join("summary.json")),
        "--summary",
        p(&idn.join("summary.json")),
    ]);
    assert!(charts.join("curve_total_g.svg").exists());
    assert!(charts.join("bar_stoi.svg").exists());
}
