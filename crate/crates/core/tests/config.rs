use enhance_core::config::RunConfig;
use std::path::Path;

fn shipped(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn shipped_files_match_presets() {
    assert_eq!(shipped("full.toml"), RunConfig::default());
    assert_eq!(shipped("toy.toml"), RunConfig::toy());
}

#[test]
fn unknown_keys_are_rejected() {
    let text = RunConfig::toy().to_toml_string().unwrap().replace("seed = 0", "seed = 0\nsed = 1");
    assert!(RunConfig::from_toml_str(&text).is_err());
}

#[test]
fn relative_manifest_resolves_against_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::toy();
    c.data.manifest = Some("data/manifest.json".into());
    let p = dir.path().join("run.toml");
    std::fs::write(&p, c.to_toml_string().unwrap()).unwrap();
    assert_eq!(RunConfig::load(&p).unwrap().data.manifest, Some(dir.path().join("data/manifest.json")));
}
