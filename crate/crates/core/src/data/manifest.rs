use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sim::Assets;
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}` (train, val, test)"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// One manifest line. Paths are relative to the manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub clean_path: PathBuf,
    #[serde(default)]
    pub rir_path: Option<PathBuf>,
    #[serde(default)]
    pub noise_path: Option<PathBuf>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Parse a JSON-lines manifest and check that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ManifestEntry = serde_json::from_str(line)
                .map_err(|e| Error::invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
            entries.push(e);
        }
        let m = Manifest {
            root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            entries,
        };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<()> {
        let mut missing = Vec::new();
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            for p in std::iter::once(&e.clean_path).chain(e.rir_path.iter()).chain(e.noise_path.iter()) {
                let full = self.resolve(p);
                if !full.is_file() && seen.insert(full.clone()) {
                    missing.push(full);
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingFiles(missing));
        }
        let mut split_of: BTreeMap<&Path, Split> = BTreeMap::new();
        for e in &self.entries {
            if let Some(prev) = split_of.insert(&e.clean_path, e.split) {
                if prev != e.split {
                    return Err(Error::invalid(format!(
                        "{} appears in both {prev} and {} splits",
                        e.clean_path.display(),
                        e.split
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, s: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == s).collect()
    }

    /// Load every impulse response and noise referenced by the manifest,
    /// keyed by their manifest paths.
    pub fn load_assets(&self, sample_rate_hz: u32) -> Result<Assets> {
        let mut a = Assets::default();
        for e in &self.entries {
            if let Some(p) = &e.rir_path {
                let key = p.display().to_string();
                if !a.rirs.contains_key(&key) {
                    a.rirs.insert(key, AudioBuffer::read_wav_at(self.resolve(p), sample_rate_hz)?);
                }
            }
            if let Some(p) = &e.noise_path {
                let key = p.display().to_string();
                if !a.noises.contains_key(&key) {
                    a.noises.insert(key, AudioBuffer::read_wav_at(self.resolve(p), sample_rate_hz)?);
                }
            }
        }
        Ok(a)
    }

    pub fn load_clean(&self, e: &ManifestEntry, sample_rate_hz: u32) -> Result<AudioBuffer> {
        AudioBuffer::read_wav_at(self.resolve(&e.clean_path), sample_rate_hz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_files_are_itemized() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        fs::write(
            &p,
            "{\"clean_path\":\"a.wav\",\"split\":\"train\"}\n{\"clean_path\":\"b.wav\",\"noise_path\":\"n.wav\",\"split\":\"test\"}\n",
        )
        .unwrap();
        match Manifest::load(&p) {
            Err(Error::MissingFiles(v)) => assert_eq!(v.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_leakage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        AudioBuffer::zeros(10, 16000).unwrap().write_wav_f32(dir.path().join("a.wav")).unwrap();
        let p = dir.path().join("m.jsonl");
        fs::write(
            &p,
            "{\"clean_path\":\"a.wav\",\"split\":\"train\"}\n{\"clean_path\":\"a.wav\",\"split\":\"test\"}\n",
        )
        .unwrap();
        assert!(matches!(Manifest::load(&p), Err(Error::InvalidInput(_))));
        assert!("dev".parse::<Split>().is_err());
    }
}
