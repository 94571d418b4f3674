//! Artifact directory plumbing: config hashing, stamped writers, the lock
//! file and the content-addressed cache.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use synprobe::tensors::sha256_hex;

use crate::config::PipelineConfig;
use crate::CliError;

/// Identity embedded in every emitted file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    pub fn csv_comment(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

#[derive(Serialize)]
struct HashView<'a> {
    seed: u64,
    probes: &'a [synprobe::probes::Family],
    layers: &'a Option<Vec<usize>>,
    subtract_embeddings: bool,
    granularities: &'a [synprobe::stats::Granularity],
    aggregation: synprobe::stats::Aggregation,
    phenomena: &'a Option<Vec<synprobe::outcomes::Phenomenon>>,
    training: Vec<(String, synprobe::probes::TrainConfig)>,
    inputs: Vec<String>,
}

pub fn file_hash(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of the settings and input contents; file locations and the output
/// directory do not enter it.
pub fn config_hash(cfg: &PipelineConfig) -> Result<String, CliError> {
    let inputs = cfg.input_paths().into_iter().map(file_hash).collect::<Result<Vec<_>, _>>()?;
    let training = cfg
        .probes
        .iter()
        .map(|&f| Ok((f.to_string(), cfg.train_config(f)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let view = HashView {
        seed: cfg.seed,
        probes: &cfg.probes,
        layers: &cfg.layers,
        subtract_embeddings: cfg.subtract_embeddings,
        granularities: &cfg.granularities,
        aggregation: cfg.aggregation,
        phenomena: &cfg.phenomena,
        training,
        inputs,
    };
    Ok(sha256_hex(&serde_json::to_vec(&view).expect("hash view serializes")))
}

/// Hex SHA-256 over a sequence of labelled parts.
pub fn content_key(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(path, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Writes CSV text behind a stamp comment line.
pub fn write_csv(path: &Path, stamp: &Stamp, body: &str) -> Result<(), CliError> {
    write_bytes(path, format!("{}{body}", stamp.csv_comment()).as_bytes())
}

#[derive(Serialize)]
struct Stamped<'a, T> {
    config_hash: &'a str,
    seed: u64,
    data: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, stamp: &Stamp, data: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(&Stamped {
        config_hash: &stamp.config_hash,
        seed: stamp.seed,
        data,
    })
    .expect("artifact serializes");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Reads the `data` member of a file written by [`write_json`].
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))?;
    serde_json::from_value(v["data"].take()).map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))
}

/// Exclusive ownership of an artifact directory, released on drop.
#[derive(Debug)]
pub struct ArtifactLock {
    path: PathBuf,
}

impl ArtifactLock {
    pub const FILE: &'static str = ".synprobe.lock";

    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(Self::FILE);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                CliError::Validation(format!("artifact directory {} is locked by another run", dir.display()))
            } else {
                CliError::io(&path, e)
            }
        })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(ArtifactLock { path })
    }
}

impl Drop for ArtifactLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Files under `output/cache`, named by content key.
#[derive(Clone, Debug)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(output: &Path) -> Self {
        Cache { dir: output.join("cache") }
    }

    pub fn path(&self, key: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{key}.{ext}"))
    }

    pub fn get(&self, key: &str, ext: &str) -> Option<PathBuf> {
        let p = self.path(key, ext);
        p.is_file().then_some(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = ArtifactLock::acquire(dir.path()).unwrap();
        assert!(matches!(ArtifactLock::acquire(dir.path()), Err(CliError::Validation(_))));
        drop(a);
        assert!(ArtifactLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn content_keys_separate_parts() {
        assert_ne!(content_key(&["ab", "c"]), content_key(&["a", "bc"]));
        assert_eq!(content_key(&["x"]), content_key(&["x"]));
    }

    #[test]
    fn json_round_trip_keeps_stamp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.json");
        let stamp = Stamp { config_hash: "abc".into(), seed: 3 };
        write_json(&p, &stamp, &vec![1, 2]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"config_hash\": \"abc\"") && text.contains("\"seed\": 3"));
        assert_eq!(read_json::<Vec<i32>>(&p).unwrap(), vec![1, 2]);
    }
}
