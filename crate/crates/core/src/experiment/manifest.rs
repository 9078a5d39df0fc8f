use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::trainer::GOldStrategy;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Checkpoint directories relative to the run directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointIndex {
    pub generator: Vec<String>,
    pub discriminator: Vec<String>,
    pub g_old: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub deterministic: bool,
    pub g_old_strategy: GOldStrategy,
    /// False until the command finished without error.
    pub complete: bool,
    pub error: Option<String>,
    pub stages: Vec<StageTiming>,
    pub checkpoints: CheckpointIndex,
    /// Report and table files relative to the run directory.
    pub reports: Vec<String>,
    /// Content hashes of the models the run produced, by name.
    pub hashes: IndexMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        RunManifest {
            command: command.into(),
            config: config.clone(),
            seed: config.seed,
            deterministic: config.deterministic,
            g_old_strategy: config.g_old(),
            complete: false,
            error: None,
            stages: Vec::new(),
            checkpoints: CheckpointIndex::default(),
            reports: Vec::new(),
            hashes: IndexMap::new(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes via a temporary file so readers never see a torn manifest.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(
            &dir.join(MANIFEST_FILE),
            &serde_json::to_string_pretty(self)?,
        )
    }
}

pub(crate) fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Exclusive ownership of a run directory for the life of the value.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    Error::arg(format!(
                        "run directory {} is in use (remove {LOCK_FILE} if stale)",
                        dir.display()
                    ))
                } else {
                    Error::io(&path, e)
                }
            })?;
        writeln!(file, "{}", std::process::id()).map_err(|e| Error::io(&path, e))?;
        Ok(RunLock { path })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// An open run directory: lock, manifest, and stage timing.
pub struct Run {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    _lock: RunLock,
}

impl Run {
    /// Locks `dir`, writes the resolved config and an incomplete manifest.
    pub fn open(dir: &Path, command: &str, config: &ExperimentConfig) -> Result<Self> {
        let lock = RunLock::acquire(dir)?;
        write_atomic(&dir.join(CONFIG_FILE), &config.to_json_string()?)?;
        let run = Run {
            dir: dir.to_path_buf(),
            manifest: RunManifest::new(command, config),
            _lock: lock,
        };
        run.save()?;
        Ok(run)
    }

    pub fn save(&self) -> Result<()> {
        self.manifest.write(&self.dir)
    }

    pub fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned()
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Runs one stage, records its wall-clock time and persists the manifest.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        log::info!("{name}");
        let out = f(self)?;
        self.manifest.stages.push(StageTiming {
            stage: name.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        self.save()?;
        Ok(out)
    }

    /// Marks the manifest complete, or records the error and leaves it
    /// incomplete.
    pub fn finish<T>(mut self, result: Result<T>) -> Result<(T, RunManifest)> {
        match &result {
            Ok(_) => self.manifest.complete = true,
            Err(e) => self.manifest.error = Some(e.to_string()),
        }
        self.save()?;
        Ok((result?, self.manifest.clone()))
    }
}
