use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::{CliError, CliResult};

const LOCK_FILE: &str = ".echoloop.lock";

/// Exclusive handle on the artifact directory. Records every file written
/// and the wall time of each stage for the run manifest.
pub struct Workspace {
    root: PathBuf,
    lock: PathBuf,
    outputs: Vec<String>,
    stages: Vec<StageTiming>,
    current: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_hash: &'a str,
    pub seeds: &'a serde_json::Value,
    pub stages: &'a [StageTiming],
    pub outputs: &'a [String],
}

impl Workspace {
    pub fn open(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(echoloop::Error::from)?;
        let lock = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(CliError::Locked(root.to_path_buf(), lock));
            }
            Err(e) => return Err(echoloop::Error::from(e).into()),
        }
        Ok(Self {
            root: root.to_path_buf(),
            lock,
            outputs: Vec::new(),
            stages: Vec::new(),
            current: None,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Path of an input artifact produced by `stage`, or an error naming it.
    pub fn require(&self, name: &str, stage: &str) -> CliResult<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(echoloop::Error::MissingArtifact(format!(
                "{} not found; run `echoloop {stage}` first",
                p.display()
            ))
            .into())
        }
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let mut f = File::create(self.path(name)).map_err(echoloop::Error::from)?;
        f.write_all(bytes).map_err(echoloop::Error::from)?;
        self.record(name);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(echoloop::Error::from)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Marks a file written by other means as an output.
    pub fn record(&mut self, name: &str) {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> CliResult<T>) -> CliResult<T> {
        self.current = Some(name.to_string());
        let start = Instant::now();
        let out = f(self)?;
        self.stages.push(StageTiming {
            stage: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        self.current = None;
        Ok(out)
    }

    pub fn failed_stage(&self) -> Option<&str> {
        self.current.as_deref()
    }

    pub fn completed_stages(&self) -> Vec<String> {
        self.stages.iter().map(|s| s.stage.clone()).collect()
    }

    pub fn finish(mut self, command: &str, config_hash: &str, seeds: &serde_json::Value) -> CliResult<()> {
        let name = format!("manifest_{command}.json");
        self.record(&name);
        let manifest = RunManifest {
            tool: "echoloop",
            version: echoloop::VERSION,
            command,
            config_hash,
            seeds,
            stages: &self.stages,
            outputs: &self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(echoloop::Error::from)?;
        text.push('\n');
        fs::write(self.path(&name), text).map_err(echoloop::Error::from)?;
        Ok(())
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}
