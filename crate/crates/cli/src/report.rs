//! Run reports and the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use vortex_core::io::write_atomic;
use vortex_core::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Everything a subcommand reports. Numbers under `results` are deterministic
/// for a given config; wall-clock times live apart in `timings`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub flags: BTreeMap<String, bool>,
    pub results: BTreeMap<String, Value>,
    pub files: Vec<String>,
    pub timings: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunReport {
    pub fn new(command: &str, seed: u64) -> RunReport {
        RunReport { command: command.into(), seed, ..RunReport::default() }
    }

    /// Run one named stage, recording its status and duration.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut RunReport) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self);
        self.timings.insert(name.into(), start.elapsed().as_secs_f64());
        let (status, message) = match &out {
            Ok(_) => (StageStatus::Ok, None),
            Err(e) => (StageStatus::Failed, Some(format!("{e:#}"))),
        };
        self.stages.push(Stage { name: name.into(), status, message });
        out
    }

    pub fn flag(&mut self, name: &str, value: bool) {
        self.flags.insert(name.into(), value);
    }

    pub fn result(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("report values serialize");
        self.results.insert(name.into(), v);
    }

    pub fn all_flags_pass(&self) -> bool {
        self.flags.values().all(|v| *v)
    }

    /// 0 when every flag holds, 1 when a check failed, 2 when a stage aborted.
    pub fn exit_code(&self) -> i32 {
        if self.error.is_some() {
            2
        } else if self.all_flags_pass() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Output directory that remembers what it wrote.
pub struct Output {
    dir: PathBuf,
    written: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Output> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, contents.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.into());
        }
        Ok(())
    }

    pub fn field(&mut self, name: &str, field: &Field) -> Result<()> {
        let mut buf = Vec::new();
        field.write_vfd(&mut buf)?;
        self.text(name, std::str::from_utf8(&buf).expect("vfd is ASCII"))
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}
