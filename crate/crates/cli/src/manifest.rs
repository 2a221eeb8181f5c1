//! One JSON record per command run: what went in, what came out, how long it took.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use ideation_core::store::digest_bytes;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub flags: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub started_at_ms: u64,
    pub wall_secs: f64,
    /// Seconds per named phase, in the order they ran.
    pub timings: Vec<(String, f64)>,
}

pub struct Recorder {
    manifest: RunManifest,
    started: Instant,
    phase: Option<(String, Instant)>,
}

impl Recorder {
    pub fn new(command: &str, flags: &impl Serialize) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION"),
                flags: serde_json::to_value(flags).unwrap_or(serde_json::Value::Null),
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_at_ms: ideation_core::clock::now_ms(),
                wall_secs: 0.0,
                timings: Vec::new(),
            },
            started: Instant::now(),
            phase: None,
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.input_bytes(path, &bytes);
        Ok(())
    }

    /// For inputs the command has already read into memory.
    pub fn input_bytes(&mut self, path: &Path, bytes: &[u8]) {
        self.manifest.inputs.push(InputDigest {
            path: path.to_path_buf(),
            bytes: bytes.len() as u64,
            sha256: digest_bytes(bytes),
        });
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.to_path_buf());
    }

    /// Writes `contents` to `path` and records it as an output.
    pub fn write(&mut self, path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.output(path);
        Ok(())
    }

    /// Ends the current phase, if any, and starts timing `name`.
    pub fn phase(&mut self, name: &str) {
        self.end_phase();
        self.phase = Some((name.to_string(), Instant::now()));
    }

    fn end_phase(&mut self) {
        if let Some((name, t)) = self.phase.take() {
            self.manifest.timings.push((name, t.elapsed().as_secs_f64()));
        }
    }

    /// Writes the manifest to `path` (when given) and returns it.
    pub fn finish(mut self, path: Option<&Path>) -> Result<(RunManifest, Option<PathBuf>)> {
        self.end_phase();
        self.manifest.wall_secs = self.started.elapsed().as_secs_f64();
        let Some(path) = path else {
            return Ok((self.manifest, None));
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok((self.manifest, Some(path.to_path_buf())))
    }
}

/// `model.isp` -> `model.isp.manifest.json`.
pub fn beside(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    primary.with_file_name(name)
}
