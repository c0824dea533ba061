//! Run directories, CSV files and the manifest sidecar.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    status: &'a str,
    config_hash: &'a str,
    seed_offset: u64,
    threads: usize,
    rwre_version: &'a str,
    started_unix: u64,
    wall_time_s: f64,
    files: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

/// SHA-256 over the experiment name, the seed offset and the config bytes.
pub fn config_hash(experiment: &str, seed_offset: u64, raw: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(experiment.as_bytes());
    h.update([0]);
    h.update(seed_offset.to_le_bytes());
    h.update(raw);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// An output directory that is never reused.
pub struct RunDir {
    pub path: PathBuf,
    experiment: String,
    hash: String,
    seed_offset: u64,
    threads: usize,
    started: Instant,
    started_unix: u64,
    files: Vec<String>,
}

impl RunDir {
    /// Creates `<root>/<experiment>-<unix time>-<hash prefix>`, adding a
    /// numeric suffix if that name is taken.
    pub fn create(
        root: &Path,
        experiment: &str,
        hash: &str,
        seed_offset: u64,
        threads: usize,
    ) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let stem = format!("{experiment}-{started_unix}-{}", &hash[..12]);
        let mut suffix = 0u32;
        let path = loop {
            let name = if suffix == 0 {
                stem.clone()
            } else {
                format!("{stem}-{suffix}")
            };
            let candidate = root.join(name);
            match fs::create_dir(&candidate) {
                Ok(()) => break candidate,
                Err(e) if e.kind() == ErrorKind::AlreadyExists => suffix += 1,
                Err(e) => {
                    return Err(e).with_context(|| format!("creating {}", candidate.display()))
                }
            }
        };
        let run = Self {
            path,
            experiment: experiment.to_string(),
            hash: hash.to_string(),
            seed_offset,
            threads,
            started: Instant::now(),
            started_unix,
            files: Vec::new(),
        };
        run.write_manifest("incomplete", None)?;
        Ok(run)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.path.join(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_manifest(&self, status: &str, error: Option<&str>) -> Result<()> {
        let m = Manifest {
            experiment: &self.experiment,
            status,
            config_hash: &self.hash,
            seed_offset: self.seed_offset,
            threads: self.threads,
            rwre_version: env!("CARGO_PKG_VERSION"),
            started_unix: self.started_unix,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            files: &self.files,
            error,
        };
        let text = toml::to_string(&m).context("serialising manifest")?;
        fs::write(self.path.join(MANIFEST), text).context("writing manifest")
    }

    pub fn complete(self) -> Result<PathBuf> {
        self.write_manifest("complete", None)?;
        Ok(self.path)
    }

    /// Leaves the manifest marked incomplete with the error recorded.
    pub fn abandon(self, error: &str) -> Result<PathBuf> {
        self.write_manifest("incomplete", Some(error))?;
        Ok(self.path)
    }
}

/// Rows joined with `'\n'`, header first, trailing newline included.
pub fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}
