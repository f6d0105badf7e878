//! Output directory handling: atomic writes, CSV formatting and the manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reals in CSV: 17 significant digits, `.` decimal, no locale.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

/// `;`-joined reals (keeps list-valued cells free of the field separator).
pub fn reals(v: &[f64]) -> String {
    v.iter().map(|x| real(*x)).collect::<Vec<_>>().join(";")
}

pub fn ints(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

/// Active sets as `{1 3 4}{2}` per layer, layers separated by `/`.
pub fn active_sets(sets: &[Vec<Vec<usize>>]) -> String {
    sets.iter()
        .map(|layer| layer.iter().map(|s| format!("{{{}}}", s.iter().map(usize::to_string).collect::<Vec<_>>().join(" "))).collect::<String>())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub struct OutDir {
    root: PathBuf,
    artifacts: Vec<(String, String, usize)>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)?;
        Ok(OutDir { root: root.to_path_buf(), artifacts: Vec::new() })
    }

    /// Write via a temporary sibling and rename, so readers never see partial files.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(&self.root.join(name), bytes)?;
        self.artifacts.retain(|(n, _, _)| n != name);
        self.artifacts.push((name.to_string(), hex_sha256(bytes), bytes.len()));
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn finish(self, manifest: Manifest) -> CliResult<()> {
        let artifacts: Vec<_> = self
            .artifacts
            .iter()
            .map(|(name, sha, bytes)| json!({"file": name, "sha256": sha, "bytes": bytes}))
            .collect();
        let doc = json!({
            "tool": "deepgp-lab",
            "version": env!("CARGO_PKG_VERSION"),
            "command": manifest.command,
            "config_sha256": manifest.config_sha256,
            "seed": manifest.seed,
            "threads": manifest.threads,
            "artifacts": artifacts,
            "started_unix": manifest.started,
            "finished_unix": now_unix(),
        });
        let mut bytes = serde_json::to_vec_pretty(&doc)?;
        bytes.push(b'\n');
        write_atomic(&self.root.join("manifest.json"), &bytes)
    }
}

pub struct Manifest {
    pub command: String,
    pub config_sha256: Option<String>,
    pub seed: u64,
    pub threads: usize,
    pub started: f64,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
