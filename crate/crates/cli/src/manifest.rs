//! `manifest.json`: what produced an output directory and what it holds.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub preset: Option<String>,
    /// Config file given on the command line, if any.
    pub config_path: Option<PathBuf>,
    /// Input directories (checkpoints, compared runs).
    pub inputs: Vec<PathBuf>,
    pub started: String,
    pub finished: String,
    /// Every file under the output directory except this manifest, relative
    /// and sorted.
    pub files: Vec<String>,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn version() -> String {
    env!("FEEDER_MARL_VERSION").to_string()
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("walk stays under root");
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            if rel != MANIFEST_FILE {
                out.push(rel);
            }
        }
    }
    Ok(())
}

/// Lists `out_dir`, stamps the finish time and writes the manifest.
pub fn finish(mut m: RunManifest, out_dir: &Path) -> anyhow::Result<RunManifest> {
    let mut files = Vec::new();
    walk(out_dir, out_dir, &mut files).with_context(|| format!("cannot list {}", out_dir.display()))?;
    files.sort();
    m.files = files;
    m.finished = now();
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(m)
}
