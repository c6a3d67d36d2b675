use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const FORMAT: &str = "navmap-run/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub command: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Index of everything a run directory contains, keyed by relative path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    /// Resolved configuration of the most recent command.
    pub config: serde_json::Value,
    pub artifacts: BTreeMap<String, Artifact>,
}

fn sha256_file(path: &Path) -> anyhow::Result<(String, u64)> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok((format!("{digest:x}"), bytes.len() as u64))
}

fn walk(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Adds `paths` (files, or directories walked recursively) to the manifest.
/// Entries under a re-recorded directory are replaced wholesale.
pub fn record(
    run_dir: &Path,
    seed: u64,
    config: &impl Serialize,
    command: &str,
    paths: &[&Path],
) -> anyhow::Result<()> {
    let file = run_dir.join(MANIFEST_FILE);
    let mut m = match fs::read_to_string(&file) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => Manifest { format: FORMAT.into(), seed, config: serde_json::Value::Null, artifacts: BTreeMap::new() },
    };
    m.seed = seed;
    m.config = serde_json::to_value(config)?;
    for &p in paths {
        let rel_root = p.strip_prefix(run_dir).unwrap_or(p).to_string_lossy().replace('\\', "/");
        let mut files = Vec::new();
        if p.is_dir() {
            m.artifacts.retain(|k, _| !k.starts_with(&format!("{rel_root}/")));
            walk(p, &mut files)?;
        } else {
            files.push(p.to_path_buf());
        }
        for f in files {
            let rel = f.strip_prefix(run_dir).unwrap_or(&f).to_string_lossy().replace('\\', "/");
            let (sha256, bytes) = sha256_file(&f)?;
            m.artifacts.insert(rel, Artifact { command: command.into(), sha256, bytes });
        }
    }
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    fs::write(file, text)?;
    Ok(())
}
