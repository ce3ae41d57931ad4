//! Reproducibility manifests and the no-silent-overwrite rule.
//!
//! Every command writes `provenance.txt` next to its artifacts: the command,
//! the code version, the config hash, hashes of its inputs and the SHA-256 of
//! every artifact. `digest` hashes all of that, so two runs agree exactly when
//! their digests do. Nothing time-dependent goes into the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use cass_core::kv::KvDoc;
use cass_core::CassError;

use crate::config::sha256_hex;
use crate::error::{CliError, Result};

pub const PROVENANCE: &str = "provenance.txt";
pub const FORMAT_TAG: &str = "cass-provenance-v1";
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CassError::io(path, e).into()
}

/// `(relative path, sha256)` of every file below `dir`, sorted by path.
/// `skip` names files (relative to `dir`) to leave out.
pub fn hash_tree(dir: &Path, skip: &[&str]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(io(&d))? {
            let path = entry.map_err(io(&d))?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path
                .strip_prefix(dir)
                .expect("walk stays below its root")
                .to_string_lossy()
                .replace('\\', "/");
            if skip.contains(&rel.as_str()) {
                continue;
            }
            let bytes = fs::read(&path).map_err(io(&path))?;
            out.push((rel, sha256_hex(&bytes)));
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<(String, String)>,
    pub artifacts: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(command: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            ..Self::default()
        }
    }

    pub fn input(mut self, name: &str, value: impl Into<String>) -> Self {
        self.inputs.push((name.to_string(), value.into()));
        self
    }

    fn body(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("format", FORMAT_TAG);
        doc.set("command", &self.command);
        doc.set("code_version", CODE_VERSION);
        doc.set("config_hash", &self.config_hash);
        doc.set("seed", self.seed);
        for (name, value) in &self.inputs {
            doc.set(format!("input.{name}"), value);
        }
        doc.set("artifacts", self.artifacts.len());
        for (i, (path, hash)) in self.artifacts.iter().enumerate() {
            doc.set(format!("artifact.{i:04}.path"), path);
            doc.set(format!("artifact.{i:04}.sha256"), hash);
        }
        doc
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.body().to_string().as_bytes())
    }

    /// Hashes everything in `dir` and writes the manifest there.
    pub fn write(mut self, dir: &Path) -> Result<String> {
        self.artifacts = hash_tree(dir, &[PROVENANCE])?;
        let digest = self.digest();
        let mut doc = self.body();
        doc.set("digest", &digest);
        doc.write(&dir.join(PROVENANCE))?;
        Ok(digest)
    }
}

impl Provenance {
    /// Like [`write`](Self::write) but hashes only the named files or
    /// directories below `dir`.
    pub fn write_selected(mut self, dir: &Path, roots: &[&str]) -> Result<String> {
        let mut artifacts = Vec::new();
        for root in roots {
            let path = dir.join(root);
            if path.is_dir() {
                for (rel, hash) in hash_tree(&path, &[])? {
                    artifacts.push((format!("{root}/{rel}"), hash));
                }
            } else if path.is_file() {
                let bytes = fs::read(&path).map_err(io(&path))?;
                artifacts.push((root.to_string(), sha256_hex(&bytes)));
            }
        }
        artifacts.sort();
        self.artifacts = artifacts;
        let digest = self.digest();
        let mut doc = self.body();
        doc.set("digest", &digest);
        doc.write(&dir.join(PROVENANCE))?;
        Ok(digest)
    }
}

/// The `digest` recorded in `dir/provenance.txt`.
pub fn read_digest(dir: &Path) -> Result<String> {
    let doc = KvDoc::read(&dir.join(PROVENANCE))?;
    Ok(doc.require("digest")?.to_string())
}

/// A fresh sibling directory to build artifacts in before [`publish`].
pub fn staging_dir(dest: &Path) -> Result<PathBuf> {
    let name = dest
        .file_name()
        .ok_or_else(|| CliError::usage(format!("invalid output directory {}", dest.display())))?
        .to_string_lossy();
    let staging = dest.with_file_name(format!(".{name}.staging"));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io(&staging))?;
    }
    fs::create_dir_all(&staging).map_err(io(&staging))?;
    Ok(staging)
}

/// Moves `staging` to `dest`. If `dest` already exists it must hold exactly
/// the same files; then the staging copy is discarded and `false` returned.
/// Differing contents are an error, never an overwrite.
pub fn publish(staging: &Path, dest: &Path) -> Result<bool> {
    if dest.exists() {
        let same = hash_tree(dest, &[])? == hash_tree(staging, &[])?;
        fs::remove_dir_all(staging).map_err(io(staging))?;
        return if same {
            Ok(false)
        } else {
            Err(CliError::data(format!(
                "{} already exists with different contents; refusing to overwrite it (remove it or change --out)",
                dest.display()
            )))
        };
    }
    if let Some(parent) = dest.parent() {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::rename(staging, dest).map_err(io(dest))?;
    Ok(true)
}
