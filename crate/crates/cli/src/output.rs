//! Staged output directories and content hashes.
//!
//! Everything is written under a hidden sibling directory and moved into
//! place only once the whole run has succeeded, so a failed run leaves no
//! partial outputs behind.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{output_io, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

pub struct Staging {
    target: PathBuf,
    dir: PathBuf,
    files: Vec<String>,
    committed: bool,
}

impl Staging {
    pub fn new(target: &Path) -> CliResult<Self> {
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)
            .map_err(output_io(format!("cannot create {}", parent.display())))?;
        let dir = parent.join(format!(".{name}.staging-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)
                .map_err(output_io(format!("cannot clear {}", dir.display())))?;
        }
        fs::create_dir(&dir).map_err(output_io(format!("cannot create {}", dir.display())))?;
        Ok(Self {
            target: target.to_path_buf(),
            dir,
            files: Vec::new(),
            committed: false,
        })
    }

    /// Path for the output `rel` inside the staging area; records it for
    /// the manifest.
    pub fn file(&mut self, rel: &str) -> CliResult<PathBuf> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(output_io(format!("cannot create {}", parent.display())))?;
        }
        self.files.push(rel.to_string());
        Ok(path)
    }

    pub fn write(&mut self, rel: &str, contents: &[u8]) -> CliResult<()> {
        let path = self.file(rel)?;
        fs::write(&path, contents).map_err(output_io(format!("cannot write {}", path.display())))
    }

    /// `sha256  name` lines for every recorded output, sorted by name.
    pub fn hashes(&self) -> CliResult<Vec<(String, String)>> {
        let mut names = self.files.clone();
        names.sort();
        names.dedup();
        names
            .into_iter()
            .map(|n| {
                let h = sha256_file(&self.dir.join(&n))
                    .map_err(output_io(format!("cannot hash {n}")))?;
                Ok((n, h))
            })
            .collect()
    }

    pub fn commit(mut self) -> CliResult<PathBuf> {
        let target = self.target.clone();
        let err = |e| output_io(format!("cannot move outputs into {}", target.display()))(e);
        let empty_target = fs::read_dir(&target)
            .map(|mut d| d.next().is_none())
            .unwrap_or(false);
        if empty_target {
            fs::remove_dir(&target).map_err(err)?;
        }
        if !target.exists() {
            fs::rename(&self.dir, &target).map_err(err)?;
        } else {
            for rel in &self.files {
                let dst = target.join(rel);
                if let Some(parent) = dst.parent() {
                    fs::create_dir_all(parent).map_err(err)?;
                }
                fs::rename(self.dir.join(rel), &dst).map_err(err)?;
            }
            fs::remove_dir_all(&self.dir).map_err(err)?;
        }
        self.committed = true;
        Ok(target)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

/// Writes a single file through a temporary sibling and renames it into
/// place.
pub fn write_atomically(path: &Path, write: impl FnOnce(&Path) -> CliResult<()>) -> CliResult<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)
        .map_err(output_io(format!("cannot create {}", parent.display())))?;
    let tmp = parent.join(format!(".partial-{}-{name}", std::process::id()));
    match write(&tmp) {
        Ok(()) => {
            fs::rename(&tmp, path).map_err(output_io(format!("cannot write {}", path.display())))
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}
