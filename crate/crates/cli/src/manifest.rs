use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Self-describing record of one run, written last.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// The effective configuration, after command-line overrides.
    pub config: String,
    pub threads: Option<usize>,
    pub phases: Vec<Phase>,
    pub exit_status: i32,
    pub files: Vec<FileEntry>,
}

/// Output directory plus the bookkeeping that ends up in the manifest.
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
    phases: Vec<Phase>,
}

impl RunDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            files: Vec::new(),
            phases: Vec::new(),
        })
    }

    /// Writes `name` through `f` and records it for the inventory.
    pub fn write<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        write_atomic(&self.root.join(name), &buf)?;
        if !self.files.iter().any(|n| n == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn timed<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.phases.push(Phase {
            name: name.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn finish(self, command: &str, config: String, threads: Option<usize>, exit_status: i32) -> Result<(), CliError> {
        let mut files = Vec::new();
        for name in &self.files {
            let data = fs::read(self.root.join(name))?;
            files.push(FileEntry {
                name: name.clone(),
                bytes: data.len() as u64,
                sha256: hex::encode(Sha256::digest(&data)),
            });
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            threads,
            phases: self.phases,
            exit_status,
            files,
        };
        let mut buf = serde_json::to_vec_pretty(&manifest)?;
        buf.push(b'\n');
        write_atomic(&self.root.join("manifest.json"), &buf)
    }
}

fn write_atomic(path: &Path, data: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(data)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}
