use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::{RunConfig, INPUT_PREFIX, OUTPUT_PREFIX, SUBCOMMAND_KEY};
use crate::CliError;

pub const LOCK_FILE: &str = ".csq.lock";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct Lock {
    path: PathBuf,
}

impl Lock {
    pub fn acquire(dir: &Path) -> Result<Lock, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Lock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Io {
                path,
                source: std::io::Error::new(e.kind(), "output directory is locked by another run"),
            }),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn file_key(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Tracks what a stage reads and writes so it can be recorded in a
/// manifest. Inputs are never opened for writing.
pub struct StageIo<'a> {
    cfg: &'a RunConfig,
    inputs: BTreeMap<String, (PathBuf, String)>,
    outputs: BTreeMap<String, String>,
}

impl<'a> StageIo<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        StageIo { cfg, inputs: BTreeMap::new(), outputs: BTreeMap::new() }
    }

    /// Reads an input, checking it against the manifest digest if one was
    /// recorded.
    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let key = file_key(path);
        let digest = sha256_hex(text.as_bytes());
        if let Some(expected) = self.cfg.expected_inputs.get(&key) {
            if *expected != digest {
                return Err(CliError::Config(format!("input {} differs from the manifest digest", path.display())));
            }
        }
        self.inputs.insert(key, (path.to_path_buf(), digest));
        Ok(text)
    }

    /// Reads an input that must exist for this configuration; absence is a
    /// configuration error naming the producing stage.
    pub fn require(&mut self, path: &Path, producer: &str, why: &str) -> Result<String, CliError> {
        if !path.is_file() {
            return Err(CliError::Config(format!(
                "{why} needs {} (run `csq {producer}` first)",
                path.display()
            )));
        }
        self.read(path)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.cfg.out_path(name);
        if self.inputs.values().any(|(p, _)| same_file(p, &path)) {
            return Err(CliError::Config(format!("refusing to overwrite input {}", path.display())));
        }
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.outputs.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    pub fn manifest(&self, subcommand: &str) -> String {
        let mut out = String::from("# csq run manifest; rerun with --config <this file>\n");
        out.push_str(&format!("{SUBCOMMAND_KEY} = {subcommand}\n"));
        for (k, v) in self.cfg.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (k, (_, d)) in &self.inputs {
            out.push_str(&format!("{INPUT_PREFIX}{k} = {d}\n"));
        }
        for (k, d) in &self.outputs {
            out.push_str(&format!("{OUTPUT_PREFIX}{k} = {d}\n"));
        }
        out
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}
