//! Output directory with a manifest of every file and its SHA-256.

use crate::error::CliResult;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a str,
    files: &'a [FileEntry],
}

pub struct Artifacts {
    dir: PathBuf,
    command: String,
    seed: u64,
    config: String,
    files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl Artifacts {
    pub fn create(dir: &Path, command: &str, seed: u64, config: String) -> CliResult<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), command: command.into(), seed, config, files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry { path: name.into(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes a CSV table; cells are formatted by the caller.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        self.write(name, &bytes)
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(mut self) -> CliResult<Vec<FileEntry>> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            command: &self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            config: &self.config,
            files: &self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(self.files)
    }
}

/// Shortest round-tripping decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_input() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_lists_written_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::create(dir.path(), "test", 3, String::new()).unwrap();
        a.write_csv("t.csv", &["x", "y"], &[vec![num(1.5), num(-2.0)]]).unwrap();
        a.write("b.txt", b"hello").unwrap();
        let files = a.finish().unwrap();
        assert_eq!(files.iter().map(|f| f.path.as_str()).collect::<Vec<_>>(), ["b.txt", "t.csv"]);
        assert_eq!(std::fs::read_to_string(dir.path().join("t.csv")).unwrap(), "x,y\n1.5,-2\n");
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["files"][0]["sha256"], sha256_hex(b"hello"));
    }
}
