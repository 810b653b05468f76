//! Artifact encoding and directory writing.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const TOOL: &str = "nlre";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A named output file held in memory until the whole run succeeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: &str, bytes: impl Into<Vec<u8>>) -> Artifact {
        Artifact { name: name.to_string(), bytes: bytes.into() }
    }

    pub fn json(name: &str, value: &Value) -> Artifact {
        let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
        text.push('\n');
        Artifact::new(name, text)
    }

    pub fn record(&self) -> Value {
        json!({ "file": self.name, "sha256": sha256_hex(&self.bytes), "bytes": self.bytes.len() })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Shortest round-trip scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

/// CSV with `# key: value` metadata lines above the header row.
pub fn csv_bytes(meta: &[(&str, String)], header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut out = Vec::new();
    for (k, v) in meta {
        out.extend_from_slice(format!("# {k}: {v}\n").as_bytes());
    }
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(header).expect("in-memory csv write");
    for r in rows {
        w.write_record(r).expect("in-memory csv write");
    }
    w.into_inner().expect("in-memory csv flush")
}

/// Numeric table with a header, rows formatted by [`num`].
pub fn numeric_csv(meta: &[(&str, String)], header: &[&str], rows: &[Vec<f64>]) -> Vec<u8> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|&x| num(x)).collect()).collect();
    csv_bytes(meta, &header, &rows)
}

/// Output root: `--out`, then `NLRE_OUT_DIR`, then `./nlre-out`.
pub fn output_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("NLRE_OUT_DIR").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("nlre-out"))
}

/// Writes `files` into a staging directory next to `target`, then replaces
/// `target` with it.
pub fn write_dir(target: &Path, files: &[Artifact]) -> CliResult<()> {
    let name = target
        .file_name()
        .ok_or_else(|| CliError::Io(format!("bad output directory {}", target.display())))?
        .to_string_lossy()
        .into_owned();
    let parent = target.parent().map(Path::to_path_buf).unwrap_or_default();
    if !parent.as_os_str().is_empty() {
        fs::create_dir_all(&parent)?;
    }
    let staging = parent.join(format!(".{name}.partial"));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    for f in files {
        let path = staging.join(&f.name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, &f.bytes)?;
    }
    if target.exists() {
        fs::remove_dir_all(target)?;
    }
    fs::rename(&staging, target)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let b = numeric_csv(&[("analysis", "x".into())], &["k", "p"], &[vec![0.0, 0.5], vec![1.0, 1e-20]]);
        let text = String::from_utf8(b).unwrap();
        assert_eq!(text, "# analysis: x\nk,p\n0e0,5e-1\n1e0,1e-20\n");
    }

    #[test]
    fn staged_write_replaces_target() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("run");
        write_dir(&target, &[Artifact::new("a.txt", "1"), Artifact::new("sub/b.txt", "2")]).unwrap();
        write_dir(&target, &[Artifact::new("c.txt", "3")]).unwrap();
        assert!(!target.join("a.txt").exists());
        assert_eq!(fs::read_to_string(target.join("c.txt")).unwrap(), "3");
        assert!(!dir.path().join(".run.partial").exists());
    }
}
