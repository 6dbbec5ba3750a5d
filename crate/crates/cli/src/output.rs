//! Output files, input digests and run manifests.

use std::fs;
use std::hash::Hasher;
use std::io::Write;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// 64-bit FNV-1a digest of a byte string, as 16 hex digits.
pub fn digest(bytes: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

/// Reads an input file and remembers its digest for the manifest.
pub fn read_input(path: &Path, inputs: &mut Vec<InputFile>) -> Result<Vec<u8>, CliError> {
    let bytes =
        fs::read(path).map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
    inputs.push(InputFile {
        path: path.to_path_buf(),
        fnv64: digest(&bytes),
    });
    Ok(bytes)
}

/// `stats.csv` -> `stats.<suffix>`, keeping the directory.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// `out.csv` -> `out.csv.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub fnv64: String,
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Command line after the program name, without thread settings.
    pub args: Vec<String>,
    pub params: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn write(&self, primary_out: &Path) -> Result<PathBuf, CliError> {
        let path = manifest_path(primary_out);
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Io(format!("serializing manifest: {e}")))?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{} is not a run manifest: {e}", path.display())))
    }
}

/// Drops `--threads N` / `--threads=N` so manifests do not depend on them.
pub fn strip_thread_args(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--threads" {
            skip = true;
        } else if !a.starts_with("--threads=") {
            out.push(a.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_known_values() {
        assert_eq!(digest(b""), "cbf29ce484222325");
        assert_eq!(digest(b"a"), "af63dc4c8601ec8c");
    }

    #[test]
    fn sibling_and_manifest_names() {
        assert_eq!(sibling(Path::new("d/stats.csv"), "acf.csv"), Path::new("d/stats.acf.csv"));
        assert_eq!(
            manifest_path(Path::new("d/pmf.csv")),
            Path::new("d/pmf.csv.manifest.json")
        );
    }

    #[test]
    fn thread_args_removed() {
        let args: Vec<String> = ["--threads", "4", "evolve", "--threads=2", "--n", "3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(strip_thread_args(&args), vec!["evolve", "--n", "3"]);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
