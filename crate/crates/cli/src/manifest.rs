use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_COPY_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Record of one run. Timestamps are the only wall-clock data written by
/// any command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    /// The config file exactly as read.
    pub config: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_checkpoint_sha256: Option<String>,
    pub files: Vec<FileEntry>,
}

pub(crate) fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn entry(dir: &Path, path: &Path) -> CliResult<FileEntry> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let rel = path.strip_prefix(dir).unwrap_or(path);
    Ok(FileEntry {
        path: rel.to_string_lossy().replace('\\', "/"),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

impl RunManifest {
    /// Copies the config verbatim into `dir`, then writes the manifest via a
    /// temporary file and a rename.
    pub(crate) fn finish(mut self, dir: &Path, files: &[PathBuf]) -> CliResult<PathBuf> {
        let copy = dir.join(CONFIG_COPY_FILE);
        write_file(&copy, self.config.as_bytes())?;
        self.files = files
            .iter()
            .chain(std::iter::once(&copy))
            .map(|p| entry(dir, p))
            .collect::<CliResult<_>>()?;
        self.finished_unix_ms = now_ms();
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Invalid(e.to_string()))?;
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        let dst = dir.join(MANIFEST_FILE);
        write_file(&tmp, text.as_bytes())?;
        fs::rename(&tmp, &dst).map_err(|e| CliError::io(&dst, e))?;
        Ok(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn finish_writes_config_copy_and_inventory() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a.txt");
        fs::write(&out, b"hello").unwrap();
        let config = "{ \"seed\": 3 }\n".to_string();
        let m = RunManifest {
            command: "train".into(),
            version: "0".into(),
            seed: 3,
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            config: config.clone(),
            shared_checkpoint_sha256: None,
            files: vec![],
        };
        let path = m.finish(dir.path(), &[out]).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join(CONFIG_COPY_FILE)).unwrap(), config);
        let back: RunManifest = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(back.config, config);
        assert_eq!(back.files.len(), 2);
        assert_eq!(back.files[0].path, "a.txt");
        assert_eq!(back.files[0].bytes, 5);
        assert!(!dir.path().join("manifest.json.tmp").exists());
    }
}
