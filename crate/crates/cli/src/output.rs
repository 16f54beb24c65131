use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliResult, Failure};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

pub fn read_input(role: &str, path: &Path) -> CliResult<(Vec<u8>, FileDigest)> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let digest = FileDigest {
        role: role.into(),
        file: path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
        sha256: sha256_hex(&bytes),
    };
    Ok((bytes, digest))
}

/// Provenance attached to every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
}

impl RunInfo {
    pub fn new(command: &str, config: &RunConfig, inputs: Vec<FileDigest>) -> Self {
        RunInfo {
            tool: "arcrec".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.echo(),
            inputs,
        }
    }

    pub fn input(&self, role: &str) -> Option<&FileDigest> {
        self.inputs.iter().find(|d| d.role == role)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    run: &'a RunInfo,
    outputs: Vec<FileDigest>,
}

/// Report documents pair the payload with the run that produced it.
#[derive(Serialize)]
pub struct Document<'a, T: Serialize> {
    pub run: &'a RunInfo,
    #[serde(flatten)]
    pub body: T,
}

pub fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    let fail = |e: std::io::Error| Failure::Runtime(format!("{}: {e}", dir.join(name).display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(dir.join(name)).map_err(|e| fail(e.error))?;
    Ok(())
}

/// Files produced by one command, written together with a `run.json`
/// manifest listing the run and the digest of every file.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Self {
        Artifacts {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn write(self, run: &RunInfo) -> CliResult<()> {
        std::fs::create_dir_all(&self.dir)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", self.dir.display())))?;
        let outputs = self
            .files
            .iter()
            .map(|(name, bytes)| FileDigest {
                role: "output".into(),
                file: name.clone(),
                sha256: sha256_hex(bytes),
            })
            .collect();
        for (name, bytes) in &self.files {
            write_atomic(&self.dir, name, bytes)?;
        }
        write_atomic(&self.dir, "run.json", &json(&Manifest { run, outputs }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn artifacts_land_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nested");
        let mut a = Artifacts::new(&out);
        a.add("x.csv", b"a,b\n".to_vec());
        let run = RunInfo::new("test", &RunConfig::default(), Vec::new());
        a.write(&run).unwrap();
        assert_eq!(std::fs::read(out.join("x.csv")).unwrap(), b"a,b\n");
        let manifest: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap();
        assert_eq!(manifest["outputs"][0]["sha256"], sha256_hex(b"a,b\n"));
        assert_eq!(manifest["run"]["command"], "test");
    }
}
