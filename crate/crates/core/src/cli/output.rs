use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const LOCK_FILE: &str = ".gsm-hbt.lock";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Shortest fixed-width rendering that round-trips every `f64`.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub files: Vec<FileDigest>,
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory held for the duration of one run.
pub struct OutputDir {
    root: PathBuf,
    lock: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn acquire(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        let lock = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::Locked(root.display().to_string()));
            }
            Err(e) => return Err(e.into()),
        }
        Ok(Self {
            root: root.to_path_buf(),
            lock,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `name` through a temporary file and a rename.
    pub fn write(&mut self, name: &str, data: &[u8]) -> Result<()> {
        atomic_write(&self.root, name, data)?;
        self.record(name);
        Ok(())
    }

    /// Registers a file written by other means for the manifest.
    pub fn record(&mut self, name: &str) {
        let p = self.root.join(name);
        if !self.written.contains(&p) {
            self.written.push(p);
        }
    }

    pub fn finish(mut self, command: &str, seed: u64, config: serde_json::Value) -> Result<RunManifest> {
        let mut files = Vec::with_capacity(self.written.len());
        for p in &self.written {
            let data = fs::read(p)?;
            files.push(FileDigest {
                path: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                bytes: data.len() as u64,
                sha256: sha256_hex(&data),
            });
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config,
            files,
        };
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        atomic_write(&self.root, MANIFEST_FILE, &json)?;
        self.written.clear();
        Ok(manifest)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

fn atomic_write(dir: &Path, name: &str, data: &[u8]) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(data)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// CSV with a header row, LF line endings.
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(header).expect("writing to memory");
        Self { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("writing to memory");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("writing to memory")
    }
}

/// Verifies every digest recorded in a manifest against the files beside it.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: RunManifest = serde_json::from_slice(&fs::read(&path)?).map_err(|e| Error::Format {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut bad = Vec::new();
    for f in &manifest.files {
        let data = File::open(dir.join(&f.path)).and_then(|mut h| {
            let mut v = Vec::new();
            std::io::Read::read_to_end(&mut h, &mut v)?;
            Ok(v)
        });
        match data {
            Ok(d) if sha256_hex(&d) == f.sha256 => {}
            _ => bad.push(f.path.clone()),
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(float(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn digest_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let first = OutputDir::acquire(dir.path()).unwrap();
        assert!(matches!(OutputDir::acquire(dir.path()), Err(Error::Locked(_))));
        drop(first);
        let mut again = OutputDir::acquire(dir.path()).unwrap();
        again.write("a.csv", b"x\n1\n").unwrap();
        let m = again.finish("test", 7, serde_json::json!({})).unwrap();
        assert_eq!(m.files.len(), 1);
        assert!(verify_manifest(dir.path()).unwrap().is_empty());
        assert!(!dir.path().join(LOCK_FILE).exists());
    }

    #[test]
    fn csv_layout() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.row(["1", "x,y"]);
        assert_eq!(String::from_utf8(t.into_bytes()).unwrap(), "a,b\n1,\"x,y\"\n");
    }
}
