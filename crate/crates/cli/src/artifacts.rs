//! Input hashing, atomic output writes and the run manifest.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// File name of a subcommand's manifest inside the output directory.
pub fn manifest_name(subcommand: &str) -> String {
    format!("{subcommand}.manifest.json")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Reader that hashes everything passing through it.
pub struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
    bytes: u64,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Inputs read during a run, in the order they were opened.
#[derive(Debug, Default)]
pub struct InputLog {
    pub records: Vec<InputRecord>,
}

impl InputLog {
    fn open(role: &str, path: &Path) -> CliResult<File> {
        File::open(path).map_err(|e| CliError::Config(format!("cannot open {role} file {}: {e}", path.display())))
    }

    /// Whole file as text.
    pub fn read_text(&mut self, role: &str, path: &Path) -> CliResult<String> {
        let mut bytes = Vec::new();
        Self::open(role, path)?
            .read_to_end(&mut bytes)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        self.records.push(InputRecord {
            role: role.into(),
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        String::from_utf8(bytes).map_err(|_| CliError::Config(format!("{role} file {} is not UTF-8", path.display())))
    }

    /// Streams a file through `f`, hashing it on the way. Whatever `f`
    /// leaves unread is hashed afterwards so the digest covers the file.
    pub fn stream<T>(
        &mut self,
        role: &str,
        path: &Path,
        f: impl FnOnce(&mut HashingReader<BufReader<File>>) -> CliResult<T>,
    ) -> CliResult<T> {
        let mut r = HashingReader {
            inner: BufReader::new(Self::open(role, path)?),
            hasher: Sha256::new(),
            bytes: 0,
        };
        let out = f(&mut r)?;
        std::io::copy(&mut r, &mut std::io::sink())?;
        self.records.push(InputRecord {
            role: role.into(),
            path: path.to_path_buf(),
            sha256: format!("{:x}", r.hasher.finalize()),
            bytes: r.bytes,
        });
        Ok(out)
    }
}

/// Artifacts produced by a subcommand, held in memory until the run has
/// succeeded so that failures leave nothing behind.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    /// Runs a writer callback into a buffer.
    pub fn add_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> tracelens_core::Result<()>,
    ) -> CliResult<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file, then the manifest, each through a temporary
    /// file renamed into place.
    pub fn commit(self, dir: &Path, mut manifest: Manifest) -> CliResult<Vec<OutputRecord>> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create output directory {}: {e}", dir.display())))?;
        let mut records = Vec::new();
        for (name, bytes) in &self.files {
            write_atomic(&dir.join(name), bytes)?;
            records.push(OutputRecord {
                name: name.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            });
        }
        manifest.outputs = records.clone();
        manifest.wall_time_s = manifest.started.elapsed().as_secs_f64();
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        write_atomic(&dir.join(manifest_name(&manifest.subcommand)), &bytes)?;
        Ok(records)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if let Some(sub) = path.parent() {
        std::fs::create_dir_all(sub)?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::Io(format!("cannot create temporary file in {}: {e}", dir.display())))?;
    tmp.write_all(bytes)?;
    // Temporary files are created owner-only; outputs are ordinary files.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| CliError::Io(format!("cannot move output into {}: {}", path.display(), e.error)))?;
    Ok(())
}

/// Provenance record written beside every run's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub subcommand: String,
    /// Digest of the effective configuration (file plus flags) as JSON.
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<OutputRecord>,
    pub workers: usize,
    pub timestamp_utc: String,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub started: Instant,
}

impl Manifest {
    pub fn new<C: Serialize>(subcommand: &str, config: &C, inputs: Vec<InputRecord>, workers: usize, started: Instant) -> Self {
        let config = serde_json::to_value(config).expect("config serializes");
        let canon = serde_json::to_vec(&config).expect("json");
        Manifest {
            tool: "tracelens",
            version: env!("CARGO_PKG_VERSION"),
            core_version: tracelens_core::VERSION,
            subcommand: subcommand.into(),
            config_sha256: sha256_hex(&canon),
            config,
            inputs,
            outputs: Vec::new(),
            workers,
            timestamp_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            wall_time_s: 0.0,
            started,
        }
    }
}
