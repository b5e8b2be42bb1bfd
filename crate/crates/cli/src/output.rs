//! Output directory handling: lock file, CSV text, manifests and the orphan audit.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use sha2::{Digest, Sha256};

pub const LOCK_FILE: &str = ".cavity-forge.lock";
pub const MANIFEST_SUFFIX: &str = ".manifest";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Exclusive ownership of an output directory for the lifetime of the value.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn acquire(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        let lock = root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => Ok(Self { root: root.to_path_buf() }),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(io::Error::new(
                e.kind(),
                format!("{} is locked by another run (remove {} if stale)", root.display(), lock.display()),
            )),
            Err(e) => Err(e),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.root.join(LOCK_FILE));
    }
}

/// Writes via a temporary file and rename so readers never see partial content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Twelve significant digits in scientific notation.
pub fn num(x: f64) -> String {
    cavity_forge_core::geometry::format_sig12(x)
}

#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        self.text.push_str(&csv_line(fields));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// One CSV record including its line terminator.
pub fn csv_line<S: AsRef<str>>(fields: &[S]) -> String {
    let mut line = fields.iter().map(|f| f.as_ref()).collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

/// Text of a CSV field: commas and quotes are not allowed in free text, so
/// they are replaced.
pub fn sanitize(s: &str) -> String {
    s.replace([',', '"', '\n', '\r'], ";")
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance record for one command invocation.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub command: String,
    pub started: SystemTime,
    pub config_text: String,
    pub inputs: Vec<(PathBuf, String)>,
    pub solver: Vec<(String, String)>,
    pub outputs: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(command: &str, config_text: String) -> Self {
        Self {
            command: command.to_string(),
            started: SystemTime::now(),
            config_text,
            inputs: Vec::new(),
            solver: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn file_name(command: &str) -> String {
        format!("{command}{MANIFEST_SUFFIX}")
    }

    pub fn add_input(&mut self, path: &Path) -> io::Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.push((path.to_path_buf(), digest));
        Ok(())
    }

    pub fn solver(&mut self, key: &str, value: impl ToString) {
        self.solver.push((key.to_string(), value.to_string()));
    }

    /// Writes `bytes` to `name` in `dir` and records the artifact.
    pub fn write_artifact(&mut self, dir: &OutputDir, name: &str, bytes: &[u8]) -> io::Result<()> {
        write_atomic(&dir.path(name), bytes)?;
        self.record(dir, name)
    }

    /// Records an artifact already present on disk.
    pub fn record(&mut self, dir: &OutputDir, name: &str) -> io::Result<()> {
        let bytes = fs::read(dir.path(name))?;
        self.outputs.retain(|e| e.name != name);
        self.outputs.push(ManifestEntry {
            name: name.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn render(&self, finished: SystemTime) -> String {
        let mut s = String::new();
        writeln!(s, "tool = cavity-forge {}", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(s, "command = {}", self.command).unwrap();
        writeln!(s, "started = {}", humantime::format_rfc3339_millis(self.started)).unwrap();
        writeln!(s, "finished = {}", humantime::format_rfc3339_millis(finished)).unwrap();
        for (k, v) in &self.solver {
            writeln!(s, "solver.{k} = {v}").unwrap();
        }
        for (p, d) in &self.inputs {
            writeln!(s, "input = {} sha256:{d}", p.display()).unwrap();
        }
        for e in &self.outputs {
            writeln!(s, "output = {} sha256:{} bytes:{}", e.name, e.sha256, e.bytes).unwrap();
        }
        for line in self.config_text.lines() {
            writeln!(s, "config.{line}").unwrap();
        }
        s
    }

    pub fn finish(&self, dir: &OutputDir) -> io::Result<()> {
        write_atomic(&dir.path(&Self::file_name(&self.command)), self.render(SystemTime::now()).as_bytes())
    }
}

/// Output names and digests listed in a rendered manifest.
pub fn manifest_outputs(text: &str) -> Vec<ManifestEntry> {
    text.lines()
        .filter_map(|l| l.strip_prefix("output = "))
        .filter_map(|rest| {
            let mut it = rest.split(' ');
            let name = it.next()?.to_string();
            let sha256 = it.next()?.strip_prefix("sha256:")?.to_string();
            let bytes = it.next()?.strip_prefix("bytes:")?.parse().ok()?;
            Some(ManifestEntry { name, sha256, bytes })
        })
        .collect()
}

/// Problems found by [`audit`].
#[derive(Debug, Default, PartialEq)]
pub struct AuditReport {
    pub orphans: Vec<String>,
    pub duplicates: Vec<String>,
    pub mismatched: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.orphans.is_empty() && self.duplicates.is_empty() && self.mismatched.is_empty()
    }
}

impl std::fmt::Display for AuditReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if !self.orphans.is_empty() {
            parts.push(format!("not listed in any manifest: {}", self.orphans.join(", ")));
        }
        if !self.duplicates.is_empty() {
            parts.push(format!("listed in more than one manifest: {}", self.duplicates.join(", ")));
        }
        if !self.mismatched.is_empty() {
            parts.push(format!("digest mismatch: {}", self.mismatched.join(", ")));
        }
        write!(f, "{}", parts.join("; "))
    }
}

/// Every regular file in `root` other than manifests and the lock must be listed
/// by exactly one manifest, with a matching digest.
pub fn audit(root: &Path) -> io::Result<AuditReport> {
    let mut files = BTreeSet::new();
    let mut manifests = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == LOCK_FILE {
            continue;
        }
        if name.ends_with(MANIFEST_SUFFIX) {
            manifests.push(name);
        } else {
            files.insert(name);
        }
    }
    manifests.sort();
    let mut report = AuditReport::default();
    let mut seen = BTreeSet::new();
    for m in &manifests {
        let text = fs::read_to_string(root.join(m))?;
        for e in manifest_outputs(&text) {
            if !seen.insert(e.name.clone()) {
                report.duplicates.push(e.name.clone());
                continue;
            }
            match fs::read(root.join(&e.name)) {
                Ok(bytes) if sha256_hex(&bytes) == e.sha256 => {}
                _ => report.mismatched.push(e.name.clone()),
            }
        }
    }
    report.orphans = files.into_iter().filter(|f| !seen.contains(f)).collect();
    Ok(report)
}
