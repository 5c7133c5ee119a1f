//! Report and manifest plumbing: a schema-versioned JSON report per
//! command, a manifest of artifact hashes for byte-level reproducibility
//! checks, and the worker-count knob for parallel scans.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::Result;

pub const REPORT_SCHEMA: &str = "repnet-report/1";
pub const MANIFEST_SCHEMA: &str = "repnet-manifest/1";

/// One named boolean, traceable to an invariant, with the measurement that
/// decided it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportCheck {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

/// The per-command result record. Wall-clock is deliberately kept out of
/// the serialized report (it lives in `timings.json`, which the manifest
/// skips) so that reruns produce byte-identical artifacts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub checks: Vec<ReportCheck>,
    pub measured: BTreeMap<String, serde_json::Value>,
    pub counterexamples: Vec<String>,
    pub ok: bool,
}

impl Report {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Report {
            schema: REPORT_SCHEMA.to_string(),
            command: command.to_string(),
            config: cfg.echo(),
            checks: Vec::new(),
            measured: BTreeMap::new(),
            counterexamples: Vec::new(),
            ok: true,
        }
    }

    pub fn check(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.checks.push(ReportCheck { name: name.to_string(), ok, detail: detail.into() });
        self.ok &= ok;
    }

    pub fn measure(&mut self, key: &str, value: impl Serialize) {
        self.measured.insert(
            key.to_string(),
            serde_json::to_value(value).expect("measurement serializes"),
        );
    }

    pub fn counterexample(&mut self, witness: impl Into<String>) {
        self.counterexamples.push(witness.into());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Wall-clock seconds per command, written beside the manifest but never
/// hashed into it.
pub const TIMINGS_FILE: &str = "timings.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timings {
    pub seconds: BTreeMap<String, f64>,
}

impl Timings {
    pub fn load(dir: &Path) -> Self {
        std::fs::read_to_string(dir.join(TIMINGS_FILE))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default()
    }

    pub fn record(&mut self, command: &str, seconds: f64) {
        self.seconds.insert(command.to_string(), seconds);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(TIMINGS_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    /// file name -> sha256 hex of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hashes every regular file in `dir` except the manifest itself and the
/// timing sidecar, and writes `manifest.json`.
pub fn write_manifest(dir: &Path) -> Result<Manifest> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut artifacts = BTreeMap::new();
    for path in names {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if name == MANIFEST_FILE || name == TIMINGS_FILE {
            continue;
        }
        artifacts.insert(name, sha256_hex(&std::fs::read(&path)?));
    }
    let manifest = Manifest { schema: MANIFEST_SCHEMA.to_string(), artifacts };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Worker count for parallel verification scans: `REPNET_WORKERS`, else the
/// available parallelism, else 1.
pub fn worker_count() -> usize {
    std::env::var("REPNET_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Splits `0..n` into contiguous chunks, maps each on its own scoped
/// thread, and returns the per-chunk results in order. Falls back to a
/// single in-place call when one worker suffices.
pub fn par_map_ranges<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync,
{
    let workers = worker_count().min(n.max(1));
    if workers <= 1 {
        return vec![f(0..n)];
    }
    let chunk = n.div_ceil(workers);
    let ranges: Vec<std::ops::Range<usize>> = (0..workers)
        .map(|w| (w * chunk).min(n)..((w + 1) * chunk).min(n))
        .filter(|r| !r.is_empty())
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = ranges
            .into_iter()
            .map(|r| scope.spawn(|| f(r)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("scan worker panicked")).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_accumulates_and_roundtrips() {
        let cfg = RunConfig::default();
        let mut r = Report::new("net", &cfg);
        r.check("separated", true, "min pair 1.0");
        r.measure("points", 42u32);
        assert!(r.ok);
        r.check("dense", false, "hole at origin");
        r.counterexample("point 3");
        assert!(!r.ok);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        r.write(&path).unwrap();
        let back = Report::read(&path).unwrap();
        assert_eq!(back.schema, REPORT_SCHEMA);
        assert_eq!(back.checks.len(), 2);
        assert!(!back.ok);
    }

    #[test]
    fn manifest_hashes_everything_but_sidecars() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "1,2\n").unwrap();
        std::fs::write(dir.path().join(TIMINGS_FILE), "{}").unwrap();
        let m = write_manifest(dir.path()).unwrap();
        assert_eq!(m.artifacts.len(), 1);
        assert!(m.artifacts.contains_key("a.csv"));
        // Stable across reruns, including the manifest file itself.
        let first = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
        write_manifest(dir.path()).unwrap();
        let second = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn par_map_covers_all_indices() {
        std::env::set_var("REPNET_WORKERS", "3");
        let chunks = par_map_ranges(10, |r| r.collect::<Vec<_>>());
        std::env::remove_var("REPNET_WORKERS");
        let all: Vec<usize> = chunks.into_iter().flatten().collect();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }
}
