//! Run manifests: the durable record of one experiment run.

use crate::ExperimentError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// One checked inequality, with the observed value and the tolerance it was
/// held against. Tolerances are echoed from the config; nothing here is
/// hard-coded by the checking code.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssertionRecord {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub tolerance: f64,
    pub detail: String,
}

/// Everything needed to audit or replay one experiment run.
///
/// `wall_clock_seconds` is informational and excluded from replay
/// comparisons; `outputs` maps each file the run wrote (relative to its
/// output directory) to the SHA-256 of its bytes, and replaying the embedded
/// config must reproduce those digests exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub run_id: String,
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub child_seeds: Vec<u64>,
    pub grid: String,
    pub driver: String,
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub assertions: Vec<AssertionRecord>,
    /// Observations recorded without a pass/fail verdict.
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new<C: Serialize>(
        experiment: &str,
        run_id: &str,
        config: &C,
        master_seed: u64,
    ) -> Result<Self, ExperimentError> {
        Ok(RunManifest {
            experiment: experiment.to_string(),
            run_id: run_id.to_string(),
            config: serde_json::to_value(config)?,
            master_seed,
            child_seeds: Vec::new(),
            grid: String::new(),
            driver: String::new(),
            outputs: BTreeMap::new(),
            wall_clock_seconds: 0.0,
            assertions: Vec::new(),
            notes: Vec::new(),
        })
    }

    /// Record `observed <= tolerance`. Non-finite observations fail and are
    /// stored as `f64::MAX` so the manifest stays valid JSON.
    pub fn assert_le(&mut self, name: &str, observed: f64, tolerance: f64, detail: &str) -> bool {
        let finite = observed.is_finite();
        let passed = finite && observed <= tolerance;
        self.assertions.push(AssertionRecord {
            name: name.to_string(),
            passed,
            observed: if finite { observed } else { f64::MAX },
            tolerance,
            detail: if finite {
                detail.to_string()
            } else {
                format!("non-finite observation; {detail}")
            },
        });
        passed
    }

    /// Record a predicate that has no natural observed/tolerance pair.
    pub fn assert_that(&mut self, name: &str, passed: bool, detail: &str) -> bool {
        self.assertions.push(AssertionRecord {
            name: name.to_string(),
            passed,
            observed: if passed { 0.0 } else { 1.0 },
            tolerance: 0.0,
            detail: detail.to_string(),
        });
        passed
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failed_names(&self) -> Vec<&str> {
        self.assertions.iter().filter(|a| !a.passed).map(|a| a.name.as_str()).collect()
    }

    /// Digest `dir/name` and add it to the output map.
    pub fn record_output(&mut self, dir: &Path, name: &str) -> Result<(), ExperimentError> {
        let digest = digest_file(&dir.join(name))?;
        self.outputs.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn manifest_file_name(&self) -> String {
        format!("{}_manifest.json", self.run_id)
    }

    /// Write the manifest JSON into `dir` and append an index line.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, ExperimentError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(self.manifest_file_name());
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text)?;
        append_index(dir, self)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Lowercase hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Lowercase hex SHA-256 of a file's contents.
pub fn digest_file(path: &Path) -> Result<String, ExperimentError> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// One line per run: id, experiment, verdict, manifest file, output digests.
pub fn append_index(dir: &Path, manifest: &RunManifest) -> Result<(), ExperimentError> {
    let line = serde_json::json!({
        "run_id": manifest.run_id,
        "experiment": manifest.experiment,
        "passed": manifest.all_passed(),
        "manifest": manifest.manifest_file_name(),
        "outputs": manifest.outputs,
    });
    let mut f = fs::OpenOptions::new().create(true).append(true).open(dir.join("runs_index.jsonl"))?;
    writeln!(f, "{line}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_through_json() {
        let mut m = RunManifest::new("demo", "demo_1", &serde_json::json!({"m": 2.0}), 9).unwrap();
        m.child_seeds = vec![1, 2, 3];
        m.grid = "torus n=16".into();
        m.assert_le("gap", 0.5, 1.0, "ok");
        m.assert_that("shape", true, "recorded");
        m.note("informational only");
        let text = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.run_id, "demo_1");
        assert!(back.all_passed());
        assert_eq!(back.child_seeds, vec![1, 2, 3]);
        assert_eq!(back.notes.len(), 1);
    }

    #[test]
    fn non_finite_observations_fail_but_serialize() {
        let mut m = RunManifest::new("demo", "demo_2", &serde_json::json!({}), 0).unwrap();
        assert!(!m.assert_le("bad", f64::NAN, 1.0, ""));
        assert!(!m.all_passed());
        assert_eq!(m.failed_names(), vec!["bad"]);
        serde_json::to_string(&m).unwrap();
    }

    #[test]
    fn digests_are_stable_and_content_sensitive() {
        let a = sha256_hex(b"abc");
        assert_eq!(a, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_ne!(a, sha256_hex(b"abd"));
    }

    #[test]
    fn writing_records_digests_and_appends_the_index() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("demo", "demo_3", &serde_json::json!({}), 0).unwrap();
        std::fs::write(dir.path().join("table.csv"), "a,b\n1,2\n").unwrap();
        m.record_output(dir.path(), "table.csv").unwrap();
        let path = m.write(dir.path()).unwrap();
        let back = RunManifest::read(&path).unwrap();
        assert_eq!(back.outputs["table.csv"], digest_file(&dir.path().join("table.csv")).unwrap());
        let index = std::fs::read_to_string(dir.path().join("runs_index.jsonl")).unwrap();
        assert_eq!(index.lines().count(), 1);
        assert!(index.contains("demo_3"));
    }
}
