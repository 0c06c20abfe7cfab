//! Re-running manifests: dispatch by experiment name and verify that the
//! rerun reproduces every recorded output digest bit-for-bit.

use crate::manifest::RunManifest;
use crate::ExperimentError;
use std::path::Path;

/// Canonical experiment identifiers, as stored in manifests.
pub const EXPERIMENT_NAMES: &[&str] =
    &["contraction", "mass", "cocycle", "noise-cts", "vanishing-reg", "flow-stability"];

/// Run the named experiment from a JSON config into `out_dir`.
pub fn run_experiment(
    name: &str,
    config: serde_json::Value,
    out_dir: &Path,
) -> Result<RunManifest, ExperimentError> {
    match name {
        "contraction" => crate::contraction::run(&serde_json::from_value(config)?, out_dir),
        "mass" => crate::conservation::run(&serde_json::from_value(config)?, out_dir),
        "cocycle" => crate::cocycle::run(&serde_json::from_value(config)?, out_dir),
        "noise-cts" => crate::continuity::run(&serde_json::from_value(config)?, out_dir),
        "vanishing-reg" => crate::regularization::run(&serde_json::from_value(config)?, out_dir),
        "flow-stability" => crate::stability::run(&serde_json::from_value(config)?, out_dir),
        other => Err(ExperimentError::UnknownExperiment(other.to_string())),
    }
}

#[derive(Debug)]
pub struct ReplayReport {
    pub original: RunManifest,
    pub rerun: RunManifest,
    /// Output files whose digests differ, or that one side lacks.
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn digests_match(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-run the experiment described by the manifest at `manifest_path`,
/// writing into `out_dir`, and compare output digests.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<ReplayReport, ExperimentError> {
    let original = RunManifest::read(manifest_path)?;
    let rerun = run_experiment(&original.experiment, original.config.clone(), out_dir)?;
    let mut mismatches = Vec::new();
    for (name, digest) in &original.outputs {
        match rerun.outputs.get(name) {
            Some(d) if d == digest => {}
            Some(_) => mismatches.push(format!("{name}: digest differs")),
            None => mismatches.push(format!("{name}: missing from rerun")),
        }
    }
    for name in rerun.outputs.keys() {
        if !original.outputs.contains_key(name) {
            mismatches.push(format!("{name}: not in original run"));
        }
    }
    Ok(ReplayReport { original, rerun, mismatches })
}
