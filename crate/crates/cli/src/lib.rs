//! Command-line front end over the solver, characteristics, signature, and
//! experiment crates.
//!
//! Every run is directed at one output directory (flag `--out`, else the
//! `RPME_OUT` environment variable, else `./runs`); nothing is written
//! outside it. Experiment subcommands delegate to the `experiments` crate
//! and exit 0 exactly when every declared assertion passed; utility
//! subcommands (`solve`, `characteristics`, `signature`, `analyze`) write
//! the same manifest format, so `replay` covers both. Alongside the CSV
//! outputs the tool emits two-column `.dat` series and a gnuplot stub; it
//! never renders images itself.
//!
//! In `--machine` mode stdout carries one JSON object per line; each line is
//! flushed before the next begins, so concurrent consumers never see torn
//! records. Environment variables override only the output directory and
//! the worker thread count (`RPME_THREADS`).

pub mod plot;
pub mod utility;

use clap::{Parser, Subcommand};
use experiments::manifest::RunManifest;
use experiments::{ExperimentError, ReplayReport};
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};

pub use utility::UTILITY_NAMES;

#[derive(Debug, Parser)]
#[command(
    name = "rpme",
    version,
    about = "Stochastic porous-medium toolbox: seeded experiments, flows, signatures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON configuration file; omitted keys take defaults, unknown keys are
    /// hard errors.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory (env RPME_OUT, default ./runs).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Override the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for the parallel campaigns (env RPME_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Emit one JSON object per line on stdout instead of human text.
    #[arg(long, global = true)]
    pub machine: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Integrate one seeded initial-value problem and dump the snapshots.
    Solve,
    /// Trace characteristic flows and check inverse composition and volume.
    Characteristics,
    /// Level-two signature report: increments, area, Chen defect, reversal.
    Signature,
    /// L1 contraction campaign over seeded driver/data pairs.
    Contraction,
    /// Mass budget across diffusion exponents and noise strengths.
    Mass,
    /// Restart-vs-shift composition gaps at and between step boundaries.
    Cocycle,
    /// Solution continuity in the driver under dyadic refinement.
    NoiseCts,
    /// Vanishing-viscosity sweep with the discrete energy ledger audit.
    VanishingReg,
    /// Characteristic-flow stability calibration/hold-out protocol.
    FlowStability,
    /// Kinetic estimators and defect measures for one solved trajectory.
    Analyze,
    /// Re-run a recorded manifest and compare output digests bit for bit.
    Replay {
        /// Path to a `*_manifest.json` written by an earlier run.
        manifest: PathBuf,
    },
}

impl Command {
    /// Dispatch name; also the manifest's `experiment` field.
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Characteristics => "characteristics",
            Command::Signature => "signature",
            Command::Contraction => "contraction",
            Command::Mass => "mass",
            Command::Cocycle => "cocycle",
            Command::NoiseCts => "noise-cts",
            Command::VanishingReg => "vanishing-reg",
            Command::FlowStability => "flow-stability",
            Command::Analyze => "analyze",
            Command::Replay { .. } => "replay",
        }
    }

    fn is_experiment(&self) -> bool {
        experiments::EXPERIMENT_NAMES.contains(&self.name())
    }
}

/// Line-oriented reporter: JSON objects in machine mode, plain text
/// otherwise. Each line is flushed as it is written.
pub struct Reporter {
    machine: bool,
}

impl Reporter {
    pub fn new(machine: bool) -> Self {
        Reporter { machine }
    }

    fn line(&self, human: String, record: Value) {
        let mut out = std::io::stdout().lock();
        let text = if self.machine { record.to_string() } else { human };
        let _ = writeln!(out, "{text}");
        let _ = out.flush();
    }

    pub fn start(&self, subcommand: &str, out_dir: &Path) {
        self.line(
            format!("{subcommand}: writing into {}", out_dir.display()),
            json!({"event": "start", "subcommand": subcommand, "out_dir": out_dir}),
        );
    }

    pub fn manifest(&self, man: &RunManifest, manifest_path: &Path) {
        for a in &man.assertions {
            self.line(
                format!(
                    "  {} {} (observed {:e}, bound {:e})",
                    if a.passed { "PASS" } else { "FAIL" },
                    a.name,
                    a.observed,
                    a.tolerance
                ),
                json!({
                    "event": "assertion",
                    "name": a.name,
                    "passed": a.passed,
                    "observed": a.observed,
                    "tolerance": a.tolerance,
                }),
            );
        }
        for (file, digest) in &man.outputs {
            self.line(
                format!("  output {file} sha256={digest}"),
                json!({"event": "output", "file": file, "sha256": digest}),
            );
        }
        self.line(
            format!(
                "{}: {} ({:.1}s), manifest {}",
                man.run_id,
                if man.all_passed() { "PASS" } else { "FAIL" },
                man.wall_clock_seconds,
                manifest_path.display()
            ),
            json!({
                "event": "done",
                "run_id": man.run_id,
                "passed": man.all_passed(),
                "failed": man.failed_names(),
                "manifest": manifest_path,
                "wall_clock_seconds": man.wall_clock_seconds,
            }),
        );
    }

    pub fn plots(&self, files: &[PathBuf]) {
        for f in files {
            self.line(
                format!("  plot data {}", f.display()),
                json!({"event": "plot", "file": f}),
            );
        }
    }

    pub fn error(&self, message: &str) {
        if self.machine {
            self.line(String::new(), json!({"event": "error", "message": message}));
        } else {
            eprintln!("error: {message}");
        }
    }
}

/// Load the JSON config object, or an empty object when no file was given.
pub fn load_config(path: Option<&Path>) -> Result<Value, ExperimentError> {
    let Some(path) = path else {
        return Ok(json!({}));
    };
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)?;
    if !value.is_object() {
        return Err(ExperimentError::BadConfig(format!(
            "configuration root must be a JSON object, got {value}"
        )));
    }
    Ok(value)
}

/// Apply the `--seed` override under the key each subcommand reads.
fn override_seed(config: &mut Value, subcommand: &Command, seed: u64) {
    let key = if subcommand.is_experiment() { "master_seed" } else { "seed" };
    config.as_object_mut().expect("config is an object").insert(key.into(), json!(seed));
}

fn resolve_out_dir(cli_out: Option<PathBuf>) -> PathBuf {
    cli_out
        .or_else(|| std::env::var_os("RPME_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn resolve_threads(cli_threads: Option<usize>) -> Option<usize> {
    cli_threads.or_else(|| {
        std::env::var("RPME_THREADS").ok().and_then(|v| v.parse().ok())
    })
}

/// Replay a manifest written by either an experiment or a utility run.
pub fn replay_any(manifest_path: &Path, out_dir: &Path) -> Result<ReplayReport, ExperimentError> {
    let original = RunManifest::read(manifest_path)?;
    if experiments::EXPERIMENT_NAMES.contains(&original.experiment.as_str()) {
        return experiments::replay(manifest_path, out_dir);
    }
    let rerun = utility::run_utility(&original.experiment, original.config.clone(), out_dir)?;
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

fn dispatch(cli: &Cli, out_dir: &Path, rep: &Reporter) -> Result<bool, ExperimentError> {
    if let Command::Replay { manifest } = &cli.command {
        if cli.config.is_some() || cli.seed.is_some() {
            return Err(ExperimentError::BadConfig(
                "replay re-runs the embedded configuration; --config and --seed have no effect"
                    .into(),
            ));
        }
        let report = replay_any(manifest, out_dir)?;
        let ok = report.digests_match();
        rep.line(
            format!(
                "replay {}: {} ({} outputs checked{})",
                report.original.run_id,
                if ok { "digests match" } else { "DIGESTS DIVERGED" },
                report.original.outputs.len(),
                if ok { String::new() } else { format!("; {:?}", report.mismatches) }
            ),
            json!({
                "event": "replay",
                "run_id": report.original.run_id,
                "digests_match": ok,
                "mismatches": report.mismatches,
            }),
        );
        return Ok(ok);
    }

    let mut config = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        override_seed(&mut config, &cli.command, seed);
    }
    let name = cli.command.name();
    let man = if cli.command.is_experiment() {
        experiments::run_experiment(name, config, out_dir)?
    } else {
        utility::run_utility(name, config, out_dir)?
    };
    let plots = plot::emit(name, out_dir)?;
    let manifest_path = out_dir.join(format!("{}_manifest.json", man.run_id));
    rep.manifest(&man, &manifest_path);
    rep.plots(&plots);
    Ok(man.all_passed())
}

/// Run one parsed invocation. Returns the process exit code: 0 when every
/// assertion passed (or digests matched), 1 otherwise.
pub fn run(cli: Cli) -> i32 {
    let rep = Reporter::new(cli.machine);
    if let Some(n) = resolve_threads(cli.threads) {
        // A second initialization in one process keeps the first pool; that
        // only matters to in-process tests, never to the binary.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out_dir = resolve_out_dir(cli.out.clone());
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        rep.error(&format!("cannot create output directory {}: {e}", out_dir.display()));
        return 1;
    }
    rep.start(cli.command.name(), &out_dir);
    match dispatch(&cli, &out_dir, &rep) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            rep.error(&e.to_string());
            1
        }
    }
}
