//! L1-contraction campaign: for pairs of nonnegative data driven by the
//! same path, the discrete L1 distance must not grow beyond a declared
//! discretization tolerance, and any violation margin must shrink under
//! grid refinement.

use crate::data::{self, fmt};
use crate::manifest::RunManifest;
use crate::seeds::child_seed;
use crate::ExperimentError;
use pme_solver::{DtPolicy, Solver, SolverConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContractionConfig {
    pub nodes: usize,
    /// Diffusion exponent for the asserted campaign.
    pub m: f64,
    pub eta: f64,
    pub delta: f64,
    pub kappa: f64,
    pub horizon: f64,
    /// Number of comparison times in (0, horizon].
    pub snapshots: usize,
    pub drivers: usize,
    pub pairs_per_driver: usize,
    pub driver_knots: usize,
    pub master_seed: u64,
    /// Tolerance = tol_factor * (dx + dt) * horizon * stiffness, where
    /// stiffness bounds the mollified diffusion slope over the data range.
    pub tol_factor: f64,
    /// Also solve one pair at doubled resolution and halved step, checking
    /// the violation margin shrinks.
    pub check_refinement: bool,
    pub shrink_factor: f64,
    /// Floor for the margin comparison: a monotone conservative scheme is
    /// contractive up to roundoff, so margins at both levels sit near zero.
    pub margin_floor: f64,
    /// Record (without asserting) one signed-data pair at this fast
    /// diffusion exponent; whether contraction survives sign changes there
    /// is an open question.
    pub signed_m: f64,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        ContractionConfig {
            nodes: 128,
            m: 2.0,
            eta: 0.0,
            delta: 1e-3,
            kappa: 0.5,
            horizon: 0.02,
            snapshots: 5,
            drivers: 10,
            pairs_per_driver: 3,
            driver_knots: 9,
            master_seed: 1,
            tol_factor: 5.0,
            check_refinement: true,
            shrink_factor: 1.5,
            margin_floor: 1e-14,
            signed_m: 0.5,
        }
    }
}

impl ContractionConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        ExperimentError::check_exponent(self.m)?;
        ExperimentError::check_exponent(self.signed_m)?;
        if self.nodes < 8 {
            return Err(ExperimentError::BadConfig(format!(
                "need at least 8 nodes, got {}",
                self.nodes
            )));
        }
        if self.drivers == 0 || self.pairs_per_driver == 0 {
            return Err(ExperimentError::BadConfig(
                "need at least one driver and one pair".into(),
            ));
        }
        if self.snapshots < 2 || self.driver_knots < 2 {
            return Err(ExperimentError::BadConfig(
                "need at least two snapshot times and two driver knots".into(),
            ));
        }
        if !(self.horizon > 0.0) || !(self.tol_factor > 0.0) || !(self.shrink_factor >= 1.0) {
            return Err(ExperimentError::BadConfig(
                "horizon, tol_factor and shrink_factor must be positive".into(),
            ));
        }
        Ok(())
    }
}

struct PairRow {
    driver: usize,
    pair: usize,
    seed_a: u64,
    seed_b: u64,
    outcome: PairOutcome,
}

struct PairOutcome {
    initial_gap: f64,
    /// One (time, L1 gap) entry per recorded snapshot.
    snaps: Vec<(f64, f64)>,
    worst_ratio: f64,
    tolerance: f64,
}

/// Per-snapshot L1 gaps, the initial gap, and the discretization tolerance
/// for this pair.
fn run_pair(
    solver: &Solver,
    u0a: &torus_core::ScalarField,
    u0b: &torus_core::ScalarField,
    path: &noise_paths::DrivingPath,
    cfg: &ContractionConfig,
) -> Result<PairOutcome, ExperimentError> {
    let ta = solver.solve(u0a, path)?;
    let tb = solver.solve(u0b, path)?;
    let gap0 = data::l1_distance(u0a, u0b)?;
    if gap0 <= 1e-12 {
        return Err(ExperimentError::BadConfig(
            "degenerate data pair: initial L1 gap below 1e-12".into(),
        ));
    }
    let mut snaps = Vec::with_capacity(ta.snaps.len());
    let mut worst: f64 = 0.0;
    for (sa, sb) in ta.snaps.iter().zip(&tb.snaps) {
        let gap = data::l1_distance(&sa.field, &sb.field)?;
        worst = worst.max(gap / gap0);
        snaps.push((sa.t, gap));
    }
    let dx = u0a.grid().spacing();
    let dt = solver.config().horizon / ta.steps.max(tb.steps).max(1) as f64;
    let lo = u0a.values().iter().chain(u0b.values()).cloned().fold(f64::INFINITY, f64::min);
    let hi = u0a.values().iter().chain(u0b.values()).cloned().fold(f64::NEG_INFINITY, f64::max);
    let stiffness = solver.phi_table().max_deriv(lo, hi) + solver.config().eta;
    let tol = cfg.tol_factor * (dx + dt) * cfg.horizon * stiffness;
    Ok(PairOutcome { initial_gap: gap0, snaps, worst_ratio: worst, tolerance: tol })
}

fn build_solver(
    nodes: usize,
    m: f64,
    dt_policy: DtPolicy,
    cfg: &ContractionConfig,
) -> Result<Solver, ExperimentError> {
    let grid = data::line_grid(nodes)?;
    let mut sc = SolverConfig::new(grid, m, cfg.horizon);
    sc.eta = cfg.eta;
    sc.delta = cfg.delta;
    sc.dt_policy = dt_policy;
    sc.snapshot_times = data::time_lattice(cfg.horizon, cfg.snapshots);
    Ok(Solver::new(sc, coefficients::FluxCoefficients::separable_sine(cfg.kappa))?)
}

pub fn run(cfg: &ContractionConfig, out_dir: &Path) -> Result<RunManifest, ExperimentError> {
    cfg.validate()?;
    let started = Instant::now();
    let run_id = format!("contraction_m{}_s{}", cfg.m, cfg.master_seed);
    let mut man = RunManifest::new("contraction", &run_id, cfg, cfg.master_seed)?;
    let grid = data::line_grid(cfg.nodes)?;
    man.grid = format!("torus[0,1) dim=1 n={} dx={:.3e}", cfg.nodes, grid.spacing());
    man.driver = format!(
        "brownian x{}, {} knots, horizon={}",
        cfg.drivers, cfg.driver_knots, cfg.horizon
    );

    let solver = build_solver(cfg.nodes, cfg.m, DtPolicy::default(), cfg)?;
    let rows: Vec<PairRow> = (0..cfg.drivers)
        .into_par_iter()
        .map(|d| -> Result<Vec<PairRow>, ExperimentError> {
            let dseed = child_seed(cfg.master_seed, "driver", d as u64);
            let path =
                noise_paths::brownian_path(dseed, cfg.horizon, cfg.driver_knots, 1);
            let mut out = Vec::new();
            for p in 0..cfg.pairs_per_driver {
                let c = (d * cfg.pairs_per_driver + p) as u64;
                let seed_a = child_seed(cfg.master_seed, "data", 2 * c);
                let seed_b = child_seed(cfg.master_seed, "data", 2 * c + 1);
                let u0a = data::positive_trig(&grid, seed_a)?;
                let u0b = data::positive_trig(&grid, seed_b)?;
                let outcome = run_pair(&solver, &u0a, &u0b, &path, cfg)?;
                out.push(PairRow { driver: d, pair: p, seed_a, seed_b, outcome });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    for d in 0..cfg.drivers {
        man.child_seeds.push(child_seed(cfg.master_seed, "driver", d as u64));
    }
    for c in 0..(cfg.drivers * cfg.pairs_per_driver) as u64 {
        man.child_seeds.push(child_seed(cfg.master_seed, "data", 2 * c));
        man.child_seeds.push(child_seed(cfg.master_seed, "data", 2 * c + 1));
    }

    let mut wtr = csv::Writer::from_path(out_dir.join("contraction_pairs.csv"))?;
    wtr.write_record([
        "driver", "pair", "seed_a", "seed_b", "snapshot", "time", "initial_gap", "l1_gap",
        "ratio", "tolerance",
    ])?;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_label = String::new();
    for r in &rows {
        let o = &r.outcome;
        let excess = o.worst_ratio - 1.0 - o.tolerance;
        if excess > worst_excess {
            worst_excess = excess;
            worst_label = format!("driver {} pair {}", r.driver, r.pair);
        }
        for (k, &(t, gap)) in o.snaps.iter().enumerate() {
            wtr.write_record([
                r.driver.to_string(),
                r.pair.to_string(),
                r.seed_a.to_string(),
                r.seed_b.to_string(),
                k.to_string(),
                fmt(t),
                fmt(o.initial_gap),
                fmt(gap),
                fmt(gap / o.initial_gap),
                fmt(o.tolerance),
            ])?;
        }
    }
    wtr.flush()?;
    drop(wtr);
    man.record_output(out_dir, "contraction_pairs.csv")?;

    man.assert_le(
        "l1_ratio_within_tolerance",
        worst_excess,
        0.0,
        &format!("worst pair: {worst_label}; ratio may not exceed 1 + tolerance"),
    );

    if cfg.check_refinement {
        // Fixed steps chosen stable for the fine level so halving dx and dt
        // together stays admissible for the explicit update.
        let dseed = child_seed(cfg.master_seed, "driver", 0);
        let seed_a = child_seed(cfg.master_seed, "data", 0);
        let seed_b = child_seed(cfg.master_seed, "data", 1);
        let dx_fine = 1.0 / (2 * cfg.nodes) as f64;
        let hi = 1.1_f64;
        let stiff = pme_solver::PhiTable::new(8.0, cfg.delta, cfg.m).max_deriv(0.1, hi) + cfg.eta;
        let dt0 = 0.3 * dx_fine * dx_fine / (2.0 * stiff);
        let mut margins = Vec::new();
        for (nodes, dt) in [(cfg.nodes, dt0), (2 * cfg.nodes, 0.5 * dt0)] {
            let g = data::line_grid(nodes)?;
            let solver = build_solver(nodes, cfg.m, DtPolicy::Fixed(dt), cfg)?;
            let path =
                noise_paths::brownian_path(dseed, cfg.horizon, cfg.driver_knots, 1);
            let u0a = data::positive_trig(&g, seed_a)?;
            let u0b = data::positive_trig(&g, seed_b)?;
            let outcome = run_pair(&solver, &u0a, &u0b, &path, cfg)?;
            margins.push((outcome.worst_ratio - 1.0).max(0.0));
        }
        man.assert_le(
            "violation_margin_shrinks_under_refinement",
            margins[1],
            (margins[0] / cfg.shrink_factor).max(cfg.margin_floor),
            &format!(
                "margin {} at n={} vs {} at n={}; floor {} absorbs roundoff since the \
                 monotone scheme is contractive at both levels",
                fmt(margins[0]),
                cfg.nodes,
                fmt(margins[1]),
                2 * cfg.nodes,
                fmt(cfg.margin_floor),
            ),
        );
    }

    // Signed fast-diffusion pair: recorded, not asserted.
    {
        let solver = build_solver(cfg.nodes, cfg.signed_m, DtPolicy::default(), cfg)?;
        let dseed = child_seed(cfg.master_seed, "signed-driver", 0);
        let path = noise_paths::brownian_path(dseed, cfg.horizon, cfg.driver_knots, 1);
        let u0a = data::signed_trig(&grid, child_seed(cfg.master_seed, "signed-data", 0))?;
        let u0b = data::signed_trig(&grid, child_seed(cfg.master_seed, "signed-data", 1))?;
        let outcome = run_pair(&solver, &u0a, &u0b, &path, cfg)?;
        man.note(format!(
            "signed data at m={}: worst L1 ratio {} (tolerance would be {}); \
             contraction for sign-changing fast diffusion is recorded here as an \
             observation, not asserted",
            cfg.signed_m,
            fmt(outcome.worst_ratio),
            fmt(outcome.tolerance),
        ));
    }

    man.wall_clock_seconds = started.elapsed().as_secs_f64();
    man.write(out_dir)?;
    Ok(man)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_rejects_bad_exponent() {
        let cfg = ContractionConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ContractionConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        let bad: ContractionConfig = serde_json::from_str(r#"{"m": -1.0}"#).unwrap();
        let err = bad.validate().unwrap_err().to_string();
        assert!(err.contains("diffusion exponent must be positive"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: Result<ContractionConfig, _> = serde_json::from_str(r#"{"nodes": 64, "wat": 1}"#);
        assert!(r.is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: ContractionConfig = serde_json::from_str(r#"{"m": 0.5}"#).unwrap();
        assert_eq!(cfg.m, 0.5);
        assert_eq!(cfg.nodes, ContractionConfig::default().nodes);
    }

    #[test]
    fn small_campaign_contracts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ContractionConfig {
            nodes: 64,
            drivers: 2,
            pairs_per_driver: 2,
            check_refinement: false,
            ..ContractionConfig::default()
        };
        let man = run(&cfg, dir.path()).unwrap();
        assert!(man.all_passed(), "failed: {:?}", man.failed_names());
        assert!(man.outputs.contains_key("contraction_pairs.csv"));
        assert_eq!(man.notes.len(), 1);
    }
}
