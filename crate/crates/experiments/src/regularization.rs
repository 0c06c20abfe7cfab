//! Vanishing viscosity: as the linear regularization is swept toward zero,
//! consecutive solutions must form a Cauchy sequence in the time-integrated
//! L1 distance while the stable energy quantity stays uniformly bounded,
//! with the entropy defect mass (the only eta-weighted term) decreasing.
//! The discrete energy ledger itself is audited on a grid-refinement ladder.

use crate::data::{self, fmt};
use crate::manifest::RunManifest;
use crate::seeds::child_seed;
use crate::ExperimentError;
use kinetic_analysis::defect_measures;
use pme_solver::{energy_ledger, Solver, SolverConfig, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularizationConfig {
    pub nodes: usize,
    pub m: f64,
    pub delta: f64,
    pub kappa: f64,
    pub horizon: f64,
    pub driver_knots: usize,
    pub master_seed: u64,
    /// Viscosity sweep, strictly decreasing.
    pub etas: Vec<f64>,
    pub snapshots: usize,
    /// Consecutive sweep gaps may grow by at most this factor.
    pub cauchy_slack: f64,
    /// max/min spread allowed for the stable energy quantity over the sweep.
    pub uniformity_factor: f64,
    /// Entropy defect mass must decrease with eta up to this factor.
    pub entropy_decrease_slack: f64,
    /// Grid sizes for the energy ledger audit (run at the largest eta).
    pub ledger_levels: Vec<usize>,
    /// Ledger residual bound at the second ledger level.
    pub ledger_tol: f64,
    /// Each ledger refinement must multiply the residual by at most this.
    pub ledger_shrink: f64,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig {
            nodes: 128,
            m: 2.0,
            delta: 1e-3,
            kappa: 0.5,
            horizon: 0.05,
            driver_knots: 9,
            master_seed: 4,
            etas: vec![1e-1, 3e-2, 1e-2, 3e-3],
            snapshots: 9,
            cauchy_slack: 1.0,
            uniformity_factor: 2.0,
            entropy_decrease_slack: 1.0,
            ledger_levels: vec![64, 128, 256],
            ledger_tol: 1e-3,
            ledger_shrink: 0.6,
        }
    }
}

impl RegularizationConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        ExperimentError::check_exponent(self.m)?;
        if self.etas.len() < 2 {
            return Err(ExperimentError::BadConfig("need at least two viscosities".into()));
        }
        for w in self.etas.windows(2) {
            if !(w[1] < w[0]) {
                return Err(ExperimentError::BadConfig(format!(
                    "viscosity sweep must decrease strictly, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for &e in &self.etas {
            if !(e > 0.0 && e < 1.0) {
                return Err(ExperimentError::BadConfig(format!(
                    "viscosity must lie in (0, 1), got {e}"
                )));
            }
        }
        if self.ledger_levels.len() < 2 {
            return Err(ExperimentError::BadConfig("need at least two ledger levels".into()));
        }
        Ok(())
    }
}

fn solve_one(
    cfg: &RegularizationConfig,
    nodes: usize,
    eta: f64,
    path: &noise_paths::DrivingPath,
) -> Result<Trajectory, ExperimentError> {
    let grid = data::line_grid(nodes)?;
    let u0 = torus_core::ScalarField::from_fn(grid.clone(), |x| {
        0.5 + 0.3 * (std::f64::consts::TAU * x[0]).sin()
    })?;
    let mut sc = SolverConfig::new(grid, cfg.m, cfg.horizon);
    sc.eta = eta;
    sc.delta = cfg.delta;
    sc.snapshot_times = data::time_lattice(cfg.horizon, cfg.snapshots);
    let solver = Solver::new(sc, coefficients::FluxCoefficients::separable_sine(cfg.kappa))?;
    Ok(solver.solve(&u0, path)?)
}

/// Time-integrated (trapezoid in t) L1 distance between two trajectories
/// sharing a snapshot lattice.
fn l1_txt_gap(a: &Trajectory, b: &Trajectory) -> Result<f64, ExperimentError> {
    let n = a.snaps.len().min(b.snaps.len());
    let mut acc = 0.0;
    for j in 0..n - 1 {
        let d0 = data::l1_distance(&a.snaps[j].field, &b.snaps[j].field)?;
        let d1 = data::l1_distance(&a.snaps[j + 1].field, &b.snaps[j + 1].field)?;
        acc += 0.5 * (d0 + d1) * (a.snaps[j + 1].t - a.snaps[j].t);
    }
    Ok(acc)
}

/// Stable energy quantity: sup-in-time L2 mass plus the total entropy and
/// parabolic defect masses.
fn stable_quantity(traj: &Trajectory, m: f64, eta: f64) -> (f64, f64, f64) {
    let sup_l2_sq = traj.max_l2 * traj.max_l2;
    let (entropy, parabolic) = defect_measures(traj, m, eta);
    (sup_l2_sq, entropy.total_mass(), parabolic.total_mass())
}

pub fn run(cfg: &RegularizationConfig, out_dir: &Path) -> Result<RunManifest, ExperimentError> {
    cfg.validate()?;
    let started = Instant::now();
    let run_id = format!("vanishing_reg_m{}_s{}", cfg.m, cfg.master_seed);
    let mut man = RunManifest::new("vanishing-reg", &run_id, cfg, cfg.master_seed)?;
    man.grid = format!("torus[0,1) dim=1 n={}", cfg.nodes);
    let dseed = child_seed(cfg.master_seed, "driver", 0);
    man.child_seeds.push(dseed);
    let path = noise_paths::brownian_path(dseed, cfg.horizon, cfg.driver_knots, 1);
    man.driver = format!("brownian, {} knots, horizon={}", cfg.driver_knots, cfg.horizon);

    let trajs: Vec<Trajectory> = cfg
        .etas
        .par_iter()
        .map(|&eta| solve_one(cfg, cfg.nodes, eta, &path))
        .collect::<Result<Vec<_>, _>>()?;

    let mut gaps = Vec::new();
    for w in trajs.windows(2) {
        gaps.push(l1_txt_gap(&w[0], &w[1])?);
    }
    let stats: Vec<(f64, f64, f64)> = trajs
        .iter()
        .zip(&cfg.etas)
        .map(|(t, &eta)| stable_quantity(t, cfg.m, eta))
        .collect();

    let mut wtr = csv::Writer::from_path(out_dir.join("regularization_sweep.csv"))?;
    wtr.write_record(["eta", "gap_to_next", "sup_l2_sq", "entropy_mass", "parabolic_mass"])?;
    for (i, &eta) in cfg.etas.iter().enumerate() {
        let gap_cell = if i < gaps.len() { fmt(gaps[i]) } else { String::new() };
        wtr.write_record([
            fmt(eta),
            gap_cell,
            fmt(stats[i].0),
            fmt(stats[i].1),
            fmt(stats[i].2),
        ])?;
    }
    wtr.flush()?;
    drop(wtr);
    man.record_output(out_dir, "regularization_sweep.csv")?;

    for i in 0..gaps.len() - 1 {
        man.assert_le(
            &format!("sweep_gap_cauchy_step_{i}"),
            gaps[i + 1] / gaps[i],
            cfg.cauchy_slack,
            &format!("L1 gap ({} -> {}) vs ({} -> {})",
                cfg.etas[i + 1], cfg.etas[i + 2], cfg.etas[i], cfg.etas[i + 1]),
        );
    }
    let totals: Vec<f64> = stats.iter().map(|s| s.0 + s.1 + s.2).collect();
    let hi = totals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = totals.iter().cloned().fold(f64::INFINITY, f64::min);
    man.assert_le(
        "stable_quantity_uniform_over_sweep",
        hi / lo,
        cfg.uniformity_factor,
        "sup-in-time L2 mass plus defect masses across the viscosity sweep",
    );
    for i in 0..stats.len() - 1 {
        man.assert_le(
            &format!("entropy_mass_decreases_step_{i}"),
            stats[i + 1].1 / stats[i].1.max(1e-300),
            cfg.entropy_decrease_slack,
            "the entropy defect carries the viscosity weight",
        );
    }

    // Energy ledger audit at the largest viscosity.
    let ledger: Vec<f64> = cfg
        .ledger_levels
        .par_iter()
        .map(|&n| solve_one(cfg, n, cfg.etas[0], &path).map(|t| energy_ledger(&t)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut wtr = csv::Writer::from_path(out_dir.join("energy_ledger.csv"))?;
    wtr.write_record(["nodes", "residual"])?;
    for (&n, &r) in cfg.ledger_levels.iter().zip(&ledger) {
        wtr.write_record([n.to_string(), fmt(r)])?;
    }
    wtr.flush()?;
    drop(wtr);
    man.record_output(out_dir, "energy_ledger.csv")?;

    let mid = 1.min(ledger.len() - 1);
    man.assert_le(
        "ledger_residual_small",
        ledger[mid],
        cfg.ledger_tol,
        &format!("relative energy defect at n={}", cfg.ledger_levels[mid]),
    );
    for i in 0..ledger.len() - 1 {
        man.assert_le(
            &format!("ledger_residual_shrinks_step_{i}"),
            ledger[i + 1],
            cfg.ledger_shrink * ledger[i],
            &format!(
                "n={} vs n={}",
                cfg.ledger_levels[i + 1],
                cfg.ledger_levels[i]
            ),
        );
    }

    man.wall_clock_seconds = started.elapsed().as_secs_f64();
    man.write(out_dir)?;
    Ok(man)
}
