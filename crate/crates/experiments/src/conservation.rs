//! Mass conservation campaign: the conservative flux form must preserve the
//! spatial integral to near roundoff for every exponent and noise coupling,
//! keep nonnegative data nonnegative, and keep the L1 norm of signed data
//! from growing.

use crate::data::{self, fmt};
use crate::manifest::RunManifest;
use crate::seeds::child_seed;
use crate::ExperimentError;
use pme_solver::{Solver, SolverConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MassConfig {
    pub nodes: usize,
    pub m_values: Vec<f64>,
    pub kappas: Vec<f64>,
    pub eta: f64,
    pub delta: f64,
    pub horizon: f64,
    pub driver_knots: usize,
    pub master_seed: u64,
    /// Allowed relative drift of the running mass.
    pub rel_tol: f64,
    /// Allowed dip below zero for nonnegative data.
    pub negativity_tol: f64,
    /// Allowed relative growth of the signed-data L1 norm.
    pub signed_l1_slack: f64,
    /// Exponents for the signed-data branch.
    pub signed_m_values: Vec<f64>,
}

impl Default for MassConfig {
    fn default() -> Self {
        MassConfig {
            nodes: 256,
            m_values: vec![0.5, 1.0, 2.0],
            kappas: vec![0.0, 0.5],
            eta: 0.0,
            delta: 1e-3,
            horizon: 0.01,
            driver_knots: 9,
            master_seed: 2,
            rel_tol: 1e-10,
            negativity_tol: 1e-10,
            signed_l1_slack: 1e-12,
            signed_m_values: vec![1.0, 2.0],
        }
    }
}

impl MassConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        for &m in self.m_values.iter().chain(&self.signed_m_values) {
            ExperimentError::check_exponent(m)?;
        }
        if self.m_values.is_empty() {
            return Err(ExperimentError::BadConfig("need at least one exponent".into()));
        }
        if self.nodes < 8 || !(self.horizon > 0.0) {
            return Err(ExperimentError::BadConfig(
                "need at least 8 nodes and a positive horizon".into(),
            ));
        }
        Ok(())
    }
}

struct CaseRow {
    label: String,
    m: f64,
    kappa: f64,
    mass0: f64,
    mass_final: f64,
    running_rel_dev: f64,
    min_value: f64,
    l1_initial: f64,
    l1_final: f64,
}

fn solve_case(
    cfg: &MassConfig,
    m: f64,
    kappa: f64,
    signed: bool,
    case: u64,
) -> Result<CaseRow, ExperimentError> {
    let grid = data::line_grid(cfg.nodes)?;
    let u0 = if signed {
        data::signed_trig(&grid, child_seed(cfg.master_seed, "signed-data", case))?
    } else {
        data::bump_profile(&grid)?
    };
    let mut sc = SolverConfig::new(grid, m, cfg.horizon);
    sc.eta = cfg.eta;
    sc.delta = cfg.delta;
    sc.snapshot_times = data::time_lattice(cfg.horizon, 3);
    let solver = Solver::new(sc, coefficients::FluxCoefficients::separable_sine(kappa))?;
    let path = noise_paths::brownian_path(
        child_seed(cfg.master_seed, "driver", case),
        cfg.horizon,
        cfg.driver_knots,
        1,
    );
    let traj = solver.solve(&u0, &path)?;
    let mass0 = data::mass(&u0);
    let min_value = traj
        .snaps
        .iter()
        .flat_map(|s| s.field.values())
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let scale = if signed { data::l1_norm(&u0) } else { mass0 };
    Ok(CaseRow {
        label: format!("{}_m{}_k{}", if signed { "signed" } else { "bump" }, m, kappa),
        m,
        kappa,
        mass0,
        mass_final: data::mass(traj.final_field()),
        running_rel_dev: traj.max_mass_dev / scale.abs().max(1e-30),
        min_value,
        l1_initial: data::l1_norm(&u0),
        l1_final: data::l1_norm(traj.final_field()),
    })
}

pub fn run(cfg: &MassConfig, out_dir: &Path) -> Result<RunManifest, ExperimentError> {
    cfg.validate()?;
    let started = Instant::now();
    let run_id = format!("mass_s{}", cfg.master_seed);
    let mut man = RunManifest::new("mass", &run_id, cfg, cfg.master_seed)?;
    man.grid = format!("torus[0,1) dim=1 n={}", cfg.nodes);
    man.driver = format!(
        "brownian per case, {} knots, horizon={}",
        cfg.driver_knots, cfg.horizon
    );

    let mut cases: Vec<(f64, f64, bool)> = Vec::new();
    for &m in &cfg.m_values {
        for &k in &cfg.kappas {
            cases.push((m, k, false));
        }
    }
    for &m in &cfg.signed_m_values {
        for &k in &cfg.kappas {
            cases.push((m, k, true));
        }
    }
    for i in 0..cases.len() as u64 {
        man.child_seeds.push(child_seed(cfg.master_seed, "driver", i));
    }

    let rows: Vec<CaseRow> = cases
        .par_iter()
        .enumerate()
        .map(|(i, &(m, k, signed))| solve_case(cfg, m, k, signed, i as u64))
        .collect::<Result<Vec<_>, _>>()?;

    let mut wtr = csv::Writer::from_path(out_dir.join("mass_cases.csv"))?;
    wtr.write_record([
        "case", "m", "kappa", "mass_initial", "mass_final", "running_rel_dev", "min_value",
        "l1_initial", "l1_final",
    ])?;
    for r in &rows {
        wtr.write_record([
            r.label.clone(),
            fmt(r.m),
            fmt(r.kappa),
            fmt(r.mass0),
            fmt(r.mass_final),
            fmt(r.running_rel_dev),
            fmt(r.min_value),
            fmt(r.l1_initial),
            fmt(r.l1_final),
        ])?;
    }
    wtr.flush()?;
    drop(wtr);
    man.record_output(out_dir, "mass_cases.csv")?;

    for r in &rows {
        let signed = r.label.starts_with("signed");
        let scale = if signed { r.l1_initial } else { r.mass0 };
        man.assert_le(
            &format!("mass_conserved_{}", r.label),
            (r.mass_final - r.mass0).abs() / scale.max(1e-30),
            cfg.rel_tol,
            "final mass relative to the initial integral (signed cases scale by the L1 norm)",
        );
        man.assert_le(
            &format!("running_mass_stable_{}", r.label),
            r.running_rel_dev,
            cfg.rel_tol,
            "largest running deviation across all steps",
        );
        if signed {
            man.assert_le(
                &format!("l1_never_grows_{}", r.label),
                r.l1_final / r.l1_initial - 1.0,
                cfg.signed_l1_slack,
                "comparison with the zero solution bounds the signed L1 norm",
            );
        } else {
            man.assert_le(
                &format!("stays_nonnegative_{}", r.label),
                -r.min_value,
                cfg.negativity_tol,
                "monotone update preserves the nonnegative cone",
            );
        }
    }

    man.wall_clock_seconds = started.elapsed().as_secs_f64();
    man.write(out_dir)?;
    Ok(man)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = MassConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: MassConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn small_campaign_conserves_mass() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = MassConfig {
            nodes: 64,
            m_values: vec![1.0],
            kappas: vec![0.5],
            signed_m_values: vec![2.0],
            ..MassConfig::default()
        };
        let man = run(&cfg, dir.path()).unwrap();
        assert!(man.all_passed(), "failed: {:?}", man.failed_names());
    }
}
