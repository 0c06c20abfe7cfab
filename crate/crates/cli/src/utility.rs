//! Non-campaign subcommands: single solves, characteristic traces, signature
//! reports, and kinetic analysis of one trajectory. Each writes the same
//! manifest format as the experiment campaigns, so `replay` re-runs them
//! from the embedded configuration and checks digests the same way.

use characteristics::{
    check_sign_preservation, flow_backward, flow_forward, flow_jacobian, flow_trajectory,
    FlowPoint,
};
use experiments::data::{self, fmt};
use experiments::manifest::RunManifest;
use experiments::seeds::child_seed;
use experiments::ExperimentError;
use kinetic_analysis::{
    defect_measures, ibp_check, kinetic_function, singular_moment, w_s1_norm,
    weak_form_residual, write_estimator_csv, EstimatorRow, VelocityGrid, WeakFormConfig,
};
use noise_paths::{brownian_path, fbm_path, DrivingPath, RoughLift};
use pme_solver::{write_field_binary, write_snapshot_csv, Solver, SolverConfig, Trajectory};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

pub const UTILITY_NAMES: [&str; 4] = ["solve", "characteristics", "signature", "analyze"];

/// Dispatch a utility subcommand from its JSON configuration.
pub fn run_utility(
    name: &str,
    config: Value,
    out_dir: &Path,
) -> Result<RunManifest, ExperimentError> {
    match name {
        "solve" => run_solve(&serde_json::from_value(config)?, out_dir),
        "characteristics" => run_characteristics(&serde_json::from_value(config)?, out_dir),
        "signature" => run_signature(&serde_json::from_value(config)?, out_dir),
        "analyze" => run_analyze(&serde_json::from_value(config)?, out_dir),
        other => Err(ExperimentError::UnknownExperiment(other.to_string())),
    }
}

/// Driving-path family for the utility runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverSpec {
    Brownian,
    Fbm { hurst: f64 },
    Zero,
    Linear { velocity: Vec<f64> },
}

impl Default for DriverSpec {
    fn default() -> Self {
        DriverSpec::Brownian
    }
}

impl DriverSpec {
    fn build(
        &self,
        seed: u64,
        horizon: f64,
        knots: usize,
        dims: usize,
    ) -> Result<DrivingPath, ExperimentError> {
        match self {
            DriverSpec::Brownian => Ok(brownian_path(seed, horizon, knots, dims)),
            DriverSpec::Fbm { hurst } => Ok(fbm_path(seed, *hurst, horizon, knots, dims)?),
            DriverSpec::Zero => Ok(DrivingPath::zero(horizon, dims)),
            DriverSpec::Linear { velocity } => {
                if velocity.len() != dims {
                    return Err(ExperimentError::BadConfig(format!(
                        "linear driver needs {dims} velocity component(s), got {}",
                        velocity.len()
                    )));
                }
                Ok(DrivingPath::linear(velocity, horizon))
            }
        }
    }

    fn describe(&self, seed: u64, knots: usize, horizon: f64) -> String {
        match self {
            DriverSpec::Brownian => {
                format!("brownian seed={seed}, {knots} knots, horizon={horizon}")
            }
            DriverSpec::Fbm { hurst } => {
                format!("fbm H={hurst} seed={seed}, {knots} knots, horizon={horizon}")
            }
            DriverSpec::Zero => format!("zero path, horizon={horizon}"),
            DriverSpec::Linear { velocity } => {
                format!("linear velocity={velocity:?}, horizon={horizon}")
            }
        }
    }
}

/// Initial datum family for the utility runs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    /// Compactly supported parabola, mass 1/3.
    #[default]
    Bump,
    /// Seeded strictly positive trigonometric profile.
    Trig,
}

impl InitialSpec {
    fn build(
        &self,
        grid: &torus_core::TorusGrid,
        seed: u64,
    ) -> Result<torus_core::ScalarField, ExperimentError> {
        match self {
            InitialSpec::Bump => data::bump_profile(grid),
            InitialSpec::Trig => data::positive_trig(grid, child_seed(seed, "data", 0)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub nodes: usize,
    pub m: f64,
    pub eta: f64,
    pub delta: f64,
    pub kappa: f64,
    pub horizon: f64,
    pub snapshots: usize,
    pub seed: u64,
    pub driver_knots: usize,
    pub driver: DriverSpec,
    pub initial: InitialSpec,
    /// Relative running mass deviation allowed before the run fails.
    pub mass_tol: f64,
    /// Also dump each snapshot in the binary column-major format.
    pub binary_dumps: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            nodes: 128,
            m: 2.0,
            eta: 0.0,
            delta: 1e-3,
            kappa: 0.5,
            horizon: 0.1,
            snapshots: 5,
            seed: 11,
            driver_knots: 17,
            driver: DriverSpec::default(),
            initial: InitialSpec::default(),
            mass_tol: 1e-10,
            binary_dumps: true,
        }
    }
}

fn solve_trajectory(cfg: &SolveConfig) -> Result<(Trajectory, DrivingPath), ExperimentError> {
    ExperimentError::check_exponent(cfg.m)?;
    let grid = data::line_grid(cfg.nodes)?;
    let u0 = cfg.initial.build(&grid, cfg.seed)?;
    let path = cfg.driver.build(
        child_seed(cfg.seed, "driver", 0),
        cfg.horizon,
        cfg.driver_knots,
        1,
    )?;
    let mut sc = SolverConfig::new(grid, cfg.m, cfg.horizon);
    sc.eta = cfg.eta;
    sc.delta = cfg.delta;
    sc.snapshot_times = data::time_lattice(cfg.horizon, cfg.snapshots);
    let solver = Solver::new(sc, coefficients::FluxCoefficients::separable_sine(cfg.kappa))?;
    Ok((solver.solve(&u0, &path)?, path))
}

fn run_solve(cfg: &SolveConfig, out_dir: &Path) -> Result<RunManifest, ExperimentError> {
    let started = Instant::now();
    let run_id = format!("solve_m{}_s{}", cfg.m, cfg.seed);
    let mut man = RunManifest::new("solve", &run_id, cfg, cfg.seed)?;
    man.grid = format!("torus[0,1) dim=1 n={}", cfg.nodes);
    man.driver = cfg.driver.describe(child_seed(cfg.seed, "driver", 0), cfg.driver_knots, cfg.horizon);
    man.child_seeds.push(child_seed(cfg.seed, "driver", 0));

    let (traj, _path) = solve_trajectory(cfg)?;
    let mass0 = data::mass(&traj.snaps[0].field);

    for (k, snap) in traj.snaps.iter().enumerate() {
        let csv_name = format!("snapshot_{k:03}.csv");
        write_snapshot_csv(File::create(out_dir.join(&csv_name))?, &snap.field, snap.t)?;
        man.record_output(out_dir, &csv_name)?;
        if cfg.binary_dumps {
            let bin_name = format!("snapshot_{k:03}.rpme");
            write_field_binary(File::create(out_dir.join(&bin_name))?, &snap.field)?;
            man.record_output(out_dir, &bin_name)?;
        }
    }

    let mut dat = File::create(out_dir.join("mass_series.dat"))?;
    for snap in &traj.snaps {
        writeln!(dat, "{} {}", fmt(snap.t), fmt(data::mass(&snap.field)))?;
    }
    drop(dat);
    man.record_output(out_dir, "mass_series.dat")?;

    man.assert_le(
        "mass_budget_within_tol",
        traj.max_mass_dev / mass0.abs().max(f64::MIN_POSITIVE),
        cfg.mass_tol,
        "largest running deviation of the spatial integral, relative to t=0",
    );
    man.note(format!("{} steps, initial mass {}", traj.steps, fmt(mass0)));
    man.wall_clock_seconds = started.elapsed().as_secs_f64();
    man.write(out_dir)?;
    Ok(man)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CharacteristicsConfig {
    pub seed: u64,
    pub horizon: f64,
    pub driver_knots: usize,
    pub kappa: f64,
    pub n_points: usize,
    pub flow_dt: f64,
    /// Rows per traced point in the trajectory table.
    pub snapshots: usize,
    pub inverse_tol: f64,
    pub det_tol: f64,
    pub sign_samples: usize,
}

impl Default for CharacteristicsConfig {
    fn default() -> Self {
        CharacteristicsConfig {
            seed: 5,
            horizon: 0.5,
            driver_knots: 33,
            kappa: 0.5,
            n_points: 8,
            flow_dt: 1e-3,
            snapshots: 16,
            inverse_tol: 1e-8,
            det_tol: 1e-5,
            sign_samples: 1000,
        }
    }
}

impl CharacteristicsConfig {
    fn points(&self) -> Vec<FlowPoint> {
        (0..self.n_points)
            .map(|i| {
                let x = (i as f64 + 0.5) / self.n_points as f64;
                let xi = (0.4 + 0.05 * i as f64) * if i % 2 == 0 { 1.0 } else { -1.0 };
                FlowPoint::new(x, xi)
            })
            .collect()
    }
}

fn run_characteristics(
    cfg: &CharacteristicsConfig,
    out_dir: &Path,
) -> Result<RunManifest, ExperimentError> {
    if cfg.n_points == 0 || cfg.snapshots == 0 {
        return Err(ExperimentError::BadConfig(
            "need at least one traced point and one snapshot".into(),
        ));
    }
    let started = Instant::now();
    let run_id = format!("characteristics_s{}", cfg.seed);
    let mut man = RunManifest::new("characteristics", &run_id, cfg, cfg.seed)?;
    let seed = child_seed(cfg.seed, "driver", 0);
    let path = brownian_path(seed, cfg.horizon, cfg.driver_knots, 1);
    man.driver = format!("brownian seed={seed}, {} knots, horizon={}", cfg.driver_knots, cfg.horizon);
    man.grid = "flow samples on torus[0,1) x R".into();
    man.child_seeds.push(seed);
    let coeffs = coefficients::FluxCoefficients::separable_sine(cfg.kappa);

    let mut wtr = csv::Writer::from_path(out_dir.join("flow_trajectories.csv"))?;
    wtr.write_record(["point", "t", "x", "xi"])?;
    let mut worst_inverse: f64 = 0.0;
    let mut worst_det: f64 = 0.0;
    for (i, p) in cfg.points().iter().enumerate() {
        let rows = flow_trajectory(
            *p,
            0.0,
            cfg.horizon,
            &path,
            &coeffs,
            cfg.flow_dt,
            cfg.snapshots,
            None::<File>,
        )?;
        for (t, q) in &rows {
            wtr.write_record([i.to_string(), fmt(*t), fmt(q.x), fmt(q.xi)])?;
        }
        let fwd = flow_forward(*p, 0.0, cfg.horizon, &path, &coeffs, cfg.flow_dt)?;
        let back = flow_backward(fwd, 0.0, cfg.horizon, &path, &coeffs, cfg.flow_dt)?;
        worst_inverse = worst_inverse.max(back.distance(p));
        let jac = flow_jacobian(*p, 0.0, cfg.horizon, &path, &coeffs, cfg.flow_dt)?;
        worst_det = worst_det.max((jac.det() - 1.0).abs());
    }
    wtr.flush()?;
    drop(wtr);
    man.record_output(out_dir, "flow_trajectories.csv")?;

    let signs: Vec<FlowPoint> = (0..cfg.sign_samples)
        .map(|i| {
            let x = (i as f64 + 0.5) / cfg.sign_samples as f64;
            let xi = (0.05 + (i % 61) as f64 / 40.0) * if i % 2 == 0 { 1.0 } else { -1.0 };
            FlowPoint::new(x, xi)
        })
        .collect();
    let report =
        check_sign_preservation(&signs, 0.0, cfg.horizon, &path, &coeffs, cfg.flow_dt)?;

    man.assert_le(
        "inverse_composition_small",
        worst_inverse,
        cfg.inverse_tol,
        "forward flow then backward flow must return each start point",
    );
    man.assert_le(
        "volume_preserved",
        worst_det,
        cfg.det_tol,
        "flow Jacobian determinant stays at 1",
    );
    man.assert_le(
        "sign_preserved_everywhere",
        report.violations as f64,
        0.0,
        &format!("velocity sign flips over {} samples", report.checked),
    );
    man.wall_clock_seconds = started.elapsed().as_secs_f64();
    man.write(out_dir)?;
    Ok(man)
}

/// Driving path for the signature report; the L-path's area is exactly 1/2.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignatureDriver {
    LPath,
    Brownian { seed: u64, knots: usize },
}

impl Default for SignatureDriver {
    fn default() -> Self {
        SignatureDriver::LPath
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignatureConfig {
    pub driver: SignatureDriver,
    pub horizon: f64,
    pub tol: f64,
}

impl Default for SignatureConfig {
    fn default() -> Self {
        SignatureConfig { driver: SignatureDriver::default(), horizon: 1.0, tol: 1e-12 }
    }
}

fn run_signature(cfg: &SignatureConfig, out_dir: &Path) -> Result<RunManifest, ExperimentError> {
    let started = Instant::now();
    let (path, label, seed) = match &cfg.driver {
        SignatureDriver::LPath => {
            let t = cfg.horizon;
            let path = DrivingPath::from_knots(
                vec![0.0, 0.5 * t, t],
                vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0],
                2,
            )?;
            (path, "l_path".to_string(), 0)
        }
        SignatureDriver::Brownian { seed, knots } => {
            (brownian_path(*seed, cfg.horizon, *knots, 2), format!("brownian_s{seed}"), *seed)
        }
    };
    let run_id = format!("signature_{label}");
    let mut man = RunManifest::new("signature", &run_id, cfg, seed)?;
    man.driver = format!("{label}, horizon={}", cfg.horizon);
    man.grid = "level-2 truncated tensor algebra over R^2".into();

    let t1 = cfg.horizon;
    let lift = RoughLift::new(path.clone());
    let inc = lift.increment(0.0, t1);
    let l2 = lift.level2(0.0, t1);
    let area = lift.levy_area(0.0, t1);

    // Deterministic triple sweep for the multiplicativity defect.
    let fracs = [0.0, 0.17, 0.34, 0.52, 0.81, 1.0];
    let mut chen_worst: f64 = 0.0;
    for i in 0..fracs.len() {
        for j in i + 1..fracs.len() {
            for k in j + 1..fracs.len() {
                chen_worst = chen_worst
                    .max(lift.chen_defect(fracs[i] * t1, fracs[j] * t1, fracs[k] * t1));
            }
        }
    }
    let retraced = RoughLift::new(path.concat_retrace());
    let reversal = retraced.levy_area(0.0, 2.0 * t1).abs();

    let mut rows = vec![
        EstimatorRow::new("increment_0", "over [0,T]", inc[0], label.clone()),
        EstimatorRow::new("increment_1", "over [0,T]", inc[1], label.clone()),
        EstimatorRow::new("levy_area", "over [0,T]", area, label.clone()),
        EstimatorRow::new("chen_defect_worst", "20 ordered triples", chen_worst, label.clone()),
        EstimatorRow::new("reversal_area", "path followed by its retrace", reversal, label.clone()),
    ];
    for (idx, v) in l2.iter().enumerate() {
        rows.push(EstimatorRow::new(
            format!("level2_{}{}", idx / 2, idx % 2),
            "over [0,T]",
            *v,
            label.clone(),
        ));
    }
    write_estimator_csv(File::create(out_dir.join("signature_report.csv"))?, &rows)?;
    man.record_output(out_dir, "signature_report.csv")?;

    man.assert_le("chen_multiplicative", chen_worst, cfg.tol, "two-level Chen composition");
    man.assert_le("reversal_cancels", reversal, cfg.tol, "area of path times its reverse");
    if matches!(cfg.driver, SignatureDriver::LPath) {
        man.assert_le(
            "l_path_area_exactly_half",
            (area - 0.5).abs(),
            0.0,
            "closed-form area of the axis-aligned corner path",
        );
    }
    man.wall_clock_seconds = started.elapsed().as_secs_f64();
    man.write(out_dir)?;
    Ok(man)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub nodes: usize,
    pub m: f64,
    pub eta: f64,
    pub delta: f64,
    pub kappa: f64,
    pub horizon: f64,
    pub snapshots: usize,
    pub seed: u64,
    pub driver_knots: usize,
    pub xi_cells: usize,
    /// Fractional Sobolev order for the kinetic-function seminorm.
    pub sobolev_s: f64,
    /// Exponent of the singular velocity moment of the parabolic defect.
    pub gamma: f64,
    pub ibp_tol: f64,
    pub weak_form_tol: f64,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            nodes: 128,
            m: 2.0,
            eta: 0.01,
            delta: 1e-3,
            kappa: 0.5,
            horizon: 0.05,
            snapshots: 5,
            seed: 12,
            driver_knots: 17,
            xi_cells: 64,
            sobolev_s: 0.3,
            gamma: -1.0,
            ibp_tol: 1e-2,
            weak_form_tol: 5e-2,
        }
    }
}

fn smooth_bump(r: f64) -> f64 {
    if r.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

fn run_analyze(cfg: &AnalyzeConfig, out_dir: &Path) -> Result<RunManifest, ExperimentError> {
    let started = Instant::now();
    let run_id = format!("analyze_m{}_s{}", cfg.m, cfg.seed);
    let mut man = RunManifest::new("analyze", &run_id, cfg, cfg.seed)?;
    man.grid = format!("torus[0,1) dim=1 n={}, {} velocity cells", cfg.nodes, cfg.xi_cells);

    let solve_cfg = SolveConfig {
        nodes: cfg.nodes,
        m: cfg.m,
        eta: cfg.eta,
        delta: cfg.delta,
        kappa: cfg.kappa,
        horizon: cfg.horizon,
        snapshots: cfg.snapshots,
        seed: cfg.seed,
        driver_knots: cfg.driver_knots,
        driver: DriverSpec::Brownian,
        initial: InitialSpec::Bump,
        ..SolveConfig::default()
    };
    let (traj, path) = solve_trajectory(&solve_cfg)?;
    man.driver = solve_cfg.driver.describe(
        child_seed(cfg.seed, "driver", 0),
        cfg.driver_knots,
        cfg.horizon,
    );
    man.child_seeds.push(child_seed(cfg.seed, "driver", 0));
    let final_field = &traj.snaps.last().expect("at least one snapshot").field;

    let (lo, hi) = traj
        .snaps
        .iter()
        .flat_map(|s| s.field.values())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let pad = 0.1 * (hi - lo).max(1e-3);
    let xi = VelocityGrid::new(lo - pad, hi + pad, cfg.xi_cells)?;

    let kg = kinetic_function(final_field, &xi)?;
    let bv = kg.bv_xi_norms();
    let bv_mean = bv.iter().sum::<f64>() / bv.len() as f64;
    let bv_max = bv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sobolev = w_s1_norm(&kg, cfg.sobolev_s)?;

    let mut dat = File::create(out_dir.join("bv_profile.dat"))?;
    for (i, v) in bv.iter().enumerate() {
        writeln!(dat, "{} {}", fmt((i as f64 + 0.5) / bv.len() as f64), fmt(*v))?;
    }
    drop(dat);
    man.record_output(out_dir, "bv_profile.dat")?;

    let (entropy, parabolic) = defect_measures(&traj, cfg.m, cfg.eta);
    entropy.to_csv(File::create(out_dir.join("entropy_defect.csv"))?)?;
    parabolic.to_csv(File::create(out_dir.join("parabolic_defect.csv"))?)?;
    man.record_output(out_dir, "entropy_defect.csv")?;
    man.record_output(out_dir, "parabolic_defect.csv")?;
    let moment = singular_moment(&parabolic, cfg.gamma);

    let coeffs = coefficients::FluxCoefficients::separable_sine(cfg.kappa);
    let mid = 0.5 * (lo + hi);
    let halfwidth = 0.5 * (hi - lo).max(1e-3);
    let rho0 = move |x: f64, v: f64| {
        let dx = (x - 0.5).abs();
        let dx = dx.min(1.0 - dx);
        smooth_bump(dx / 0.3) * smooth_bump((v - mid) / halfwidth)
    };
    let wf = weak_form_residual(
        &traj,
        &xi,
        &rho0,
        0.0,
        cfg.horizon,
        &path,
        &coeffs,
        &WeakFormConfig::new(cfg.m, cfg.eta),
    )?;

    let psi = |x: f64, v: f64| (std::f64::consts::TAU * x).sin() * smooth_bump((v - mid) / halfwidth);
    let psi_dx = |x: f64, v: f64| {
        std::f64::consts::TAU * (std::f64::consts::TAU * x).cos() * smooth_bump((v - mid) / halfwidth)
    };
    let ibp = ibp_check(final_field, &xi, cfg.m, &psi, &psi_dx)?;

    let res = format!("n={} xi={}", cfg.nodes, cfg.xi_cells);
    let rows = vec![
        EstimatorRow::new("bv_xi_mean", "final snapshot", bv_mean, res.clone()),
        EstimatorRow::new("bv_xi_max", "final snapshot", bv_max, res.clone()),
        EstimatorRow::new("w_s1", format!("s={}", cfg.sobolev_s), sobolev, res.clone()),
        EstimatorRow::new("entropy_defect_mass", "whole trajectory", entropy.total_mass(), res.clone()),
        EstimatorRow::new("parabolic_defect_mass", "whole trajectory", parabolic.total_mass(), res.clone()),
        EstimatorRow::new(
            "singular_moment",
            format!("gamma={} clipped={}", cfg.gamma, moment.clipped),
            moment.value,
            res.clone(),
        ),
        EstimatorRow::new("weak_form_residual", "transported test function", wf, res.clone()),
        EstimatorRow::new("ibp_residual", "centered difference", ibp, res.clone()),
    ];
    write_estimator_csv(File::create(out_dir.join("estimators.csv"))?, &rows)?;
    man.record_output(out_dir, "estimators.csv")?;

    man.assert_le(
        "ibp_residual_small",
        ibp,
        cfg.ibp_tol,
        "integration by parts in x against exact cell averages",
    );
    man.assert_le(
        "weak_form_residual_small",
        wf,
        cfg.weak_form_tol,
        "kinetic weak form with the transported test function",
    );
    man.note(format!(
        "singular moment gamma={}: {} ({} cells clipped)",
        cfg.gamma,
        fmt(moment.value),
        moment.clipped
    ));
    man.wall_clock_seconds = started.elapsed().as_secs_f64();
    man.write(out_dir)?;
    Ok(man)
}
