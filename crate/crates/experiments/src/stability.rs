//! Flow-map stability in the rough metric: the characteristic flow's
//! deviation under a driver perturbation must be linearly controlled by the
//! rough distance between the drivers. A Lipschitz constant is calibrated
//! on half the pairs and the bound is held out against the other half; a
//! constant-b control recovers its exact linear law.

use crate::data::fmt;
use crate::manifest::RunManifest;
use crate::seeds::child_seed;
use crate::ExperimentError;
use characteristics::{flow_stability, FlowPoint};
use noise_paths::{brownian_path, dyadic_refine};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub alpha: f64,
    pub kappa: f64,
    pub horizon: f64,
    /// Total driver pairs; the first `calibration` fit the constant.
    pub pairs: usize,
    pub calibration: usize,
    /// Held-out pairs must satisfy distance <= holdout_factor * C * metric.
    pub holdout_factor: f64,
    /// Dyadic level of each pair's fine path.
    pub fine_level: u32,
    pub samples_per_pair: usize,
    pub eval_times: usize,
    pub flow_dt: f64,
    pub master_seed: u64,
    /// Slope of the constant-b control field.
    pub control_b: f64,
    /// Relative recovery tolerance for the control's Lipschitz constant.
    pub control_tol: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            alpha: 0.4,
            kappa: 0.5,
            horizon: 0.25,
            pairs: 20,
            calibration: 10,
            holdout_factor: 2.0,
            fine_level: 7,
            samples_per_pair: 12,
            eval_times: 8,
            flow_dt: 1e-3,
            master_seed: 8,
            control_b: 0.8,
            control_tol: 0.01,
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.calibration == 0 || self.calibration >= self.pairs {
            return Err(ExperimentError::BadConfig(format!(
                "calibration split {} must leave a nonempty holdout of {} pairs",
                self.calibration, self.pairs
            )));
        }
        if !(self.alpha > 1.0 / 3.0 && self.alpha < 0.5) {
            return Err(ExperimentError::BadConfig(format!(
                "Hoelder exponent must lie in (1/3, 1/2) for a Brownian driver, got {}",
                self.alpha
            )));
        }
        if self.fine_level < 2 || self.fine_level > 10 {
            return Err(ExperimentError::BadConfig("fine level out of range 2..=10".into()));
        }
        Ok(())
    }

    fn sample_points(&self) -> Vec<FlowPoint> {
        (0..self.samples_per_pair)
            .map(|i| {
                let x = (i as f64 + 0.5) / self.samples_per_pair as f64;
                let xi = (0.3 + 0.07 * i as f64) * if i % 2 == 0 { 1.0 } else { -1.0 };
                FlowPoint::new(x, xi)
            })
            .collect()
    }

    fn times(&self) -> Vec<f64> {
        // Odd denominator keeps the evaluation times off every dyadic knot
        // lattice; a refined path agrees with its base exactly at shared
        // knots, so dyadic times would see a zero driver gap.
        let den = (4 * self.eval_times + 3) as f64;
        (1..=self.eval_times)
            .map(|j| self.horizon * (4 * j + 1) as f64 / den)
            .collect()
    }
}

struct PairRow {
    pair: usize,
    coarse_level: u32,
    worst: f64,
    metric: f64,
}

pub fn run(cfg: &StabilityConfig, out_dir: &Path) -> Result<RunManifest, ExperimentError> {
    cfg.validate()?;
    let started = Instant::now();
    let run_id = format!("flow_stability_a{}_s{}", cfg.alpha, cfg.master_seed);
    let mut man = RunManifest::new("flow-stability", &run_id, cfg, cfg.master_seed)?;
    man.grid = "continuum torus (characteristic flow, no mesh)".into();
    man.driver = format!(
        "brownian x{}, fine level {}, coarse offsets cycling 1..3, horizon={}",
        cfg.pairs, cfg.fine_level, cfg.horizon
    );
    let samples = cfg.sample_points();
    let times = cfg.times();
    let coeffs = coefficients::FluxCoefficients::separable_sine(cfg.kappa);

    let seeds: Vec<u64> =
        (0..cfg.pairs).map(|i| child_seed(cfg.master_seed, "pair", i as u64)).collect();
    man.child_seeds = seeds.clone();

    let rows: Vec<PairRow> = (0..cfg.pairs)
        .into_par_iter()
        .map(|i| -> Result<PairRow, ExperimentError> {
            let knots = (1usize << cfg.fine_level) + 1;
            let fine = brownian_path(seeds[i], cfg.horizon, knots, 1);
            let coarse_level = cfg.fine_level.saturating_sub(1 + (i % 3) as u32).max(1);
            let coarse = dyadic_refine(&fine, coarse_level);
            let (worst, metric) =
                flow_stability(&fine, &coarse, cfg.alpha, &coeffs, &samples, &times, cfg.flow_dt)?;
            Ok(PairRow { pair: i, coarse_level, worst, metric })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut wtr = csv::Writer::from_path(out_dir.join("stability_pairs.csv"))?;
    wtr.write_record(["pair", "role", "coarse_level", "flow_distance", "rough_metric", "ratio"])?;
    let mut c_cal = 0.0f64;
    let mut worst_holdout = 0.0f64;
    for r in &rows {
        let ratio = r.worst / r.metric;
        let role = if r.pair < cfg.calibration { "calibrate" } else { "holdout" };
        if r.pair < cfg.calibration {
            c_cal = c_cal.max(ratio);
        } else {
            worst_holdout = worst_holdout.max(ratio);
        }
        wtr.write_record([
            r.pair.to_string(),
            role.to_string(),
            r.coarse_level.to_string(),
            fmt(r.worst),
            fmt(r.metric),
            fmt(ratio),
        ])?;
    }
    wtr.flush()?;
    drop(wtr);
    man.record_output(out_dir, "stability_pairs.csv")?;

    man.assert_that(
        "calibration_constant_positive",
        c_cal.is_finite() && c_cal > 0.0,
        &format!("C = {c_cal:.6e} from {} pairs", cfg.calibration),
    );
    man.assert_le(
        "holdout_within_linear_bound",
        worst_holdout / c_cal,
        cfg.holdout_factor,
        "every held-out pair must satisfy distance <= factor * C * metric",
    );

    // Identical drivers: zero distance against a zero bound.
    {
        let knots = (1usize << cfg.fine_level) + 1;
        let z = brownian_path(child_seed(cfg.master_seed, "identical", 0), cfg.horizon, knots, 1);
        let (worst, _) =
            flow_stability(&z, &z, cfg.alpha, &coeffs, &samples, &times, cfg.flow_dt)?;
        man.assert_le("identical_drivers_coincide", worst, 0.0, "same path on both sides");
    }

    // Constant-b control: the flow is x - B * (z(t) - z(0)), so the worst
    // deviation over any time set is exactly |B| times the driver gap there.
    {
        let knots = (1usize << cfg.fine_level) + 1;
        let seed = child_seed(cfg.master_seed, "control", 0);
        let fine = brownian_path(seed, cfg.horizon, knots, 1);
        let coarse = dyadic_refine(&fine, cfg.fine_level - 1);
        let control = coefficients::FluxCoefficients::constant_b(cfg.control_b);
        let (worst, _) =
            flow_stability(&fine, &coarse, cfg.alpha, &control, &samples, &times, cfg.flow_dt)?;
        let sup_dz = times
            .iter()
            .map(|&t| (fine.value_dim(t, 0) - coarse.value_dim(t, 0)).abs())
            .fold(0.0f64, f64::max);
        let recovered = worst / sup_dz;
        man.assert_le(
            "constant_b_recovers_its_slope",
            (recovered - cfg.control_b).abs() / cfg.control_b,
            cfg.control_tol,
            &format!("recovered {recovered:.8} vs slope {}", cfg.control_b),
        );
    }

    man.wall_clock_seconds = started.elapsed().as_secs_f64();
    man.write(out_dir)?;
    Ok(man)
}
