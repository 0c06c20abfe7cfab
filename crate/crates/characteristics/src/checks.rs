//! Structural checks on the flows: sign preservation, velocity
//! comparability, and stability with respect to the driver.

use crate::flow::{flow_forward, FlowPoint};
use crate::FlowError;
use coefficients::FluxCoefficients;
use noise_paths::{rough_metric, DrivingPath, NoiseError, RoughLift};

/// Outcome of a sign-preservation sweep.
#[derive(Debug, Clone)]
pub struct SignReport {
    pub checked: usize,
    pub violations: usize,
    /// First violating start point and its terminal velocity.
    pub first_violation: Option<(FlowPoint, f64)>,
}

impl SignReport {
    pub fn all_preserved(&self) -> bool {
        self.violations == 0
    }
}

/// Flow every sample from t0 to t1 and verify sgn(Xi) = sgn(xi), with
/// Xi = 0 exactly when xi = 0.
pub fn check_sign_preservation(
    samples: &[FlowPoint],
    t0: f64,
    t1: f64,
    path: &DrivingPath,
    coeffs: &FluxCoefficients,
    dt: f64,
) -> Result<SignReport, FlowError> {
    let mut report = SignReport { checked: 0, violations: 0, first_violation: None };
    for &p in samples {
        let q = flow_forward(p, t0, t1, path, coeffs, dt)?;
        report.checked += 1;
        let ok = if p.xi == 0.0 {
            q.xi == 0.0
        } else {
            q.xi * p.xi > 0.0
        };
        if !ok {
            report.violations += 1;
            if report.first_violation.is_none() {
                report.first_violation = Some((p, q.xi));
            }
        }
    }
    Ok(report)
}

/// Empirical comparability constants of the velocity coordinate: the
/// (min, max) over samples and a time sweep of |Xi_t| / |xi|.
pub fn velocity_comparability(
    samples: &[FlowPoint],
    horizon: f64,
    path: &DrivingPath,
    coeffs: &FluxCoefficients,
    dt: f64,
) -> Result<(f64, f64), FlowError> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let n_sweep = 8;
    for &p in samples {
        if p.xi == 0.0 {
            continue;
        }
        let mut cur = p;
        for k in 1..=n_sweep {
            let ta = horizon * (k - 1) as f64 / n_sweep as f64;
            let tb = horizon * k as f64 / n_sweep as f64;
            cur = flow_forward(cur, ta, tb, path, coeffs, dt)?;
            let ratio = cur.xi.abs() / p.xi.abs();
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    Ok((lo, hi))
}

/// Worst flow-map displacement between two drivers over the samples,
/// paired with the rough-path distance of the drivers.
///
/// Each sample point is flowed from time 0 to each time in `eval_times`
/// under both drivers; the first component is the max phase-space distance.
pub fn flow_stability(
    path_a: &DrivingPath,
    path_b: &DrivingPath,
    alpha: f64,
    coeffs: &FluxCoefficients,
    samples: &[FlowPoint],
    eval_times: &[f64],
    dt: f64,
) -> Result<(f64, f64), NoiseError> {
    let metric =
        rough_metric(&RoughLift::new(path_a.clone()), &RoughLift::new(path_b.clone()), alpha)?;
    let mut worst = 0.0f64;
    for &p in samples {
        for &t in eval_times {
            let qa = flow_forward(p, 0.0, t, path_a, coeffs, dt)
                .map_err(|e| NoiseError::NotPositiveDefinite(format!("flow: {e}")))?;
            let qb = flow_forward(p, 0.0, t, path_b, coeffs, dt)
                .map_err(|e| NoiseError::NotPositiveDefinite(format!("flow: {e}")))?;
            worst = worst.max(qa.distance(&qb));
        }
    }
    Ok((worst, metric))
}
