//! Entropy and parabolic defect measures of solver trajectories.

use pme_solver::Trajectory;
use torus_core::{ops, ScalarField};

/// Which dissipation the measure tracks: the viscous entropy defect
/// (eta |grad u|^2) or the parabolic defect of the nonlinearity
/// ((4m/(m+1)^2) |grad u^{[(m+1)/2]}|^2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefectKind {
    Entropy,
    Parabolic,
}

impl DefectKind {
    pub fn label(&self) -> &'static str {
        match self {
            DefectKind::Entropy => "entropy",
            DefectKind::Parabolic => "parabolic",
        }
    }
}

/// One weighted point mass at (x, xi = u(x,t), t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectSample {
    pub t: f64,
    pub x: f64,
    pub xi: f64,
    pub weight: f64,
}

/// A nonnegative measure stored as point masses on the graph of u.
///
/// Keeping the samples at xi = u(x,t) preserves the delta structure of the
/// defect measures exactly; singular moments need no xi-smearing.
#[derive(Debug, Clone)]
pub struct DefectMeasure {
    kind: DefectKind,
    samples: Vec<DefectSample>,
}

impl DefectMeasure {
    pub fn new(kind: DefectKind, samples: Vec<DefectSample>) -> Self {
        Self { kind, samples }
    }

    pub fn kind(&self) -> DefectKind {
        self.kind
    }

    pub fn samples(&self) -> &[DefectSample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.samples.iter().map(|s| s.weight).sum()
    }

    /// CSV dump with columns (t, x, xi, weight, kind).
    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "x", "xi", "weight", "kind"])?;
        for s in &self.samples {
            w.write_record(&[
                format!("{:.17e}", s.t),
                format!("{:.17e}", s.x),
                format!("{:.17e}", s.xi),
                format!("{:.17e}", s.weight),
                self.kind.label().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Centered periodic difference of a 1d value array.
fn centered_diff(vals: &[f64], dx: f64) -> Vec<f64> {
    let n = vals.len();
    (0..n)
        .map(|i| (vals[(i + 1) % n] - vals[(i + n - 1) % n]) / (2.0 * dx))
        .collect()
}

/// Per-node dissipation densities of one state: (parabolic, entropy) weights
/// per unit time, each carrying the dx cell measure. The parabolic part uses
/// centered differences of the signed-power field u^{[(m+1)/2]} directly,
/// which stays finite at sign changes for m < 1.
pub(crate) fn dissipation_densities(u: &ScalarField, m: f64, eta: f64) -> (Vec<f64>, Vec<f64>) {
    let dx = u.grid().spacing();
    let vals = u.values();
    let w: Vec<f64> = vals.iter().map(|&v| ops::signed_power(v, 0.5 * (m + 1.0))).collect();
    let gw = centered_diff(&w, dx);
    let gu = centered_diff(vals, dx);
    let cq = 4.0 * m / ((m + 1.0) * (m + 1.0));
    let q = gw.iter().map(|g| cq * g * g * dx).collect();
    let p = gu.iter().map(|g| eta * g * g * dx).collect();
    (q, p)
}

/// Extract the entropy defect p and parabolic defect q of a trajectory as
/// point masses at the snapshot times, weighted by trapezoid time increments.
/// Zero-weight samples are dropped; fewer than two snapshots give empty
/// measures.
pub fn defect_measures(traj: &Trajectory, m: f64, eta: f64) -> (DefectMeasure, DefectMeasure) {
    let snaps = &traj.snaps;
    let mut p_samples = Vec::new();
    let mut q_samples = Vec::new();
    if snaps.len() >= 2 {
        let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
        for (j, snap) in snaps.iter().enumerate() {
            let grid = snap.field.grid();
            assert_eq!(grid.dim(), 1, "defect extraction is one-dimensional");
            let dt_w = if j == 0 {
                0.5 * (times[1] - times[0])
            } else if j == snaps.len() - 1 {
                0.5 * (times[j] - times[j - 1])
            } else {
                0.5 * (times[j + 1] - times[j - 1])
            };
            let (q, p) = dissipation_densities(&snap.field, m, eta);
            let vals = snap.field.values();
            for i in 0..vals.len() {
                let x = grid.coord(i);
                if q[i] * dt_w > 0.0 {
                    q_samples.push(DefectSample {
                        t: snap.t,
                        x,
                        xi: vals[i],
                        weight: q[i] * dt_w,
                    });
                }
                if p[i] * dt_w > 0.0 {
                    p_samples.push(DefectSample {
                        t: snap.t,
                        x,
                        xi: vals[i],
                        weight: p[i] * dt_w,
                    });
                }
            }
        }
    }
    (
        DefectMeasure::new(DefectKind::Entropy, p_samples),
        DefectMeasure::new(DefectKind::Parabolic, q_samples),
    )
}

/// A singular velocity moment together with the number of samples whose
/// |xi| fell below the clipping floor (excluded from the sum).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularMoment {
    pub value: f64,
    pub clipped: usize,
}

pub const MOMENT_CLIP_FLOOR: f64 = 1e-8;

/// Sum of weight * |xi|^gamma over the measure, clipping |xi| below the
/// floor. Finite for gamma >= -1 on sign-preserving data; the clip count
/// flags masses sitting essentially at xi = 0.
pub fn singular_moment(q: &DefectMeasure, gamma: f64) -> SingularMoment {
    let mut value = 0.0;
    let mut clipped = 0;
    for s in q.samples() {
        if s.xi.abs() < MOMENT_CLIP_FLOOR {
            clipped += 1;
        } else {
            value += s.weight * s.xi.abs().powf(gamma);
        }
    }
    SingularMoment { value, clipped }
}

/// Ratio ||z||_{m+1}^{m+1} / (||z||_1^{m+1} + ||grad z^{[(m+1)/2]}||_2^2)
/// on the unit torus; the interpolation gain bounds it by a constant.
pub fn interpolation_check(z: &ScalarField, m: f64) -> f64 {
    assert_eq!(z.grid().dim(), 1, "interpolation check is one-dimensional");
    let dx = z.grid().spacing();
    let vals = z.values();
    let lhs: f64 = vals.iter().map(|v| v.abs().powf(m + 1.0)).sum::<f64>() * dx;
    let l1: f64 = vals.iter().map(|v| v.abs()).sum::<f64>() * dx;
    let w: Vec<f64> = vals.iter().map(|&v| ops::signed_power(v, 0.5 * (m + 1.0))).collect();
    let grad2: f64 = centered_diff(&w, dx).iter().map(|g| g * g).sum::<f64>() * dx;
    let rhs = l1.powf(m + 1.0) + grad2;
    if rhs == 0.0 {
        return 0.0;
    }
    lhs / rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use noise_paths::DrivingPath;
    use pme_solver::{Solver, SolverConfig};
    use torus_core::TorusGrid;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    fn short_run(u0: &ScalarField, m: f64, eta: f64, horizon: f64, n_snap: usize) -> Trajectory {
        let mut config = SolverConfig::new(*u0.grid(), m, horizon);
        config.eta = eta;
        config.truncation = SolverConfig::default_truncation(u0);
        config.snapshot_times = (0..n_snap)
            .map(|k| horizon * k as f64 / (n_snap - 1) as f64)
            .collect();
        let solver = Solver::new(config, coefficients::FluxCoefficients::separable_sine(0.0)).unwrap();
        solver.solve(u0, &DrivingPath::zero(horizon, 1)).unwrap()
    }

    #[test]
    fn constant_trajectories_yield_empty_measures() {
        let u0 = ScalarField::constant(grid(32), 0.8).unwrap();
        let traj = short_run(&u0, 2.0, 0.1, 1e-3, 3);
        let (p, q) = defect_measures(&traj, 2.0, 0.1);
        assert!(p.is_empty());
        assert!(q.is_empty());
        assert_eq!(p.total_mass(), 0.0);
    }

    #[test]
    fn zero_viscosity_gives_an_empty_entropy_measure() {
        let u0 = ScalarField::from_fn(grid(32), |x| {
            0.5 + 0.3 * (2.0 * std::f64::consts::PI * x[0]).sin()
        })
        .unwrap();
        let traj = short_run(&u0, 2.0, 0.0, 1e-3, 3);
        let (p, q) = defect_measures(&traj, 2.0, 0.0);
        assert!(p.is_empty());
        assert!(!q.is_empty());
        assert!(q.total_mass() > 0.0);
    }

    #[test]
    fn parabolic_mass_matches_the_direct_double_integral() {
        let u0 = ScalarField::from_fn(grid(64), |x| {
            0.5 + 0.3 * (2.0 * std::f64::consts::PI * x[0]).sin()
        })
        .unwrap();
        let m = 2.0;
        let traj = short_run(&u0, m, 0.05, 2e-3, 5);
        let (p, q) = defect_measures(&traj, m, 0.05);

        // Independent quadrature: trapezoid in t of the spatial integral of
        // the squared gradient fields.
        let times: Vec<f64> = traj.snaps.iter().map(|s| s.t).collect();
        let mut direct_q = 0.0;
        let mut direct_p = 0.0;
        for (j, snap) in traj.snaps.iter().enumerate() {
            let dt_w = if j == 0 {
                0.5 * (times[1] - times[0])
            } else if j == times.len() - 1 {
                0.5 * (times[j] - times[j - 1])
            } else {
                0.5 * (times[j + 1] - times[j - 1])
            };
            let dx = snap.field.grid().spacing();
            let vals = snap.field.values();
            let n = vals.len();
            let mut sq = 0.0;
            let mut sp_ = 0.0;
            for i in 0..n {
                let wp = ops::signed_power(vals[(i + 1) % n], 0.5 * (m + 1.0));
                let wm = ops::signed_power(vals[(i + n - 1) % n], 0.5 * (m + 1.0));
                let gw = (wp - wm) / (2.0 * dx);
                let gu = (vals[(i + 1) % n] - vals[(i + n - 1) % n]) / (2.0 * dx);
                sq += gw * gw * dx;
                sp_ += gu * gu * dx;
            }
            direct_q += dt_w * 4.0 * m / ((m + 1.0) * (m + 1.0)) * sq;
            direct_p += dt_w * 0.05 * sp_;
        }
        assert_relative_eq!(q.total_mass(), direct_q, max_relative = 1e-10);
        assert_relative_eq!(p.total_mass(), direct_p, max_relative = 1e-10);
    }

    #[test]
    fn weights_are_nonnegative_and_sit_on_the_graph() {
        let u0 = ScalarField::from_fn(grid(48), |x| {
            0.4 * (2.0 * std::f64::consts::PI * x[0]).sin()
        })
        .unwrap();
        let traj = short_run(&u0, 1.5, 0.02, 1e-3, 3);
        let (p, q) = defect_measures(&traj, 1.5, 0.02);
        for meas in [&p, &q] {
            for s in meas.samples() {
                assert!(s.weight > 0.0);
                let snap = traj.snapshot_at(s.t).unwrap();
                let i = (s.x / snap.field.grid().spacing()).round() as usize;
                assert_eq!(snap.field.values()[i], s.xi);
            }
        }
    }

    #[test]
    fn empty_measure_has_zero_moment() {
        let m = DefectMeasure::new(DefectKind::Parabolic, Vec::new());
        let sm = singular_moment(&m, -1.0);
        assert_eq!(sm.value, 0.0);
        assert_eq!(sm.clipped, 0);
    }

    #[test]
    fn single_mass_moment_is_weight_over_xi() {
        let m = DefectMeasure::new(
            DefectKind::Parabolic,
            vec![DefectSample { t: 0.0, x: 0.0, xi: 0.5, weight: 2.0 }],
        );
        assert_relative_eq!(singular_moment(&m, -1.0).value, 4.0, epsilon = 1e-15);
    }

    #[test]
    fn near_zero_masses_are_clipped_and_counted() {
        let m = DefectMeasure::new(
            DefectKind::Parabolic,
            vec![
                DefectSample { t: 0.0, x: 0.0, xi: 1e-9, weight: 5.0 },
                DefectSample { t: 0.0, x: 0.1, xi: 0.25, weight: 1.0 },
            ],
        );
        let sm = singular_moment(&m, -1.0);
        assert_eq!(sm.clipped, 1);
        assert_relative_eq!(sm.value, 4.0, epsilon = 1e-15);
    }

    #[test]
    fn csv_dump_lists_every_sample_with_kind() {
        let m = DefectMeasure::new(
            DefectKind::Entropy,
            vec![
                DefectSample { t: 0.0, x: 0.25, xi: 0.5, weight: 1.0 },
                DefectSample { t: 0.1, x: 0.50, xi: -0.2, weight: 0.5 },
            ],
        );
        let mut buf = Vec::new();
        m.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("t,x,xi,weight,kind"));
        assert!(lines[1].ends_with("entropy"));
    }

    #[test]
    fn constant_fields_have_ratio_at_most_one() {
        for c in [0.5, -2.0, 1.0] {
            let z = ScalarField::constant(grid(64), c).unwrap();
            let r = interpolation_check(&z, 2.0);
            assert!(r <= 1.0 + 1e-12, "ratio {r} for constant {c}");
            assert_relative_eq!(r, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn sine_field_ratio_is_small_and_sign_invariant() {
        let z = ScalarField::from_fn(grid(128), |x| (2.0 * std::f64::consts::PI * x[0]).sin())
            .unwrap();
        let neg = z.map(|v| -v).unwrap();
        let r = interpolation_check(&z, 1.0);
        let rn = interpolation_check(&neg, 1.0);
        assert!(r <= 10.0, "ratio {r}");
        assert_relative_eq!(r, rn, epsilon = 1e-14);
    }

    #[test]
    fn zero_field_ratio_is_zero() {
        let z = ScalarField::constant(grid(16), 0.0).unwrap();
        assert_eq!(interpolation_check(&z, 2.0), 0.0);
    }
}
