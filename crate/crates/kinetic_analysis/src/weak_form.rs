//! Integration-by-parts and transported weak-form identities.

use crate::defect::dissipation_densities;
use crate::kinetic::{column_cell_weights, kinetic_function, VelocityGrid};
use crate::KineticError;
use characteristics::{flow_backward, FlowPoint};
use coefficients::FluxCoefficients;
use noise_paths::DrivingPath;
use pme_solver::Trajectory;
use rayon::prelude::*;
use torus_core::{ops, ScalarField};

/// Check the kinetic integration-by-parts identity for one state:
///
///   sum_{x,xi} ((m+1)/2) |xi|^{(m-1)/2} chi(x,xi) dpsi/dx  =
///   - sum_x (D_c u^{[(m+1)/2]}) psi(x, u(x))
///
/// with chi replaced by its exact cell averages and the right side using the
/// centered difference of the signed-power field. Returns |LHS - RHS|.
pub fn ibp_check(
    u: &ScalarField,
    xi: &VelocityGrid,
    m: f64,
    psi: &dyn Fn(f64, f64) -> f64,
    psi_dx: &dyn Fn(f64, f64) -> f64,
) -> Result<f64, KineticError> {
    if u.grid().dim() != 1 {
        return Err(KineticError::BadInput(
            "integration-by-parts check is one-dimensional".into(),
        ));
    }
    let kg = kinetic_function(u, xi)?;
    let weights = kg.cell_weights();
    let grid = u.grid();
    let (nx, nxi) = (grid.points_per_dim(), xi.n_cells());
    let (dx, dxi) = (grid.spacing(), xi.spacing());

    let half_exp = 0.5 * (m - 1.0);
    let mut lhs = 0.0;
    for i in 0..nx {
        let x = grid.coord(i);
        for k in 0..nxi {
            let w = weights[i * nxi + k];
            if w == 0.0 {
                continue;
            }
            let c = xi.center(k);
            lhs += 0.5 * (m + 1.0) * c.abs().powf(half_exp) * w * psi_dx(x, c);
        }
    }
    lhs *= dx * dxi;

    let vals = u.values();
    let wfield: Vec<f64> = vals
        .iter()
        .map(|&v| ops::signed_power(v, 0.5 * (m + 1.0)))
        .collect();
    let mut rhs = 0.0;
    for i in 0..nx {
        let gw = (wfield[(i + 1) % nx] - wfield[(i + nx - 1) % nx]) / (2.0 * dx);
        rhs -= gw * psi(grid.coord(i), vals[i]) * dx;
    }
    Ok((lhs - rhs).abs())
}

/// Numerical knobs of the weak-form residual.
#[derive(Debug, Clone, Copy)]
pub struct WeakFormConfig {
    pub m: f64,
    pub eta: f64,
    /// Target RK4 substep for the inverse characteristic evaluations.
    pub backflow_dt: f64,
}

impl WeakFormConfig {
    pub fn new(m: f64, eta: f64) -> Self {
        Self { m, eta, backflow_dt: 2e-3 }
    }
}

/// Transported-test-function weak form of the kinetic equation.
///
/// With rho(x, xi, t) = rho0 evaluated at the inverse characteristic of
/// (x, xi) from time t back to t0, the exact solution satisfies
///
///   [ sum chi rho ]_{t0}^{t1}  =  int_t sum (m|xi|^{m-1} + eta) chi Lap_x rho
///                               - int_t sum (p + q) d_xi rho.
///
/// All four terms are assembled by quadrature from the trajectory snapshots
/// (which must be uniformly spaced on [t0, t1], odd in number for Simpson
/// weights) and the normalized imbalance |T1 - T2 + T3| / max(|T_i|) is
/// returned. The coefficient masses integrate (m|xi|^{m-1} + eta) exactly
/// over each xi-cell intersected with the interval between 0 and u.
pub fn weak_form_residual<F>(
    traj: &Trajectory,
    xi: &VelocityGrid,
    rho0: &F,
    t0: f64,
    t1: f64,
    path: &DrivingPath,
    coeffs: &FluxCoefficients,
    config: &WeakFormConfig,
) -> Result<f64, KineticError>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let span = t1 - t0;
    let tol = 1e-9 * span.abs().max(1.0);
    if span.abs() <= tol {
        return Ok(0.0);
    }
    if span < 0.0 {
        return Err(KineticError::BadInput(format!(
            "weak form window [{t0}, {t1}] is reversed"
        )));
    }

    let snaps: Vec<&pme_solver::Snapshot> = traj
        .snaps
        .iter()
        .filter(|s| s.t >= t0 - tol && s.t <= t1 + tol)
        .collect();
    let k_nodes = snaps.len();
    if k_nodes < 3 || k_nodes % 2 == 0 {
        return Err(KineticError::BadInput(format!(
            "Simpson quadrature needs an odd number (>= 3) of snapshots in the window, found {k_nodes}"
        )));
    }
    let hq = span / (k_nodes - 1) as f64;
    for (j, s) in snaps.iter().enumerate() {
        let expect = t0 + hq * j as f64;
        if (s.t - expect).abs() > tol {
            return Err(KineticError::BadInput(format!(
                "snapshot {j} at t={} is not on the uniform quadrature lattice",
                s.t
            )));
        }
    }

    let grid = snaps[0].field.grid();
    if grid.dim() != 1 {
        return Err(KineticError::BadInput(
            "weak form assembly is one-dimensional".into(),
        ));
    }
    let (nx, nxi) = (grid.points_per_dim(), xi.n_cells());
    let (dx, dxi) = (grid.spacing(), xi.spacing());
    let (m, eta) = (config.m, config.eta);

    let mut s_first = 0.0;
    let mut s_last = 0.0;
    let mut t2 = 0.0;
    let mut t3 = 0.0;
    let mut col = vec![0.0; nxi];
    for (j, snap) in snaps.iter().enumerate() {
        let t = snap.t;
        let vals = snap.field.values();

        // Transported test function on the lattice plus the two offset
        // evaluations per node used for the d_xi derivative.
        let per_col: Result<Vec<(Vec<f64>, f64, f64)>, KineticError> = (0..nx)
            .into_par_iter()
            .map(|i| {
                let x = grid.coord(i);
                let eval = |vx: f64, vxi: f64| -> Result<f64, KineticError> {
                    let q = flow_backward(
                        FlowPoint::new(vx, vxi),
                        t0,
                        t,
                        path,
                        coeffs,
                        config.backflow_dt,
                    )?;
                    Ok(rho0(q.x, q.xi))
                };
                let mut rho_col = vec![0.0; nxi];
                for (k, r) in rho_col.iter_mut().enumerate() {
                    *r = eval(x, xi.center(k))?;
                }
                let up = eval(x, vals[i] + dxi)?;
                let dn = eval(x, vals[i] - dxi)?;
                Ok((rho_col, up, dn))
            })
            .collect();
        let per_col = per_col?;

        let rho: Vec<f64> = {
            let mut flat = vec![0.0; nx * nxi];
            for (i, (rc, _, _)) in per_col.iter().enumerate() {
                flat[i * nxi..(i + 1) * nxi].copy_from_slice(rc);
            }
            flat
        };

        // T1 boundary terms: sum of cell-averaged chi times rho.
        if j == 0 || j == k_nodes - 1 {
            let mut s_sum = 0.0;
            for (i, &uv) in vals.iter().enumerate() {
                column_cell_weights(uv, xi, &mut col);
                let row = &rho[i * nxi..(i + 1) * nxi];
                for (w, r) in col.iter().zip(row) {
                    s_sum += w * r;
                }
            }
            s_sum *= dx * dxi;
            if j == 0 {
                s_first = s_sum;
            }
            if j == k_nodes - 1 {
                s_last = s_sum;
            }
        }

        let simpson = if j == 0 || j == k_nodes - 1 {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };

        // T2: exact coefficient masses against the discrete x-Laplacian.
        let mut t2_j = 0.0;
        for (i, &uv) in vals.iter().enumerate() {
            let (a_int, b_int, sgn) = if uv >= 0.0 {
                (0.0, uv, 1.0)
            } else {
                (uv, 0.0, -1.0)
            };
            let ip = (i + 1) % nx;
            let im = (i + nx - 1) % nx;
            for k in 0..nxi {
                let (lo, hi) = xi.cell(k);
                let a = lo.max(a_int);
                let b = hi.min(b_int);
                if b <= a {
                    continue;
                }
                let mass = sgn
                    * ((ops::signed_power(b, m) - ops::signed_power(a, m)) + eta * (b - a));
                let lap = (rho[ip * nxi + k] - 2.0 * rho[i * nxi + k] + rho[im * nxi + k])
                    / (dx * dx);
                t2_j += mass * lap;
            }
        }
        t2 += simpson * t2_j * dx;

        // T3: dissipation densities against the xi-derivative of rho.
        let (q_dens, p_dens) = dissipation_densities(&snap.field, m, eta);
        let mut t3_j = 0.0;
        for (i, (_, up, dn)) in per_col.iter().enumerate() {
            t3_j += (q_dens[i] + p_dens[i]) * (up - dn) / (2.0 * dxi);
        }
        t3 += simpson * t3_j;
    }
    t2 *= hq / 3.0;
    t3 *= hq / 3.0;
    let t1_term = s_last - s_first;

    let scale = t1_term.abs().max(t2.abs()).max(t3.abs()).max(1e-12);
    Ok((t1_term - t2 + t3).abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pme_solver::{Solver, SolverConfig};
    use torus_core::TorusGrid;

    const PI2: f64 = 2.0 * std::f64::consts::PI;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    fn gauss(v: f64) -> f64 {
        (-((v - 0.5) / 0.3) * ((v - 0.5) / 0.3)).exp()
    }

    fn sine_state(n: usize) -> ScalarField {
        ScalarField::from_fn(grid(n), |x| 0.5 + 0.3 * (PI2 * x[0]).sin()).unwrap()
    }

    #[test]
    fn constant_state_has_zero_ibp_residual() {
        let u = ScalarField::constant(grid(64), 0.7).unwrap();
        let xi = VelocityGrid::new(-1.5, 1.5, 64).unwrap();
        let r = ibp_check(
            &u,
            &xi,
            2.0,
            &|x, v| (PI2 * x).cos() * gauss(v),
            &|x, v| -PI2 * (PI2 * x).sin() * gauss(v),
        )
        .unwrap();
        assert!(r < 1e-13, "residual {r}");
    }

    #[test]
    fn x_independent_test_function_gives_quadrature_size_residual() {
        let u = sine_state(128);
        let xi = VelocityGrid::new(-1.5, 1.5, 128).unwrap();
        let r = ibp_check(&u, &xi, 2.0, &|_, v| gauss(v), &|_, _| 0.0).unwrap();
        assert!(r < 1e-3, "residual {r}");
    }

    #[test]
    fn ibp_residual_is_small_and_halves_under_refinement() {
        let xi_of = |n: usize| VelocityGrid::new(-1.5, 1.5, n).unwrap();
        let psi = |x: f64, v: f64| (PI2 * x).cos() * gauss(v);
        let psi_dx = |x: f64, v: f64| -PI2 * (PI2 * x).sin() * gauss(v);
        let mut prev = f64::INFINITY;
        for n in [64usize, 128, 256] {
            let u = sine_state(n);
            let r = ibp_check(&u, &xi_of(n), 2.0, &psi, &psi_dx).unwrap();
            assert!(
                r < prev / 2.0,
                "residual {r} at {n}x{n} does not halve previous {prev}"
            );
            prev = r;
        }
        assert!(prev <= 5e-3, "finest residual {prev}");
    }

    fn rho0(x: f64, v: f64) -> f64 {
        let bump = |r: f64| {
            if r.abs() < 1.0 {
                (1.0 - 1.0 / (1.0 - r * r)).exp()
            } else {
                0.0
            }
        };
        let dxc = (x - 0.5).abs();
        let dxc = dxc.min(1.0 - dxc);
        bump(dxc / 0.28) * bump((v - 0.55) / 0.38)
    }

    fn weak_form_case(
        n: usize,
        k_snaps: usize,
        m: f64,
        eta: f64,
        kappa: f64,
        speed: f64,
        horizon: f64,
    ) -> f64 {
        let u0 = sine_state(n);
        let mut config = SolverConfig::new(grid(n), m, horizon);
        config.eta = eta;
        config.truncation = SolverConfig::default_truncation(&u0);
        config.snapshot_times = (0..k_snaps)
            .map(|j| horizon * j as f64 / (k_snaps - 1) as f64)
            .collect();
        let coeffs = FluxCoefficients::separable_sine(kappa);
        let solver = Solver::new(config, coeffs.clone()).unwrap();
        let path = DrivingPath::linear(&[speed], horizon);
        let traj = solver.solve(&u0, &path).unwrap();
        let xi = VelocityGrid::new(-1.5, 1.5, n).unwrap();
        weak_form_residual(
            &traj,
            &xi,
            &rho0,
            0.0,
            horizon,
            &path,
            &coeffs,
            &WeakFormConfig::new(m, eta),
        )
        .unwrap()
    }

    #[test]
    fn heat_flow_residual_is_below_one_percent_at_default_resolution() {
        let r = weak_form_case(64, 9, 1.0, 0.0, 0.0, 0.0, 0.01);
        assert!(r <= 1e-2, "residual {r}");
    }

    #[test]
    fn heat_flow_residual_decreases_under_refinement() {
        let coarse = weak_form_case(64, 9, 1.0, 0.0, 0.0, 0.0, 0.01);
        let fine = weak_form_case(128, 17, 1.0, 0.0, 0.0, 0.0, 0.01);
        assert!(
            fine < 0.5 * coarse,
            "fine {fine} does not improve on coarse {coarse}"
        );
        assert!(fine <= 4e-3, "fine residual {fine}");
    }

    #[test]
    fn noisy_porous_medium_residual_is_small() {
        let r = weak_form_case(64, 9, 2.0, 0.05, 0.5, 1.0, 0.05);
        assert!(r <= 7e-3, "residual {r}");
    }

    #[test]
    fn coincident_endpoints_give_zero_residual() {
        let n = 32;
        let m = 1.0;
        let u0 = sine_state(n);
        let mut config = SolverConfig::new(grid(n), m, 0.01);
        config.truncation = SolverConfig::default_truncation(&u0);
        config.snapshot_times = vec![0.0, 0.005, 0.01];
        let coeffs = FluxCoefficients::separable_sine(0.0);
        let solver = Solver::new(config, coeffs.clone()).unwrap();
        let path = DrivingPath::zero(0.01, 1);
        let traj = solver.solve(&u0, &path).unwrap();
        let xi = VelocityGrid::new(-1.5, 1.5, 32).unwrap();
        let r = weak_form_residual(
            &traj,
            &xi,
            &rho0,
            0.005,
            0.005,
            &path,
            &coeffs,
            &WeakFormConfig::new(m, 0.0),
        )
        .unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    #[ignore = "manual probe of the full residual chains"]
    fn probe_residual_chains() {
        let cases: [(f64, f64, f64, f64, f64, &str); 4] = [
            (1.0, 0.0, 0.0, 0.0, 0.01, "m1 heat"),
            (2.0, 0.0, 0.0, 0.0, 0.01, "m2 plain"),
            (1.0, 0.0, 0.5, 1.0, 0.05, "m1 noisy"),
            (2.0, 0.05, 0.5, 1.0, 0.05, "m2 noisy"),
        ];
        for (m, eta, kappa, speed, horizon, label) in cases {
            let mut prev = f64::INFINITY;
            for (n, k) in [(64usize, 9usize), (128, 17), (256, 41)] {
                let r = weak_form_case(n, k, m, eta, kappa, speed, horizon);
                let flag = if r < prev { "" } else { "  <-- NOT DECREASING" };
                eprintln!("{label}: n={n} k={k} resid={r:.4e}{flag}");
                prev = r;
            }
        }
    }

    #[test]
    fn malformed_snapshot_windows_are_rejected() {
        let n = 32;
        let u0 = sine_state(n);
        let mut config = SolverConfig::new(grid(n), 1.0, 0.01);
        config.truncation = SolverConfig::default_truncation(&u0);
        config.snapshot_times = vec![0.0, 0.005, 0.007, 0.01];
        let coeffs = FluxCoefficients::separable_sine(0.0);
        let solver = Solver::new(config, coeffs.clone()).unwrap();
        let path = DrivingPath::zero(0.01, 1);
        let traj = solver.solve(&u0, &path).unwrap();
        let xi = VelocityGrid::new(-1.5, 1.5, 16).unwrap();
        let got = weak_form_residual(
            &traj,
            &xi,
            &rho0,
            0.0,
            0.01,
            &path,
            &coeffs,
            &WeakFormConfig::new(1.0, 0.0),
        );
        assert!(matches!(got, Err(KineticError::BadInput(_))), "{got:?}");
    }
}
