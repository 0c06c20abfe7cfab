use coefficients::FluxCoefficients;
use noise_paths::DrivingPath;
use torus_core::{integrate, lp_norm, ScalarField, TorusGrid};

use crate::nonlinearity::PhiTable;
use crate::SolverError;

/// Time-step selection for the explicit scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    /// Use a caller-chosen step; spans between driver knots and snapshot
    /// times are still subdivided evenly so steps never straddle a knot.
    Fixed(f64),
    /// dt = safety * min(diffusion bound, transport bound), recomputed at
    /// the start of every inter-knot span from the current state.
    Cfl { safety: f64 },
}

impl Default for DtPolicy {
    // safety < 1/3 keeps the combined diffusion + transport update monotone.
    fn default() -> Self {
        DtPolicy::Cfl { safety: 0.25 }
    }
}

/// Configuration for one solve.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Diffusion exponent m > 0 in the signed power law.
    pub m: f64,
    /// Linear viscosity coefficient, in [0, 1).
    pub eta: f64,
    /// Truncation level M >= 1 where the power law continues affinely.
    pub truncation: f64,
    /// Mollification radius, in (0, 1].
    pub delta: f64,
    pub grid: TorusGrid,
    pub dt_policy: DtPolicy,
    /// Final time T > 0.
    pub horizon: f64,
    /// Times in [0, T] at which full fields are recorded. The final state
    /// is always recorded, whether or not T is listed here.
    pub snapshot_times: Vec<f64>,
}

impl SolverConfig {
    pub fn new(grid: TorusGrid, m: f64, horizon: f64) -> Self {
        SolverConfig {
            m,
            eta: 0.0,
            truncation: 8.0,
            delta: 1e-3,
            grid,
            dt_policy: DtPolicy::default(),
            horizon,
            snapshot_times: Vec::new(),
        }
    }

    /// Default truncation level for given initial data: 8 * max|u0|,
    /// floored at 1 so the affine continuation stays out of the data range.
    pub fn default_truncation(u0: &ScalarField) -> f64 {
        let peak = u0.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        (8.0 * peak).max(1.0)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !self.m.is_finite() || self.m <= 0.0 {
            return Err(SolverError::BadConfig(format!(
                "diffusion exponent must be positive, got {}",
                self.m
            )));
        }
        if !self.eta.is_finite() || self.eta < 0.0 || self.eta >= 1.0 {
            return Err(SolverError::BadConfig(format!(
                "viscosity must lie in [0, 1), got {}",
                self.eta
            )));
        }
        if !self.truncation.is_finite() || self.truncation < 1.0 {
            return Err(SolverError::BadConfig(format!(
                "truncation level must be >= 1, got {}",
                self.truncation
            )));
        }
        if !self.delta.is_finite() || self.delta <= 0.0 || self.delta > 1.0 {
            return Err(SolverError::BadConfig(format!(
                "mollification radius must lie in (0, 1], got {}",
                self.delta
            )));
        }
        if !self.horizon.is_finite() || self.horizon <= 0.0 {
            return Err(SolverError::BadConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        match self.dt_policy {
            DtPolicy::Fixed(dt) => {
                if !dt.is_finite() || dt <= 0.0 {
                    return Err(SolverError::BadConfig(format!(
                        "fixed dt must be positive, got {dt}"
                    )));
                }
            }
            DtPolicy::Cfl { safety } => {
                if !safety.is_finite() || safety <= 0.0 || safety >= 1.0 {
                    return Err(SolverError::BadConfig(format!(
                        "CFL safety factor must lie in (0, 1), got {safety}"
                    )));
                }
            }
        }
        let tol = 1e-9 * self.horizon.max(1.0);
        for &s in &self.snapshot_times {
            if !s.is_finite() || s < -tol || s > self.horizon + tol {
                return Err(SolverError::BadConfig(format!(
                    "snapshot time {s} outside [0, {}]",
                    self.horizon
                )));
            }
        }
        Ok(())
    }
}

/// One recorded field with its time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub field: ScalarField,
}

/// Per-step scalar diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct StepDiag {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub l2: f64,
}

/// Output of a solve: snapshots, per-step diagnostics, and the running
/// work integrals feeding the energy ledger.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snaps: Vec<Snapshot>,
    pub diags: Vec<StepDiag>,
    /// Accumulated sum of dt * sum_faces (D+ u)(D+ phi(u)) / dx.
    pub diff_work: f64,
    /// Accumulated sum of dt * eta * sum_faces (D+ u)^2 / dx.
    pub visc_work: f64,
    /// Accumulated sum of dt * sum_i u_i * (transport update)_i * dx.
    pub noise_work: f64,
    pub initial_mass: f64,
    pub initial_l2_sq: f64,
    pub final_l2_sq: f64,
    /// Largest |mass(t) - mass(0)| seen over all steps.
    pub max_mass_dev: f64,
    /// Largest ||u||_2 seen over all steps.
    pub max_l2: f64,
    pub steps: u64,
}

impl Trajectory {
    pub fn final_field(&self) -> &ScalarField {
        &self.snaps.last().expect("trajectory records final state").field
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.snaps.iter().find(|s| (s.t - t).abs() <= tol)
    }
}

/// Relative energy defect of a trajectory:
/// |1/2||u_T||^2 - 1/2||u_0||^2 + diff_work + visc_work - noise_work|
/// divided by 1/2||u_0||^2 (absolute value if the initial state vanishes).
pub fn energy_ledger(traj: &Trajectory) -> f64 {
    let defect = 0.5 * traj.final_l2_sq - 0.5 * traj.initial_l2_sq + traj.diff_work
        + traj.visc_work
        - traj.noise_work;
    let denom = 0.5 * traj.initial_l2_sq;
    if denom > 0.0 {
        defect.abs() / denom
    } else {
        defect.abs()
    }
}

struct WorkBuf {
    phi: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
    fx: Vec<f64>,
    next: Vec<f64>,
}

impl WorkBuf {
    fn new(n: usize) -> Self {
        WorkBuf {
            phi: vec![0.0; n],
            gx: vec![0.0; n],
            gy: vec![0.0; n],
            fx: vec![0.0; n],
            next: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct StepWork {
    diff: f64,
    visc: f64,
    noise: f64,
}

/// Explicit finite-volume solver for
/// du/dt = Laplace(phi(u)) + eta * Laplace(u) + div(A(x, u) zdot)
/// on the periodic grid, with phi the mollified truncated power law.
#[derive(Debug, Clone)]
pub struct Solver {
    config: SolverConfig,
    coeffs: FluxCoefficients,
    phi: PhiTable,
    /// sup_xi |d/dxi a| at each x-face midpoint (d = 1 only).
    face_bsup: Vec<f64>,
}

impl Solver {
    pub fn new(config: SolverConfig, coeffs: FluxCoefficients) -> Result<Self, SolverError> {
        config.validate()?;
        let phi = PhiTable::new(config.truncation, config.delta, config.m);
        let face_bsup = if config.grid.dim() == 1 {
            let n = config.grid.points_per_dim();
            let dx = config.grid.spacing();
            (0..n)
                .map(|i| coeffs.b_sup_xi(&[(i as f64 + 0.5) * dx]))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Solver {
            config,
            coeffs,
            phi,
            face_bsup,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn coefficients(&self) -> &FluxCoefficients {
        &self.coeffs
    }

    pub fn phi_table(&self) -> &PhiTable {
        &self.phi
    }

    fn max_face_bsup(&self) -> f64 {
        self.face_bsup.iter().fold(0.0_f64, |m, &v| m.max(v))
    }

    /// Stable step size for the current state:
    /// dt = safety * min(dx^2 / (2 d (max phi'(u) + eta)),
    ///                   dx / (max_faces sup_xi|b| * zdot_max + guard)).
    /// Errors if the bound falls below 1e-12.
    pub fn cfl_dt(&self, u: &ScalarField, zdot_max: f64) -> Result<f64, SolverError> {
        let safety = match self.config.dt_policy {
            DtPolicy::Cfl { safety } => safety,
            DtPolicy::Fixed(_) => 0.25,
        };
        self.cfl_dt_with_safety(u.values(), zdot_max, safety, 0.0)
    }

    fn cfl_dt_with_safety(
        &self,
        u: &[f64],
        zdot_max: f64,
        safety: f64,
        t: f64,
    ) -> Result<f64, SolverError> {
        let d = self.config.grid.dim() as f64;
        let dx = self.config.grid.spacing();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in u {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let max_dphi = self.phi.max_deriv(lo, hi);
        let diff_bound = dx * dx / (2.0 * d * (max_dphi + self.config.eta));
        let transport_denom = self.max_face_bsup() * zdot_max.abs() + 1e-14;
        let transport_bound = dx / transport_denom;
        let dt = safety * diff_bound.min(transport_bound);
        if !dt.is_finite() || dt < 1e-12 {
            return Err(SolverError::DtUnderflow {
                dt,
                t,
                detail: format!(
                    "dx={dx:.6e} max_phi_deriv={max_dphi:.6e} eta={} bsup={:.6e} zdot_max={:.6e}",
                    self.config.eta,
                    self.max_face_bsup(),
                    zdot_max
                ),
            });
        }
        Ok(dt)
    }

    /// One forward-Euler update over [t, t + dt]. The interval must not
    /// straddle a knot of the driver: the transport slope is read once at
    /// its midpoint. Flux form throughout, so mass telescopes exactly.
    pub fn step(
        &self,
        u: &ScalarField,
        t: f64,
        dt: f64,
        path: &DrivingPath,
    ) -> Result<ScalarField, SolverError> {
        if u.grid() != &self.config.grid {
            return Err(SolverError::BadConfig(
                "state grid does not match solver grid".into(),
            ));
        }
        let zdot = path.derivative(t + 0.5 * dt);
        let zdot = if zdot.is_empty() { 0.0 } else { zdot[0] };
        self.guard_dims(path)?;
        let mut buf = WorkBuf::new(u.values().len());
        let mut vals = u.values().to_vec();
        self.step_into(&mut vals, t, dt, zdot, &mut buf)?;
        Ok(ScalarField::new(self.config.grid, vals)?)
    }

    fn guard_dims(&self, path: &DrivingPath) -> Result<(), SolverError> {
        if path.max_speed() > 0.0 {
            if self.config.grid.dim() != 1 {
                return Err(SolverError::BadConfig(
                    "transport noise is only wired for dim = 1; use a zero driver in dim 2"
                        .into(),
                ));
            }
            if path.dims() != 1 {
                return Err(SolverError::BadConfig(format!(
                    "driver has {} components, solver transport expects 1",
                    path.dims()
                )));
            }
        }
        Ok(())
    }

    /// Core update: overwrites `u` in place, returns the work increments.
    fn step_into(
        &self,
        u: &mut [f64],
        t: f64,
        dt: f64,
        zdot: f64,
        buf: &mut WorkBuf,
    ) -> Result<StepWork, SolverError> {
        let n = self.config.grid.points_per_dim();
        let dx = self.config.grid.spacing();
        let mut work = StepWork::default();

        for (p, &v) in buf.phi.iter_mut().zip(u.iter()) {
            *p = self.phi.eval(v);
        }
        let eta = self.config.eta;

        if self.config.grid.dim() == 1 {
            // Face fluxes: G at face i sits between nodes i and i+1.
            for i in 0..n {
                let ip = if i + 1 == n { 0 } else { i + 1 };
                let du = u[ip] - u[i];
                let dphi = buf.phi[ip] - buf.phi[i];
                buf.gx[i] = (dphi + eta * du) / dx;
                work.diff += du * dphi;
                work.visc += du * du;
            }
            let noisy = zdot != 0.0;
            if noisy {
                for i in 0..n {
                    let ip = if i + 1 == n { 0 } else { i + 1 };
                    let xf = (i as f64 + 0.5) * dx;
                    let fl = -self.coeffs.a(&[xf], u[i])[0][0] * zdot;
                    let fr = -self.coeffs.a(&[xf], u[ip])[0][0] * zdot;
                    let alpha = zdot.abs() * self.face_bsup[i];
                    buf.fx[i] = 0.5 * (fl + fr) - 0.5 * alpha * (u[ip] - u[i]);
                }
            }
            work.diff *= dt / dx;
            work.visc *= dt * eta / dx;
            for i in 0..n {
                let im = if i == 0 { n - 1 } else { i - 1 };
                let mut rhs = (buf.gx[i] - buf.gx[im]) / dx;
                if noisy {
                    let df = buf.fx[i] - buf.fx[im];
                    rhs -= df / dx;
                    work.noise -= u[i] * df;
                }
                buf.next[i] = u[i] + dt * rhs;
            }
            work.noise *= dt;
        } else {
            // dim = 2: diffusion and viscosity only.
            let dy = dx;
            for iy in 0..n {
                for ix in 0..n {
                    let idx = self.config.grid.index2(ix, iy);
                    let ixp = self.config.grid.index2(if ix + 1 == n { 0 } else { ix + 1 }, iy);
                    let iyp = self.config.grid.index2(ix, if iy + 1 == n { 0 } else { iy + 1 });
                    let dux = u[ixp] - u[idx];
                    let dphix = buf.phi[ixp] - buf.phi[idx];
                    let duy = u[iyp] - u[idx];
                    let dphiy = buf.phi[iyp] - buf.phi[idx];
                    buf.gx[idx] = (dphix + eta * dux) / dx;
                    buf.gy[idx] = (dphiy + eta * duy) / dy;
                    work.diff += dux * dphix + duy * dphiy;
                    work.visc += dux * dux + duy * duy;
                }
            }
            // face gradients carry 1/dx each; the cell measure dx*dy restores one
            work.diff *= dt * dy / dx;
            work.visc *= dt * eta * dy / dx;
            for iy in 0..n {
                for ix in 0..n {
                    let idx = self.config.grid.index2(ix, iy);
                    let ixm = self.config.grid.index2(if ix == 0 { n - 1 } else { ix - 1 }, iy);
                    let iym = self.config.grid.index2(ix, if iy == 0 { n - 1 } else { iy - 1 });
                    let rhs =
                        (buf.gx[idx] - buf.gx[ixm]) / dx + (buf.gy[idx] - buf.gy[iym]) / dy;
                    buf.next[idx] = u[idx] + dt * rhs;
                }
            }
        }

        let mut max_abs = 0.0_f64;
        let mut finite = true;
        for &v in buf.next.iter() {
            finite &= v.is_finite();
            max_abs = max_abs.max(v.abs());
        }
        if !finite {
            return Err(SolverError::NonFinite {
                t,
                dt,
                max_u: max_abs,
            });
        }
        u.copy_from_slice(&buf.next);
        Ok(work)
    }

    /// March the state to the horizon. Steps are aligned so that no update
    /// straddles a driver knot or a snapshot time; within each span the
    /// step is chosen by the dt policy from the state at span start.
    pub fn solve(
        &self,
        u0: &ScalarField,
        path: &DrivingPath,
    ) -> Result<Trajectory, SolverError> {
        if u0.grid() != &self.config.grid {
            return Err(SolverError::BadConfig(
                "initial state grid does not match solver grid".into(),
            ));
        }
        self.guard_dims(path)?;
        let horizon = self.config.horizon;
        if path.max_speed() > 0.0 && path.horizon() < horizon * (1.0 - 1e-12) {
            return Err(SolverError::BadConfig(format!(
                "driver horizon {} shorter than solve horizon {horizon}",
                path.horizon()
            )));
        }

        let tol = 1e-12 * horizon.max(1.0);
        let mut events: Vec<f64> = vec![0.0, horizon];
        events.extend(
            path.times()
                .iter()
                .copied()
                .filter(|&t| t > tol && t < horizon - tol),
        );
        let mut snaps_wanted: Vec<f64> = self
            .config
            .snapshot_times
            .iter()
            .copied()
            .map(|s| s.clamp(0.0, horizon))
            .collect();
        snaps_wanted.sort_by(|a, b| a.partial_cmp(b).expect("finite snapshot times"));
        snaps_wanted.dedup_by(|a, b| (*a - *b).abs() <= tol);
        events.extend(snaps_wanted.iter().copied().filter(|&s| s > tol && s < horizon - tol));
        events.sort_by(|a, b| a.partial_cmp(b).expect("finite event times"));
        events.dedup_by(|a, b| (*a - *b).abs() <= tol);

        let n_nodes = u0.values().len();
        let mut u = u0.values().to_vec();
        let mut buf = WorkBuf::new(n_nodes);
        let cell = self.config.grid.cell_measure();

        let initial_mass = integrate(u0);
        let initial_l2 = lp_norm(u0, 2.0)?;
        let initial_l2_sq = initial_l2 * initial_l2;

        let mut traj = Trajectory {
            snaps: Vec::new(),
            diags: Vec::new(),
            diff_work: 0.0,
            visc_work: 0.0,
            noise_work: 0.0,
            initial_mass,
            initial_l2_sq,
            final_l2_sq: initial_l2_sq,
            max_mass_dev: 0.0,
            max_l2: initial_l2,
            steps: 0,
        };

        let mut snap_cursor = 0;
        let emit_snapshot = |t: f64, u: &[f64], traj: &mut Trajectory| {
            traj.snaps.push(Snapshot {
                t,
                field: ScalarField::new(self.config.grid, u.to_vec())
                    .expect("state length fixed by grid"),
            });
        };
        while snap_cursor < snaps_wanted.len() && snaps_wanted[snap_cursor] <= tol {
            emit_snapshot(snaps_wanted[snap_cursor], &u, &mut traj);
            snap_cursor += 1;
        }

        for w in events.windows(2) {
            let (a, b) = (w[0], w[1]);
            let span = b - a;
            let zdot = if path.max_speed() > 0.0 {
                path.slope(path.segment_of(a + 0.5 * span), 0)
            } else {
                0.0
            };
            let dt_target = match self.config.dt_policy {
                DtPolicy::Fixed(dt) => dt,
                DtPolicy::Cfl { safety } => self.cfl_dt_with_safety(&u, zdot, safety, a)?,
            };
            let n_sub = ((span / dt_target - 1e-9).ceil()).max(1.0);
            if n_sub > 1e12 {
                return Err(SolverError::DtUnderflow {
                    dt: dt_target,
                    t: a,
                    detail: format!("span {span:.6e} needs more than 1e12 substeps"),
                });
            }
            let n_sub = n_sub as u64;
            let h = span / n_sub as f64;
            for k in 0..n_sub {
                let t_k = a + k as f64 * h;
                let work = self.step_into(&mut u, t_k, h, zdot, &mut buf)?;
                traj.diff_work += work.diff;
                traj.visc_work += work.visc;
                traj.noise_work += work.noise;
                traj.steps += 1;
                let mass = u.iter().sum::<f64>() * cell;
                let l2 = (u.iter().map(|v| v * v).sum::<f64>() * cell).sqrt();
                traj.max_mass_dev = traj.max_mass_dev.max((mass - initial_mass).abs());
                traj.max_l2 = traj.max_l2.max(l2);
                traj.diags.push(StepDiag {
                    t: t_k + h,
                    dt: h,
                    mass,
                    l2,
                });
            }
            while snap_cursor < snaps_wanted.len() && snaps_wanted[snap_cursor] <= b + tol {
                emit_snapshot(snaps_wanted[snap_cursor], &u, &mut traj);
                snap_cursor += 1;
            }
        }

        let already_final = traj
            .snaps
            .last()
            .map(|s| (s.t - horizon).abs() <= tol)
            .unwrap_or(false);
        if !already_final {
            emit_snapshot(horizon, &u, &mut traj);
        }
        let l2_final = lp_norm(traj.final_field(), 2.0)?;
        traj.final_l2_sq = l2_final * l2_final;
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use noise_paths::brownian_path;

    fn grid1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    fn bump_field(grid: TorusGrid) -> ScalarField {
        ScalarField::from_fn(grid, |x| {
            let r = 4.0 * (x[0] - 0.5);
            (1.0 - r * r).max(0.0)
        })
        .unwrap()
    }

    fn solver(config: SolverConfig, kappa: f64) -> Solver {
        Solver::new(config, FluxCoefficients::separable_sine(kappa)).unwrap()
    }

    #[test]
    fn constant_state_without_noise_is_steady() {
        let grid = grid1(32);
        let config = SolverConfig::new(grid, 2.0, 0.01);
        let s = solver(config, 0.0);
        let u = ScalarField::constant(grid, 0.7).unwrap();
        let path = DrivingPath::zero(1.0, 1);
        let next = s.step(&u, 0.0, 1e-5, &path).unwrap();
        assert_eq!(next.values(), u.values());
    }

    #[test]
    fn linear_diffusion_mode_decays_at_heat_rate() {
        let grid = grid1(128);
        let mut config = SolverConfig::new(grid, 1.0, 0.01);
        config.truncation = 4.0;
        let s = solver(config, 0.0);
        let u0 = ScalarField::from_fn(grid, |x| {
            1.0 + 0.1 * (2.0 * std::f64::consts::PI * x[0]).sin()
        })
        .unwrap();
        let path = DrivingPath::zero(0.01, 1);
        let traj = s.solve(&u0, &path).unwrap();
        let vals = traj.final_field().values();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in vals {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let amp = 0.5 * (hi - lo) / 0.1;
        let expected = (-4.0 * std::f64::consts::PI.powi(2) * 0.01).exp();
        assert_relative_eq!(amp, expected, max_relative = 0.02);
    }

    #[test]
    fn mass_is_conserved_with_noise_and_signed_data() {
        let grid = grid1(64);
        let mut config = SolverConfig::new(grid, 2.0, 0.05);
        config.eta = 0.05;
        let s = solver(config, 0.8);
        let u0 = ScalarField::from_fn(grid, |x| {
            0.4 * (2.0 * std::f64::consts::PI * x[0]).cos() - 0.1
        })
        .unwrap();
        let path = brownian_path(7, 0.05, 17, 1);
        let traj = s.solve(&u0, &path).unwrap();
        let scale = 1.0_f64.max(traj.initial_mass.abs());
        assert!(
            traj.max_mass_dev <= 1e-13 * scale * traj.steps as f64 + 1e-15,
            "mass dev {} over {} steps",
            traj.max_mass_dev,
            traj.steps
        );
    }

    #[test]
    fn single_step_mass_change_is_roundoff() {
        let grid = grid1(64);
        let config = SolverConfig::new(grid, 2.0, 0.05);
        let s = solver(config, 0.8);
        let u = bump_field(grid);
        let path = brownian_path(3, 0.05, 9, 1);
        let dt = s.cfl_dt(&u, path.max_speed()).unwrap();
        let next = s.step(&u, 1e-3, dt, &path).unwrap();
        let m0 = integrate(&u);
        let m1 = integrate(&next);
        assert!((m1 - m0).abs() <= 1e-13 * m0.abs().max(1.0));
    }

    #[test]
    fn porous_medium_bump_spreads_and_stays_nonnegative() {
        let grid = grid1(128);
        let mut config = SolverConfig::new(grid, 2.0, 0.01);
        config.snapshot_times = vec![0.0, 0.002, 0.005, 0.01];
        let s = solver(config, 0.0);
        let u0 = bump_field(grid);
        let path = DrivingPath::zero(0.01, 1);
        let traj = s.solve(&u0, &path).unwrap();
        assert_eq!(traj.snaps.len(), 4);
        let support = |f: &ScalarField| f.values().iter().filter(|&&v| v > 1e-8).count();
        let mut last = 0;
        for snap in &traj.snaps {
            let sup = support(&snap.field);
            assert!(
                sup + 1 >= last,
                "support shrank from {last} to {sup} at t = {}",
                snap.t
            );
            last = last.max(sup);
            let min = snap.field.values().iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-10, "negative undershoot {min}");
        }
        assert!(
            support(traj.final_field()) > support(&traj.snaps[0].field),
            "support did not spread"
        );
        assert!(traj.max_mass_dev <= 1e-12 * traj.initial_mass);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let grid = grid1(64);
        let mut config = SolverConfig::new(grid, 2.0, 0.04);
        config.eta = 0.01;
        config.snapshot_times = vec![0.02];
        let u0 = bump_field(grid);
        let path = brownian_path(11, 0.04, 17, 1);
        let a = solver(config.clone(), 0.6).solve(&u0, &path).unwrap();
        let b = solver(config, 0.6).solve(&u0, &path).unwrap();
        assert_eq!(a.steps, b.steps);
        for (sa, sb) in a.snaps.iter().zip(b.snaps.iter()) {
            assert_eq!(sa.t, sb.t);
            assert_eq!(sa.field.values(), sb.field.values());
        }
    }

    #[test]
    fn l1_self_convergence_is_first_order() {
        let horizon = 0.01;
        let coarse_n = 64;
        let mut fields = Vec::new();
        for level in 0..3 {
            let n = coarse_n << level;
            let grid = grid1(n);
            let mut config = SolverConfig::new(grid, 2.0, horizon);
            config.eta = 0.0;
            let s = solver(config, 0.0);
            let u0 = bump_field(grid);
            let path = DrivingPath::zero(horizon, 1);
            fields.push(s.solve(&u0, &path).unwrap().final_field().clone());
        }
        // restrict each finer solution to the coarse lattice
        let l1_gap = |coarse: &ScalarField, fine: &ScalarField| {
            let nc = coarse.grid().points_per_dim();
            let stride = fine.grid().points_per_dim() / nc;
            let dx = coarse.grid().spacing();
            (0..nc)
                .map(|i| (coarse.values()[i] - fine.values()[i * stride]).abs() * dx)
                .sum::<f64>()
        };
        let e01 = l1_gap(&fields[0], &fields[1]);
        let e12 = {
            let nc = fields[1].grid().points_per_dim();
            let stride = 2;
            let dx = fields[1].grid().spacing();
            (0..nc)
                .map(|i| (fields[1].values()[i] - fields[2].values()[i * stride]).abs() * dx)
                .sum::<f64>()
        };
        let ratio = e01 / e12;
        assert!(
            ratio > 1.4 && ratio < 4.5,
            "self-convergence ratio {ratio} (gaps {e01:.3e}, {e12:.3e})"
        );
    }

    #[test]
    fn energy_ledger_is_small_and_halves_under_refinement() {
        let mut residuals = Vec::new();
        for &n in &[64usize, 128, 256] {
            let grid = grid1(n);
            let mut config = SolverConfig::new(grid, 1.0, 0.01);
            config.eta = 0.1;
            config.truncation = 4.0;
            let s = solver(config, 0.0);
            let u0 = ScalarField::from_fn(grid, |x| {
                1.0 + 0.3 * (2.0 * std::f64::consts::PI * x[0]).sin()
            })
            .unwrap();
            let path = DrivingPath::zero(0.01, 1);
            let traj = s.solve(&u0, &path).unwrap();
            residuals.push(energy_ledger(&traj));
        }
        assert!(
            residuals[1] <= 1e-3,
            "ledger residual {} at 128 nodes",
            residuals[1]
        );
        for w in residuals.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                ratio > 2.0,
                "ledger did not shrink under refinement: {residuals:?}"
            );
        }
    }

    #[test]
    fn zero_initial_state_has_zero_ledger() {
        let grid = grid1(32);
        let config = SolverConfig::new(grid, 2.0, 0.01);
        let s = solver(config, 0.5);
        let u0 = ScalarField::constant(grid, 0.0).unwrap();
        let path = brownian_path(5, 0.01, 9, 1);
        let traj = s.solve(&u0, &path).unwrap();
        assert_eq!(energy_ledger(&traj), 0.0);
        assert_eq!(traj.final_field().values(), u0.values());
    }

    #[test]
    fn l1_distance_between_ordered_states_contracts() {
        let grid = grid1(64);
        let mut config = SolverConfig::new(grid, 2.0, 0.03);
        config.eta = 0.02;
        let s = solver(config, 0.7);
        let u0 = bump_field(grid);
        let v0 = u0.map(|v| v + 0.2).unwrap();
        let path = brownian_path(13, 0.03, 17, 1);
        let ta = s.solve(&u0, &path).unwrap();
        let tb = s.solve(&v0, &path).unwrap();
        let l1 = |a: &ScalarField, b: &ScalarField| {
            let dx = a.grid().spacing();
            a.values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| (x - y).abs() * dx)
                .sum::<f64>()
        };
        let before = l1(&u0, &v0);
        let after = l1(ta.final_field(), tb.final_field());
        assert!(
            after <= before + 1e-12,
            "L1 grew: {before} -> {after}"
        );
    }

    #[test]
    fn cfl_diffusion_bound_quarters_when_points_double() {
        let path_speed = 0.0;
        let mut dts = Vec::new();
        for &n in &[64usize, 128] {
            let grid = grid1(n);
            let mut config = SolverConfig::new(grid, 1.0, 0.01);
            config.eta = 0.1;
            config.truncation = 4.0;
            let s = solver(config, 0.0);
            let u = ScalarField::constant(grid, 0.5).unwrap();
            dts.push(s.cfl_dt(&u, path_speed).unwrap());
        }
        assert_relative_eq!(dts[0] / dts[1], 4.0, max_relative = 1e-6);
    }

    #[test]
    fn cfl_transport_bound_inactive_without_noise() {
        let grid = grid1(64);
        let config = SolverConfig::new(grid, 1.0, 0.01);
        let expected = {
            let dx = grid.spacing();
            0.25 * dx * dx / 2.0
        };
        let s = solver(config, 0.0);
        let u = ScalarField::constant(grid, 0.5).unwrap();
        let dt = s.cfl_dt(&u, 0.0).unwrap();
        // m = 1 within truncation: phi' = 1, eta = 0
        assert_relative_eq!(dt, expected, max_relative = 1e-9);
    }

    #[test]
    fn cfl_transport_bound_engages_for_fast_drivers() {
        let grid = grid1(64);
        let config = SolverConfig::new(grid, 1.0, 0.01);
        let s = solver(config, 1.0);
        let u = ScalarField::constant(grid, 0.5).unwrap();
        let slow = s.cfl_dt(&u, 0.0).unwrap();
        let fast = s.cfl_dt(&u, 1e4).unwrap();
        assert!(fast < slow);
        let dx = grid.spacing();
        // sup over the face lattice of |sin(2 pi x_f)|, times max|cos(xi)| = 1
        let bsup = (0..64)
            .map(|i| (2.0 * std::f64::consts::PI * (i as f64 + 0.5) * dx).sin().abs())
            .fold(0.0_f64, f64::max);
        assert_relative_eq!(fast, 0.25 * dx / (bsup * 1e4), max_relative = 1e-6);
    }

    #[test]
    fn dt_underflow_is_reported() {
        let grid = grid1(64);
        let config = SolverConfig::new(grid, 1.0, 0.01);
        let s = solver(config, 1.0);
        let u = ScalarField::constant(grid, 0.5).unwrap();
        let err = s.cfl_dt(&u, 1e14).unwrap_err();
        match err {
            SolverError::DtUnderflow { dt, .. } => assert!(dt < 1e-12),
            other => panic!("expected DtUnderflow, got {other:?}"),
        }
    }

    #[test]
    fn fixed_dt_policy_subdivides_spans_evenly() {
        let grid = grid1(32);
        let mut config = SolverConfig::new(grid, 1.0, 0.01);
        config.truncation = 4.0;
        config.dt_policy = DtPolicy::Fixed(3e-4);
        let s = solver(config, 0.0);
        let u0 = ScalarField::constant(grid, 0.5).unwrap();
        let path = DrivingPath::zero(0.01, 1);
        let traj = s.solve(&u0, &path).unwrap();
        // 0.01 / 3e-4 = 33.3 -> 34 steps of 0.01/34
        assert_eq!(traj.steps, 34);
        for d in &traj.diags {
            assert_relative_eq!(d.dt, 0.01 / 34.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn snapshots_cover_requested_times_and_final_state() {
        let grid = grid1(32);
        let mut config = SolverConfig::new(grid, 2.0, 0.02);
        config.snapshot_times = vec![0.015, 0.0, 0.005];
        let s = solver(config, 0.3);
        let u0 = bump_field(grid);
        let path = brownian_path(2, 0.02, 9, 1);
        let traj = s.solve(&u0, &path).unwrap();
        let times: Vec<f64> = traj.snaps.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.005, 0.015, 0.02]);
        assert_eq!(traj.snaps[0].field.values(), u0.values());
        assert!(traj.snapshot_at(0.005).is_some());
        assert!(traj.snapshot_at(0.011).is_none());
    }

    #[test]
    fn dim2_diffusion_conserves_mass_and_decays_modes() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let mut config = SolverConfig::new(grid, 1.0, 0.005);
        config.truncation = 4.0;
        let s = solver(config, 0.0);
        let u0 = ScalarField::from_fn(grid, |x| {
            1.0 + 0.1
                * (2.0 * std::f64::consts::PI * x[0]).sin()
                * (2.0 * std::f64::consts::PI * x[1]).cos()
        })
        .unwrap();
        let path = DrivingPath::zero(0.005, 1);
        let traj = s.solve(&u0, &path).unwrap();
        assert!(traj.max_mass_dev <= 1e-12);
        let vals = traj.final_field().values();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in vals {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let amp = 0.5 * (hi - lo) / 0.1;
        let expected = (-8.0 * std::f64::consts::PI.powi(2) * 0.005).exp();
        assert_relative_eq!(amp, expected, max_relative = 0.05);
    }

    #[test]
    fn dim2_with_transport_noise_is_rejected() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let config = SolverConfig::new(grid, 2.0, 0.01);
        let s = solver(config, 0.5);
        let u0 = ScalarField::constant(grid, 1.0).unwrap();
        let path = brownian_path(1, 0.01, 5, 1);
        assert!(matches!(
            s.solve(&u0, &path),
            Err(SolverError::BadConfig(_))
        ));
    }

    #[test]
    fn nonpositive_exponent_is_rejected_with_message() {
        let grid = grid1(32);
        let config = SolverConfig::new(grid, 0.0, 0.01);
        match Solver::new(config, FluxCoefficients::separable_sine(0.0)) {
            Err(SolverError::BadConfig(msg)) => {
                assert!(msg.contains("diffusion exponent must be positive"), "{msg}");
            }
            other => panic!("expected BadConfig, got {other:?}"),
        }
    }

    #[test]
    fn fast_diffusion_run_stays_finite_and_conservative() {
        let grid = grid1(64);
        let mut config = SolverConfig::new(grid, 0.5, 0.01);
        config.delta = 0.05;
        let s = solver(config, 0.25);
        let u0 = ScalarField::from_fn(grid, |x| {
            0.7 + 0.25 * (2.0 * std::f64::consts::PI * x[0]).sin()
        })
        .unwrap();
        let path = brownian_path(21, 0.01, 9, 1);
        let traj = s.solve(&u0, &path).unwrap();
        assert!(traj.max_mass_dev <= 1e-12 * traj.steps as f64);
        let min = traj
            .final_field()
            .values()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min > 0.05, "positivity lost for fast diffusion: {min}");
    }
}
