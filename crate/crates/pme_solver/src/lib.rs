//! Explicit finite-volume solver for the regularized degenerate diffusion
//! with conservative rough transport:
//!
//!   du/dt = lap(phi(u)) + eta lap(u) + div(A(x, u) zdot)
//!
//! on the torus, where phi is the truncated, mollified signed power |u|^{m-1}u
//! and zdot is the piecewise-constant slope of a piecewise-linear driver.
//! Transport uses a monotone local Lax-Friedrichs flux, diffusion a centered
//! flux difference; both are kept in flux form so mass telescopes.

mod io;
mod nonlinearity;
mod scheme;

pub use io::{read_field_binary, write_field_binary, write_snapshot_csv};
pub use nonlinearity::{phi_m, phi_m_delta, psi_m, PhiTable};
pub use scheme::{energy_ledger, DtPolicy, Snapshot, Solver, SolverConfig, StepDiag, Trajectory};

/// Errors raised by configuration and time stepping.
#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("time step {dt:.3e} underflows the 1e-12 floor at t = {t:.6}: {detail}")]
    DtUnderflow { dt: f64, t: f64, detail: String },
    #[error("state became non-finite at t = {t:.6} (dt = {dt:.3e}, max |u| before = {max_u:.3e})")]
    NonFinite { t: f64, dt: f64, max_u: f64 },
    #[error(transparent)]
    Core(#[from] torus_core::CoreError),
    #[error("binary dump: {0}")]
    BadDump(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
