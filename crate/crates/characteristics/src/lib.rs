//! Characteristic flows of the kinetic transport field driven by
//! piecewise-linear paths: position moves with -b(X, Xi) dz and velocity with
//! c(X, Xi) dz. Includes variational Jacobians and the structural checks
//! (inversion, measure preservation, sign preservation, comparability,
//! flow stability).

mod checks;
mod flow;
mod jacobian;

pub use checks::{
    check_sign_preservation, flow_stability, velocity_comparability, SignReport,
};
pub use flow::{flow_backward, flow_forward, flow_trajectory, FlowPoint};
pub use jacobian::{flow_jacobian, FlowJacobian};

/// Errors raised by flow integration.
#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("step size {0} underflows the 1e-12 floor")]
    StepUnderflow(f64),
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("interval [{0}, {1}] leaves the path domain [0, {2}]")]
    OutsideDomain(f64, f64, f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
