//! Kinetic-formulation analysis tools for the stochastic porous-medium solver.
//!
//! The solver evolves u(x, t); this crate lifts states to the kinetic
//! (velocity) representation chi(x, xi) = sign(u) * 1{xi between 0 and u},
//! extracts the entropy and parabolic defect measures of a trajectory, checks
//! the integration-by-parts and transported weak-form identities, and computes
//! the fractional Sobolev estimators used by the regularity experiments.

mod defect;
mod kinetic;
mod report;
mod weak_form;

pub use defect::{
    defect_measures, interpolation_check, singular_moment, DefectKind, DefectMeasure,
    DefectSample, SingularMoment,
};
pub use kinetic::{
    kinetic_function, transported_w_s1, w_s1_field, w_s1_norm, KineticGrid, VelocityGrid,
};
pub use report::{write_estimator_csv, EstimatorRow};
pub use weak_form::{ibp_check, weak_form_residual, WeakFormConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KineticError {
    #[error("velocity grid [{lo}, {hi}] does not cover the field range [{umin}, {umax}]")]
    RangeViolation {
        lo: f64,
        hi: f64,
        umin: f64,
        umax: f64,
    },
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("fractional order s={0} outside (0, 1)")]
    BadOrder(f64),
    #[error(transparent)]
    Flow(#[from] characteristics::FlowError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
