//! Periodic grids on the unit torus, scalar/vector fields, discrete
//! differential operators, midpoint quadrature, and the signed power.
//!
//! Everything here is a pure function of immutable inputs; operators
//! allocate fresh outputs. The torus has unit side and unit measure in
//! every dimension, so grid spacing is 1/points_per_dim.

mod field;
mod grid;
pub mod ops;
mod velocity;

pub use field::{ScalarField, VectorField};
pub use grid::TorusGrid;
pub use ops::{divergence_periodic, integrate, laplacian_periodic, lp_norm, signed_power};
pub use velocity::VelocityGrid;

/// Errors for grid and field construction.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    BadDim(usize),
    #[error("points_per_dim must be at least 8, got {0}")]
    TooFewPoints(usize),
    #[error("field has {got} values but the grid has {want} nodes")]
    LengthMismatch { got: usize, want: usize },
    #[error("field value at index {0} is not finite")]
    NonFinite(usize),
    #[error("velocity grid needs xi_min < 0 < xi_max, got [{0}, {1}]")]
    BadVelocityRange(f64, f64),
    #[error("velocity grid needs at least 2 cells, got {0}")]
    TooFewCells(usize),
    #[error("vector field needs {want} components, got {got}")]
    ComponentMismatch { got: usize, want: usize },
    #[error("lp_norm needs p >= 1, got {0}")]
    BadExponent(f64),
}
