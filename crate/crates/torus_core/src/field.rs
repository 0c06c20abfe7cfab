use crate::{CoreError, TorusGrid};

/// Immutable scalar grid function on the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    /// Wrap raw values; length must match the grid and all values be finite.
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self, CoreError> {
        if values.len() != grid.node_count() {
            return Err(CoreError::LengthMismatch { got: values.len(), want: grid.node_count() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    /// Constant field.
    pub fn constant(grid: TorusGrid, c: f64) -> Result<Self, CoreError> {
        Self::new(grid, vec![c; grid.node_count()])
    }

    /// Sample a function of the node position.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self, CoreError> {
        let vals = (0..grid.node_count())
            .map(|i| {
                let p = grid.position(i);
                f(&p[..grid.dim()])
            })
            .collect();
        Self::new(grid, vals)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Apply a pointwise map, producing a fresh field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, CoreError> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Immutable vector grid function with one component field per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: TorusGrid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    /// Wrap per-component values; needs grid.dim() components of full length.
    pub fn new(grid: TorusGrid, components: Vec<Vec<f64>>) -> Result<Self, CoreError> {
        if components.len() != grid.dim() {
            return Err(CoreError::ComponentMismatch { got: components.len(), want: grid.dim() });
        }
        for comp in &components {
            if comp.len() != grid.node_count() {
                return Err(CoreError::LengthMismatch { got: comp.len(), want: grid.node_count() });
            }
            if let Some(i) = comp.iter().position(|v| !v.is_finite()) {
                return Err(CoreError::NonFinite(i));
            }
        }
        Ok(Self { grid, components })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k]
    }
}
