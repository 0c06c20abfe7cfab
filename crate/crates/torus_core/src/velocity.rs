use crate::CoreError;

/// Uniform 1-D grid for the velocity variable, cells covering [xi_min, xi_max].
///
/// The range must straddle the origin; evaluation points are cell centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityGrid {
    xi_min: f64,
    xi_max: f64,
    n_xi: usize,
}

impl VelocityGrid {
    pub fn new(xi_min: f64, xi_max: f64, n_xi: usize) -> Result<Self, CoreError> {
        if !(xi_min < 0.0 && 0.0 < xi_max) || !xi_min.is_finite() || !xi_max.is_finite() {
            return Err(CoreError::BadVelocityRange(xi_min, xi_max));
        }
        if n_xi < 2 {
            return Err(CoreError::TooFewCells(n_xi));
        }
        Ok(Self { xi_min, xi_max, n_xi })
    }

    pub fn xi_min(&self) -> f64 {
        self.xi_min
    }

    pub fn xi_max(&self) -> f64 {
        self.xi_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_xi
    }

    /// Cell width.
    pub fn dxi(&self) -> f64 {
        (self.xi_max - self.xi_min) / self.n_xi as f64
    }

    /// Center of cell k.
    pub fn center(&self, k: usize) -> f64 {
        self.xi_min + (k as f64 + 0.5) * self.dxi()
    }

    /// Lower and upper edge of cell k.
    pub fn edges(&self, k: usize) -> (f64, f64) {
        let d = self.dxi();
        (self.xi_min + k as f64 * d, self.xi_min + (k as f64 + 1.0) * d)
    }

    /// True when xi lies inside the covered range.
    pub fn contains(&self, xi: f64) -> bool {
        self.xi_min <= xi && xi <= self.xi_max
    }
}
