use crate::CoreError;

/// Uniform periodic grid on the unit torus, d in {1, 2}.
///
/// Nodes sit at x_i = i * spacing; each node owns a cell of measure
/// spacing^d, so midpoint quadrature is a plain scaled sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    dim: usize,
    points_per_dim: usize,
}

impl TorusGrid {
    /// Build a grid; dim must be 1 or 2 and points_per_dim at least 8.
    pub fn new(dim: usize, points_per_dim: usize) -> Result<Self, CoreError> {
        if dim != 1 && dim != 2 {
            return Err(CoreError::BadDim(dim));
        }
        if points_per_dim < 8 {
            return Err(CoreError::TooFewPoints(points_per_dim));
        }
        Ok(Self { dim, points_per_dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    /// Grid spacing 1/points_per_dim.
    pub fn spacing(&self) -> f64 {
        1.0 / self.points_per_dim as f64
    }

    /// Total number of nodes (points_per_dim^dim).
    pub fn node_count(&self) -> usize {
        self.points_per_dim.pow(self.dim as u32)
    }

    /// Measure of one grid cell, spacing^dim.
    pub fn cell_measure(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Wrap a signed index onto [0, points_per_dim).
    pub fn wrap(&self, i: isize) -> usize {
        let n = self.points_per_dim as isize;
        (((i % n) + n) % n) as usize
    }

    /// Flat index of (ix, iy); the x index varies fastest.
    pub fn index2(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(self.dim == 2);
        ix + self.points_per_dim * iy
    }

    /// Node coordinate along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Coordinates of a flat node index.
    pub fn position(&self, idx: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.coord(idx), 0.0],
            _ => {
                let n = self.points_per_dim;
                [self.coord(idx % n), self.coord(idx / n)]
            }
        }
    }
}
