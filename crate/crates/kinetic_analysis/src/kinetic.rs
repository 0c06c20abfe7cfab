//! Kinetic function chi(x, xi) and fractional Sobolev estimators.

use crate::KineticError;
use rayon::prelude::*;
use torus_core::{ScalarField, TorusGrid};

/// Uniform cell partition of a velocity interval [lo, hi].
///
/// Kinetic values are attached to cell centers; cell averages integrate the
/// exact indicator over each cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityGrid {
    lo: f64,
    hi: f64,
    n: usize,
}

impl VelocityGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self, KineticError> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(KineticError::BadInput(format!(
                "velocity range [{lo}, {hi}] is not a proper interval"
            )));
        }
        if n < 2 {
            return Err(KineticError::BadInput(format!(
                "velocity grid needs at least 2 cells, got {n}"
            )));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n_cells(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    /// Center of cell k.
    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.spacing()
    }

    /// Lower and upper edge of cell k.
    pub fn cell(&self, k: usize) -> (f64, f64) {
        let h = self.spacing();
        (self.lo + k as f64 * h, self.lo + (k + 1) as f64 * h)
    }

    pub fn covers(&self, umin: f64, umax: f64) -> bool {
        self.lo <= umin && umax <= self.hi
    }

    /// Cell containing xi, or None outside the range.
    pub fn index_of(&self, xi: f64) -> Option<usize> {
        if xi < self.lo || xi > self.hi {
            return None;
        }
        let k = ((xi - self.lo) / self.spacing()).floor() as usize;
        Some(k.min(self.n - 1))
    }
}

/// Ternary kinetic function on the tensor lattice (x nodes) x (xi centers).
///
/// chi = +1 on 0 < xi < u(x), -1 on u(x) < xi < 0, 0 elsewhere; per column the
/// nonzero entries are contiguous and share the sign of u(x). The exact column
/// heights u(x) are retained so that cell-averaged weights and the BV-in-xi
/// norm can be computed without the one-cell sampling error.
#[derive(Debug, Clone)]
pub struct KineticGrid {
    grid: TorusGrid,
    xi: VelocityGrid,
    chi: Vec<i8>,
    heights: Vec<f64>,
}

/// Build the kinetic function of a field. Errors when the velocity range does
/// not cover [min u, max u].
pub fn kinetic_function(u: &ScalarField, xi: &VelocityGrid) -> Result<KineticGrid, KineticError> {
    let vals = u.values();
    let umin = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let umax = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !xi.covers(umin.min(0.0), umax.max(0.0)) {
        return Err(KineticError::RangeViolation {
            lo: xi.lo,
            hi: xi.hi,
            umin,
            umax,
        });
    }
    let nxi = xi.n_cells();
    let mut chi = vec![0i8; vals.len() * nxi];
    for (ix, &h) in vals.iter().enumerate() {
        for k in 0..nxi {
            let c = xi.center(k);
            chi[ix * nxi + k] = if 0.0 < c && c < h {
                1
            } else if h < c && c < 0.0 {
                -1
            } else {
                0
            };
        }
    }
    Ok(KineticGrid {
        grid: *u.grid(),
        xi: *xi,
        chi,
        heights: vals.to_vec(),
    })
}

/// Signed cell-averaged weights of one column: the measure of the interval
/// between 0 and u intersected with each xi-cell, divided by the cell width,
/// carrying the sign of u. Summing weights times the spacing gives u exactly.
pub(crate) fn column_cell_weights(u: f64, xi: &VelocityGrid, out: &mut [f64]) {
    debug_assert_eq!(out.len(), xi.n_cells());
    let (a, b, sgn) = if u >= 0.0 { (0.0, u, 1.0) } else { (u, 0.0, -1.0) };
    let h = xi.spacing();
    for (k, w) in out.iter_mut().enumerate() {
        let (lo, hi) = xi.cell(k);
        let overlap = (hi.min(b) - lo.max(a)).max(0.0);
        *w = sgn * overlap / h;
    }
}

impl KineticGrid {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn xi(&self) -> &VelocityGrid {
        &self.xi
    }

    /// Ternary values, row-major: chi[ix * n_cells + k].
    pub fn chi(&self) -> &[i8] {
        &self.chi
    }

    pub fn chi_at(&self, ix: usize, k: usize) -> i8 {
        self.chi[ix * self.xi.n_cells() + k]
    }

    /// Column heights u(x_ix).
    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Signed cell-averaged weights, same layout as chi().
    pub fn cell_weights(&self) -> Vec<f64> {
        let nxi = self.xi.n_cells();
        let mut out = vec![0.0; self.heights.len() * nxi];
        for (ix, &h) in self.heights.iter().enumerate() {
            column_cell_weights(h, &self.xi, &mut out[ix * nxi..(ix + 1) * nxi]);
        }
        out
    }

    /// Per-column BV norm in xi: total variation plus L1 mass, computed from
    /// the cell-averaged weights. Equals 2 + |u| exactly for constant columns
    /// whose height spans at least one full cell.
    pub fn bv_xi_norms(&self) -> Vec<f64> {
        let nxi = self.xi.n_cells();
        let h = self.xi.spacing();
        let mut col = vec![0.0; nxi];
        self.heights
            .iter()
            .map(|&u| {
                column_cell_weights(u, &self.xi, &mut col);
                let mut tv = col[0].abs() + col[nxi - 1].abs();
                for k in 0..nxi - 1 {
                    tv += (col[k + 1] - col[k]).abs();
                }
                let mass: f64 = col.iter().map(|w| w.abs()).sum::<f64>() * h;
                tv + mass
            })
            .collect()
    }

    /// Nearest-node ternary value at an arbitrary phase-space point; zero
    /// outside the velocity range.
    pub fn sample(&self, x: f64, xi: f64) -> i8 {
        let n = self.grid.points_per_dim();
        let ix = (x / self.grid.spacing()).round() as isize;
        let ix = ix.rem_euclid(n as isize) as usize;
        match self.xi.index_of(xi) {
            Some(k) => self.chi[ix * self.xi.n_cells() + k],
            None => 0,
        }
    }
}

fn check_order(s: f64) -> Result<(), KineticError> {
    if s <= 0.0 || s >= 1.0 {
        return Err(KineticError::BadOrder(s));
    }
    Ok(())
}

/// Joint W^{s,1} norm over the (x, xi) lattice: double sum of
/// |f(w) - f(w')| / |w - w'|^{2+s} with periodic x-distance, skipping the
/// self-cell, plus the L1 term. Distance weights are tabulated once per
/// (periodic x-offset, xi-offset) pair.
fn joint_w_s1(values: &[f64], nx: usize, nxi: usize, dx: f64, dxi: f64, s: f64) -> f64 {
    let half = nx / 2;
    let mut wtab = vec![0.0; (half + 1) * nxi];
    for di in 0..=half {
        for dl in 0..nxi {
            if di == 0 && dl == 0 {
                continue;
            }
            let rx = di as f64 * dx;
            let rv = dl as f64 * dxi;
            wtab[di * nxi + dl] = (rx * rx + rv * rv).powf(-(2.0 + s) / 2.0);
        }
    }
    let cell2 = (dx * dxi) * (dx * dxi);
    let per_row: Vec<f64> = (0..nx * nxi)
        .into_par_iter()
        .map(|a| {
            let (i, k) = (a / nxi, a % nxi);
            let fa = values[a];
            let mut acc = 0.0;
            for j in 0..nx {
                let raw = if i >= j { i - j } else { j - i };
                let di = raw.min(nx - raw);
                let row = &wtab[di * nxi..(di + 1) * nxi];
                for (l, &fb) in values[j * nxi..(j + 1) * nxi].iter().enumerate() {
                    let d = fa - fb;
                    if d == 0.0 || (i == j && k == l) {
                        continue;
                    }
                    let dl = if k >= l { k - l } else { l - k };
                    acc += d.abs() * row[dl];
                }
            }
            acc
        })
        .collect();
    let semi: f64 = per_row.iter().sum::<f64>() * cell2;
    let l1: f64 = values.iter().map(|v| v.abs()).sum::<f64>() * dx * dxi;
    semi + l1
}

/// Joint W^{s,1} norm of the ternary kinetic function.
pub fn w_s1_norm(chi: &KineticGrid, s: f64) -> Result<f64, KineticError> {
    check_order(s)?;
    if chi.grid.dim() != 1 {
        return Err(KineticError::BadInput(
            "joint fractional norm supports one spatial dimension".into(),
        ));
    }
    let vals: Vec<f64> = chi.chi.iter().map(|&v| v as f64).collect();
    Ok(joint_w_s1(
        &vals,
        chi.grid.points_per_dim(),
        chi.xi.n_cells(),
        chi.grid.spacing(),
        chi.xi.spacing(),
        s,
    ))
}

/// Joint W^{s,1} norm of chi composed with a phase-space map: the value at
/// each lattice node is chi sampled at flow(x, xi).
pub fn transported_w_s1(
    chi: &KineticGrid,
    flow: &(dyn Fn(f64, f64) -> (f64, f64) + Sync),
    s: f64,
) -> Result<f64, KineticError> {
    check_order(s)?;
    if chi.grid.dim() != 1 {
        return Err(KineticError::BadInput(
            "joint fractional norm supports one spatial dimension".into(),
        ));
    }
    let nx = chi.grid.points_per_dim();
    let nxi = chi.xi.n_cells();
    let vals: Vec<f64> = (0..nx * nxi)
        .into_par_iter()
        .map(|a| {
            let (i, k) = (a / nxi, a % nxi);
            let (fx, fxi) = flow(chi.grid.coord(i), chi.xi.center(k));
            chi.sample(fx, fxi) as f64
        })
        .collect();
    Ok(joint_w_s1(
        &vals,
        nx,
        nxi,
        chi.grid.spacing(),
        chi.xi.spacing(),
        s,
    ))
}

/// One-dimensional W^{s,p} norm (p-th power form) of a field: double sum of
/// |u_i - u_j|^p / d(i,j)^{1+sp} over distinct node pairs with periodic
/// distance, plus the L^p term.
pub fn w_s1_field(u: &ScalarField, s: f64, p: f64) -> Result<f64, KineticError> {
    check_order(s)?;
    if p < 1.0 {
        return Err(KineticError::BadInput(format!(
            "integrability exponent p={p} must be >= 1"
        )));
    }
    if u.grid().dim() != 1 {
        return Err(KineticError::BadInput(
            "field fractional norm supports one spatial dimension".into(),
        ));
    }
    let n = u.grid().points_per_dim();
    let dx = u.grid().spacing();
    let vals = u.values();
    let half = n / 2;
    let mut wtab = vec![0.0; half + 1];
    for (di, w) in wtab.iter_mut().enumerate().skip(1) {
        *w = (di as f64 * dx).powf(-(1.0 + s * p));
    }
    let per_row: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let fi = vals[i];
            let mut acc = 0.0;
            for (j, &fj) in vals.iter().enumerate() {
                if i == j {
                    continue;
                }
                let raw = if i >= j { i - j } else { j - i };
                let di = raw.min(n - raw);
                acc += (fi - fj).abs().powf(p) * wtab[di];
            }
            acc
        })
        .collect();
    let semi: f64 = per_row.iter().sum::<f64>() * dx * dx;
    let lp: f64 = vals.iter().map(|v| v.abs().powf(p)).sum::<f64>() * dx;
    Ok(semi + lp)
}
