//! Tabulated coefficient family: a(x, xi) sampled on a regular lattice and
//! evaluated by tensor-product Catmull-Rom interpolation, periodic in x.

use crate::{CoeffError, FluxCoefficients};

/// Cubic-interpolated family built from (x, xi, a) samples.
///
/// The x samples must tile [0, 1) uniformly; the xi samples must be uniform
/// and should include xi = 0 as a knot so the c(x,0) = 0 gate can hold
/// exactly. Outside the xi range the table continues linearly.
#[derive(Debug, Clone)]
pub struct TabulatedFamily {
    nx: usize,
    xi0: f64,
    dxi: f64,
    n_xi: usize,
    /// Row-major: value at (i, k) = x_i, xi_k is data[i * n_xi + k].
    data: Vec<f64>,
}

/// Catmull-Rom basis on one segment, value and first two derivatives in
/// the local coordinate t in [0, 1].
fn spline(p: [f64; 4], t: f64, order: usize) -> f64 {
    let c1 = 0.5 * (p[2] - p[0]);
    let c2 = 0.5 * (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]);
    let c3 = 0.5 * (-p[0] + 3.0 * p[1] - 3.0 * p[2] + p[3]);
    match order {
        0 => p[1] + t * (c1 + t * (c2 + t * c3)),
        1 => c1 + t * (2.0 * c2 + t * 3.0 * c3),
        _ => 2.0 * c2 + t * 6.0 * c3,
    }
}

impl TabulatedFamily {
    /// Build from raw triples; validates lattice structure.
    pub fn from_records(mut rows: Vec<(f64, f64, f64)>) -> Result<Self, CoeffError> {
        if rows.len() < 16 {
            return Err(CoeffError::Table(format!("need at least 16 samples, got {}", rows.len())));
        }
        rows.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
        let mut xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut xis: Vec<f64> = rows.iter().map(|r| r.1).collect();
        xis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xis.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let (nx, n_xi) = (xs.len(), xis.len());
        if nx < 4 || n_xi < 4 {
            return Err(CoeffError::Table(format!("lattice too small: {nx} x {n_xi}")));
        }
        if rows.len() != nx * n_xi {
            return Err(CoeffError::Table(format!(
                "incomplete lattice: {} rows for {nx} x {n_xi}",
                rows.len()
            )));
        }
        let hx = 1.0 / nx as f64;
        for (i, &x) in xs.iter().enumerate() {
            if (x - i as f64 * hx).abs() > 1e-9 {
                return Err(CoeffError::Table(format!(
                    "x samples must be i/{nx} tiling [0,1): found {x}"
                )));
            }
        }
        let dxi = (xis[n_xi - 1] - xis[0]) / (n_xi - 1) as f64;
        for (k, &xi) in xis.iter().enumerate() {
            if (xi - (xis[0] + k as f64 * dxi)).abs() > 1e-9 * dxi.max(1.0) {
                return Err(CoeffError::Table(format!("xi samples must be uniform: found {xi}")));
            }
        }
        let mut data = vec![0.0; nx * n_xi];
        for (idx, row) in rows.iter().enumerate() {
            if !row.2.is_finite() {
                return Err(CoeffError::Table(format!("non-finite sample at row {idx}")));
            }
            data[idx] = row.2;
        }
        Ok(Self { nx, xi0: xis[0], dxi, n_xi, data })
    }

    /// Parse CSV with header x,xi,a.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, CoeffError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<(f64, f64, f64)>() {
            rows.push(rec?);
        }
        Self::from_records(rows)
    }

    fn at(&self, i: isize, k: isize) -> f64 {
        let n = self.nx as isize;
        let i = (((i % n) + n) % n) as usize;
        let k = k.clamp(0, self.n_xi as isize - 1) as usize;
        self.data[i * self.n_xi + k]
    }

    /// Tensor-product interpolation with per-axis derivative orders (0..=2).
    fn interp(&self, x: f64, xi: f64, ox: usize, oxi: usize) -> f64 {
        let hx = 1.0 / self.nx as f64;
        let xw = x.rem_euclid(1.0);
        let ix = (xw / hx).floor() as isize;
        let tx = (xw - ix as f64 * hx) / hx;

        // clamp xi into the covered range; linear continuation outside
        let hi = self.xi0 + (self.n_xi - 1) as f64 * self.dxi;
        let (xic, extra) = if xi < self.xi0 {
            (self.xi0, xi - self.xi0)
        } else if xi > hi {
            (hi, xi - hi)
        } else {
            (xi, 0.0)
        };
        let mut kk = ((xic - self.xi0) / self.dxi).floor() as isize;
        kk = kk.clamp(0, self.n_xi as isize - 2);
        let ti = (xic - (self.xi0 + kk as f64 * self.dxi)) / self.dxi;

        let col = |i: isize, order: usize, t: f64| -> f64 {
            let p = [self.at(i, kk - 1), self.at(i, kk), self.at(i, kk + 1), self.at(i, kk + 2)];
            spline(p, t, order) / self.dxi.powi(order as i32)
        };
        // outside the range the xi profile is affine: value + extra * slope
        let eval_xi = |i: isize| -> f64 {
            if extra != 0.0 {
                match oxi {
                    0 => col(i, 0, ti) + extra * col(i, 1, ti),
                    1 => col(i, 1, ti),
                    _ => 0.0,
                }
            } else {
                col(i, oxi, ti)
            }
        };
        let q = [eval_xi(ix - 1), eval_xi(ix), eval_xi(ix + 1), eval_xi(ix + 2)];
        spline(q, tx, ox) / hx.powi(ox as i32)
    }

    pub fn a(&self, x: f64, xi: f64) -> f64 {
        self.interp(x, xi, 0, 0)
    }

    pub fn a_dx(&self, x: f64, xi: f64) -> f64 {
        self.interp(x, xi, 1, 0)
    }

    pub fn a_dxi(&self, x: f64, xi: f64) -> f64 {
        self.interp(x, xi, 0, 1)
    }

    pub fn a_dx2(&self, x: f64, xi: f64) -> f64 {
        self.interp(x, xi, 2, 0)
    }

    pub fn a_dxi2(&self, x: f64, xi: f64) -> f64 {
        self.interp(x, xi, 0, 2)
    }

    pub fn a_dx_dxi(&self, x: f64, xi: f64) -> f64 {
        self.interp(x, xi, 1, 1)
    }

    /// Bound on |d_xi a(x, .)|: knot maximum with an overshoot guard.
    pub fn b_sup_xi(&self, x: f64) -> f64 {
        let mut sup: f64 = 0.0;
        for k in 0..self.n_xi {
            let xi = self.xi0 + k as f64 * self.dxi;
            sup = sup.max(self.a_dxi(x, xi).abs());
        }
        1.25 * sup
    }
}

impl FluxCoefficients {
    /// Load a tabulated family from CSV text and run the registration gate.
    pub fn tabulated_from_csv_str(text: &str) -> Result<Self, CoeffError> {
        let fam = Self::Tabulated(TabulatedFamily::from_csv_reader(text.as_bytes())?);
        fam.validate()?;
        Ok(fam)
    }

    /// Load a tabulated family from a CSV file and run the registration gate.
    pub fn tabulated_from_csv_path(path: &std::path::Path) -> Result<Self, CoeffError> {
        let file = std::fs::File::open(path)?;
        let fam = Self::Tabulated(TabulatedFamily::from_csv_reader(file)?);
        fam.validate()?;
        Ok(fam)
    }
}
