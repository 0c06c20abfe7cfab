//! Flux coefficient families A(x, xi) for the conservative noise term
//! div(A(x, u) dz), with analytically supplied derivatives.
//!
//! The transport matrix is b = d_xi A and the velocity drift is
//! c_j = sum_i d_{x_i} a_ij. Registered families satisfy two structural
//! assumptions: c(x, 0) = 0 (noise moves no mass through the zero level)
//! and the conservative identity div_x b - d_xi c = 0 (characteristics
//! preserve Lebesgue measure). Negative-control constructors deliberately
//! break each assumption for the test suites.

mod table;

pub use table::TabulatedFamily;

use std::f64::consts::PI;

/// Matrix-shaped evaluation result, row i = spatial direction, col j = noise
/// channel. Entries beyond the family's (d, n) are zero.
pub type DxN = [[f64; 2]; 2];
/// Vector-shaped evaluation result over noise channels.
pub type NVec = [f64; 2];

/// Errors raised when registering or loading a family.
#[derive(Debug, thiserror::Error)]
pub enum CoeffError {
    #[error("family violates c(x,0)=0: |c({x},0)| = {value:.3e}")]
    VanishingViolated { x: f64, value: f64 },
    #[error("family violates the conservative identity at (x,xi)=({x},{xi}): residual {value:.3e}")]
    NotConservative { x: f64, xi: f64, value: f64 },
    #[error("family is not 1-periodic in x: gap {0:.3e} at xi={1}")]
    NotPeriodic(f64, f64),
    #[error("coefficient table: {0}")]
    Table(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Report from the conservative-identity sweep.
#[derive(Debug, Clone, Copy)]
pub struct ConservativeReport {
    /// Largest |div_x b - d_xi c| over the sample set.
    pub max_residual: f64,
    /// Sample attaining the maximum.
    pub worst_point: ([f64; 2], f64),
}

/// A coefficient family with analytic first and second derivatives.
#[derive(Debug, Clone)]
pub enum FluxCoefficients {
    /// a(x, xi) = kappa sin(2 pi x) sin(xi); d = n = 1.
    SeparableSine { kappa: f64 },
    /// a(x, xi) = b0 xi, so b is the constant b0 and c = 0; d = n = 1.
    ConstantB { b0: f64 },
    /// Cubic interpolation of a sampled a(x, xi) lattice; d = n = 1.
    Tabulated(TabulatedFamily),
    /// Negative control: a = kappa sin(2 pi x)(sin(xi) + 1), conservative
    /// but c(x, 0) != 0. Construct via `broken_sign_control`.
    BrokenSign { kappa: f64 },
    /// Negative control: b of the sine family with c forced to 0, breaking
    /// the conservative identity. Construct via `broken_nonconservative_control`.
    BrokenNonconservative { kappa: f64 },
}

impl FluxCoefficients {
    /// The default noise family a(x, xi) = kappa sin(2 pi x) sin(xi).
    pub fn separable_sine(kappa: f64) -> Self {
        Self::SeparableSine { kappa }
    }

    /// Constant transport matrix, zero drift; flows have a closed form.
    pub fn constant_b(b0: f64) -> Self {
        Self::ConstantB { b0 }
    }

    /// Negative control violating c(x,0) = 0; skips the registration gate.
    pub fn broken_sign_control(kappa: f64) -> Self {
        Self::BrokenSign { kappa }
    }

    /// Negative control violating the conservative identity.
    pub fn broken_nonconservative_control(kappa: f64) -> Self {
        Self::BrokenNonconservative { kappa }
    }

    /// (spatial dimension d, noise dimension n).
    pub fn dims(&self) -> (usize, usize) {
        (1, 1)
    }

    /// Noise strength multiplier of the family (0 for tables).
    pub fn kappa(&self) -> f64 {
        match self {
            Self::SeparableSine { kappa }
            | Self::BrokenSign { kappa }
            | Self::BrokenNonconservative { kappa } => *kappa,
            Self::ConstantB { b0 } => b0.abs(),
            Self::Tabulated(_) => 0.0,
        }
    }

    /// a(x, xi) as a d x n matrix.
    pub fn a(&self, x: &[f64], xi: f64) -> DxN {
        let mut out = [[0.0; 2]; 2];
        out[0][0] = match self {
            Self::SeparableSine { kappa } => kappa * (2.0 * PI * x[0]).sin() * xi.sin(),
            Self::ConstantB { b0 } => b0 * xi,
            Self::Tabulated(t) => t.a(x[0], xi),
            Self::BrokenSign { kappa } => kappa * (2.0 * PI * x[0]).sin() * (xi.sin() + 1.0),
            Self::BrokenNonconservative { kappa } => kappa * (2.0 * PI * x[0]).sin() * xi.sin(),
        };
        out
    }

    /// b = d_xi a.
    pub fn b_matrix(&self, x: &[f64], xi: f64) -> DxN {
        let mut out = [[0.0; 2]; 2];
        out[0][0] = match self {
            Self::SeparableSine { kappa } => kappa * (2.0 * PI * x[0]).sin() * xi.cos(),
            Self::ConstantB { b0 } => *b0,
            Self::Tabulated(t) => t.a_dxi(x[0], xi),
            Self::BrokenSign { kappa } => kappa * (2.0 * PI * x[0]).sin() * xi.cos(),
            Self::BrokenNonconservative { kappa } => kappa * (2.0 * PI * x[0]).sin() * xi.cos(),
        };
        out
    }

    /// c_j = sum_i d_{x_i} a_ij.
    pub fn c_vector(&self, x: &[f64], xi: f64) -> NVec {
        let mut out = [0.0; 2];
        out[0] = match self {
            Self::SeparableSine { kappa } => 2.0 * PI * kappa * (2.0 * PI * x[0]).cos() * xi.sin(),
            Self::ConstantB { .. } => 0.0,
            Self::Tabulated(t) => t.a_dx(x[0], xi),
            Self::BrokenSign { kappa } => {
                2.0 * PI * kappa * (2.0 * PI * x[0]).cos() * (xi.sin() + 1.0)
            }
            Self::BrokenNonconservative { .. } => 0.0,
        };
        out
    }

    /// d/dx_k of b, for the Jacobian flow.
    pub fn b_dx(&self, x: &[f64], xi: f64, k: usize) -> DxN {
        debug_assert_eq!(k, 0);
        let mut out = [[0.0; 2]; 2];
        out[0][0] = match self {
            Self::SeparableSine { kappa }
            | Self::BrokenSign { kappa }
            | Self::BrokenNonconservative { kappa } => {
                2.0 * PI * kappa * (2.0 * PI * x[0]).cos() * xi.cos()
            }
            Self::ConstantB { .. } => 0.0,
            Self::Tabulated(t) => t.a_dx_dxi(x[0], xi),
        };
        out
    }

    /// d/dxi of b.
    pub fn b_dxi(&self, x: &[f64], xi: f64) -> DxN {
        let mut out = [[0.0; 2]; 2];
        out[0][0] = match self {
            Self::SeparableSine { kappa }
            | Self::BrokenSign { kappa }
            | Self::BrokenNonconservative { kappa } => {
                -kappa * (2.0 * PI * x[0]).sin() * xi.sin()
            }
            Self::ConstantB { .. } => 0.0,
            Self::Tabulated(t) => t.a_dxi2(x[0], xi),
        };
        out
    }

    /// d/dx_k of c, for the Jacobian flow.
    pub fn c_dx(&self, x: &[f64], xi: f64, k: usize) -> NVec {
        debug_assert_eq!(k, 0);
        let mut out = [0.0; 2];
        out[0] = match self {
            Self::SeparableSine { kappa } => {
                -4.0 * PI * PI * kappa * (2.0 * PI * x[0]).sin() * xi.sin()
            }
            Self::ConstantB { .. } => 0.0,
            Self::Tabulated(t) => t.a_dx2(x[0], xi),
            Self::BrokenSign { kappa } => {
                -4.0 * PI * PI * kappa * (2.0 * PI * x[0]).sin() * (xi.sin() + 1.0)
            }
            Self::BrokenNonconservative { .. } => 0.0,
        };
        out
    }

    /// d/dxi of c.
    pub fn c_dxi(&self, x: &[f64], xi: f64) -> NVec {
        let mut out = [0.0; 2];
        out[0] = match self {
            Self::SeparableSine { kappa } | Self::BrokenSign { kappa } => {
                2.0 * PI * kappa * (2.0 * PI * x[0]).cos() * xi.cos()
            }
            Self::ConstantB { .. } => 0.0,
            Self::Tabulated(t) => t.a_dx_dxi(x[0], xi),
            Self::BrokenNonconservative { .. } => 0.0,
        };
        out
    }

    /// Supremum of |b(x, .)| over all xi, used for CFL transport bounds.
    pub fn b_sup_xi(&self, x: &[f64]) -> f64 {
        match self {
            Self::SeparableSine { kappa }
            | Self::BrokenSign { kappa }
            | Self::BrokenNonconservative { kappa } => (kappa * (2.0 * PI * x[0]).sin()).abs(),
            Self::ConstantB { b0 } => b0.abs(),
            Self::Tabulated(t) => t.b_sup_xi(x[0]),
        }
    }

    /// Max over samples of |div_x b - d_xi c|, with the worst point.
    pub fn check_conservative_identity(&self, samples: &[([f64; 2], f64)]) -> ConservativeReport {
        let mut max_residual = 0.0;
        let mut worst_point = ([0.0; 2], 0.0);
        for &(x, xi) in samples {
            // d = 1: div_x b = d_x b_11, d_xi c = d_xi c_1
            let r = (self.b_dx(&x, xi, 0)[0][0] - self.c_dxi(&x, xi)[0]).abs();
            if r > max_residual {
                max_residual = r;
                worst_point = (x, xi);
            }
        }
        ConservativeReport { max_residual, worst_point }
    }

    /// Registration gate: periodicity in x, c(x,0) = 0, conservative identity.
    pub fn validate(&self) -> Result<(), CoeffError> {
        let nx = 64;
        let nxi = 64;
        for i in 0..=nx {
            let x = i as f64 / nx as f64;
            let gap = (self.a(&[x + 1.0, 0.0], 0.7)[0][0] - self.a(&[x, 0.0], 0.7)[0][0]).abs();
            if gap > 1e-10 {
                return Err(CoeffError::NotPeriodic(gap, 0.7));
            }
            let c0 = self.c_vector(&[x, 0.0], 0.0)[0].abs();
            if c0 > 1e-12 {
                return Err(CoeffError::VanishingViolated { x, value: c0 });
            }
        }
        let mut samples = Vec::new();
        for i in 0..nx {
            for k in 0..nxi {
                let x = i as f64 / nx as f64;
                let xi = -4.0 + 8.0 * k as f64 / (nxi - 1) as f64;
                samples.push(([x, 0.0], xi));
            }
        }
        let rep = self.check_conservative_identity(&samples);
        if rep.max_residual > 1e-10 {
            return Err(CoeffError::NotConservative {
                x: rep.worst_point.0[0],
                xi: rep.worst_point.1,
                value: rep.max_residual,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_dxi(f: &FluxCoefficients, x: f64, xi: f64, h: f64) -> f64 {
        (f.a(&[x, 0.0], xi + h)[0][0] - f.a(&[x, 0.0], xi - h)[0][0]) / (2.0 * h)
    }

    fn fd_dx(f: &FluxCoefficients, x: f64, xi: f64, h: f64) -> f64 {
        (f.a(&[x + h, 0.0], xi)[0][0] - f.a(&[x - h, 0.0], xi)[0][0]) / (2.0 * h)
    }

    #[test]
    fn default_family_pointwise_values() {
        let f = FluxCoefficients::separable_sine(1.0);
        assert!((f.b_matrix(&[0.25, 0.0], 0.0)[0][0] - 1.0).abs() < 1e-15);
        assert_eq!(f.b_matrix(&[0.0, 0.0], 0.37)[0][0], 0.0);
        assert!((f.c_vector(&[0.0, 0.0], PI / 2.0)[0] - 2.0 * PI).abs() < 1e-12);
        assert_eq!(f.c_vector(&[0.123, 0.0], 0.0)[0], 0.0);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let f = FluxCoefficients::separable_sine(0.8);
        let h = 1e-5;
        let b = f.b_matrix(&[0.3, 0.0], 0.7)[0][0];
        assert!((b - fd_dxi(&f, 0.3, 0.7, h)).abs() < 1e-8);
        let c = f.c_vector(&[0.2, 0.0], 1.1)[0];
        assert!((c - fd_dx(&f, 0.2, 1.1, h)).abs() < 1e-8);
    }

    #[test]
    fn fd_discrepancy_is_second_order() {
        let f = FluxCoefficients::separable_sine(1.0);
        let exact = f.b_matrix(&[0.3, 0.0], 0.7)[0][0];
        let e1 = (fd_dxi(&f, 0.3, 0.7, 1e-3) - exact).abs();
        let e2 = (fd_dxi(&f, 0.3, 0.7, 5e-4) - exact).abs();
        assert!(e2 < 0.3 * e1, "halving h should quarter the error: {e1} -> {e2}");
    }

    #[test]
    fn second_derivatives_match_central_differences() {
        let f = FluxCoefficients::separable_sine(0.6);
        let h = 1e-5;
        let (x, xi) = (0.37, 0.9);
        let bx = (f.b_matrix(&[x + h, 0.0], xi)[0][0] - f.b_matrix(&[x - h, 0.0], xi)[0][0])
            / (2.0 * h);
        assert!((f.b_dx(&[x, 0.0], xi, 0)[0][0] - bx).abs() < 1e-7);
        let bxi = (f.b_matrix(&[x, 0.0], xi + h)[0][0] - f.b_matrix(&[x, 0.0], xi - h)[0][0])
            / (2.0 * h);
        assert!((f.b_dxi(&[x, 0.0], xi)[0][0] - bxi).abs() < 1e-7);
        let cx =
            (f.c_vector(&[x + h, 0.0], xi)[0] - f.c_vector(&[x - h, 0.0], xi)[0]) / (2.0 * h);
        assert!((f.c_dx(&[x, 0.0], xi, 0)[0] - cx).abs() < 1e-6);
        let cxi =
            (f.c_vector(&[x, 0.0], xi + h)[0] - f.c_vector(&[x, 0.0], xi - h)[0]) / (2.0 * h);
        assert!((f.c_dxi(&[x, 0.0], xi)[0] - cxi).abs() < 1e-7);
    }

    #[test]
    fn conservative_identity_holds_on_random_points() {
        let f = FluxCoefficients::separable_sine(1.3);
        // low-discrepancy sweep standing in for 10^3 random points
        let samples: Vec<([f64; 2], f64)> = (0..1000)
            .map(|i| {
                let t = i as f64 / 1000.0;
                ([(t * 997.0) % 1.0, 0.0], -4.0 + 8.0 * ((t * 331.0) % 1.0))
            })
            .collect();
        let rep = f.check_conservative_identity(&samples);
        assert!(rep.max_residual <= 1e-12);
    }

    #[test]
    fn broken_family_reports_violating_point() {
        let f = FluxCoefficients::broken_nonconservative_control(1.0);
        let samples = vec![([0.1, 0.0], 0.5), ([0.3, 0.0], 1.0)];
        let rep = f.check_conservative_identity(&samples);
        assert!(rep.max_residual > 0.1);
        assert!(rep.worst_point.1 != 0.0);
        assert!(f.validate().is_err());
    }

    #[test]
    fn conservative_residual_matches_fd_oracle() {
        let f = FluxCoefficients::separable_sine(0.9);
        let h = 1e-4;
        let (x, xi) = (0.41, 0.63);
        let fd = (f.b_matrix(&[x + h, 0.0], xi)[0][0] - f.b_matrix(&[x - h, 0.0], xi)[0][0])
            / (2.0 * h)
            - (f.c_vector(&[x, 0.0], xi + h)[0] - f.c_vector(&[x, 0.0], xi - h)[0]) / (2.0 * h);
        let analytic = f.b_dx(&[x, 0.0], xi, 0)[0][0] - f.c_dxi(&[x, 0.0], xi)[0];
        // central differences carry O(h^2 (2 pi)^3) truncation here
        assert!((fd - analytic).abs() < 1e-6);
    }

    #[test]
    fn registration_gate_accepts_good_and_rejects_broken() {
        assert!(FluxCoefficients::separable_sine(0.5).validate().is_ok());
        assert!(FluxCoefficients::constant_b(2.0).validate().is_ok());
        match FluxCoefficients::broken_sign_control(0.5).validate() {
            Err(CoeffError::VanishingViolated { .. }) => {}
            other => panic!("expected vanishing violation, got {other:?}"),
        }
    }

    #[test]
    fn c_vanishes_at_zero_on_probe_grid() {
        let f = FluxCoefficients::separable_sine(2.0);
        for i in 0..64 {
            for k in 0..64 {
                let x = i as f64 / 64.0;
                let _xi = -3.0 + 6.0 * k as f64 / 63.0;
                assert!(f.c_vector(&[x, 0.0], 0.0)[0].abs() <= 1e-12);
            }
        }
    }
}
