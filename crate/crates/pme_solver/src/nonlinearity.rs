//! Truncated and mollified power nonlinearity.

use torus_core::signed_power;

/// Globally Lipschitz truncation of the signed power: the power inside
/// |xi| <= truncation, its tangent-free linear continuation outside.
pub fn phi_m(xi: f64, truncation: f64, m: f64) -> f64 {
    debug_assert!(truncation >= 1.0 && m > 0.0);
    if xi.abs() <= truncation {
        signed_power(xi, m)
    } else {
        xi * truncation.powf(m - 1.0)
    }
}

/// Antiderivative of phi_m with value 0 at 0: |xi|^{m+1}/(m+1) inside the
/// truncation, quadratic outside (C^1 across the seam).
pub fn psi_m(xi: f64, truncation: f64, m: f64) -> f64 {
    let a = xi.abs();
    if a <= truncation {
        a.powf(m + 1.0) / (m + 1.0)
    } else {
        truncation.powf(m + 1.0) / (m + 1.0)
            + truncation.powf(m - 1.0) * (xi * xi - truncation * truncation) / 2.0
    }
}

const QUAD_POINTS: usize = 129;

/// Simpson weights and symmetric abscissae for the mollification window
/// [-4 delta, 4 delta]; the kernel support is [-delta, delta].
fn quad_nodes(delta: f64) -> ([f64; QUAD_POINTS], [f64; QUAD_POINTS]) {
    let h = 8.0 * delta / (QUAD_POINTS - 1) as f64;
    let mut ys = [0.0; QUAD_POINTS];
    let mut ws = [0.0; QUAD_POINTS];
    for (j, y) in ys.iter_mut().enumerate() {
        *y = (j as f64 - (QUAD_POINTS - 1) as f64 / 2.0) * h;
    }
    for (j, w) in ws.iter_mut().enumerate() {
        *w = if j == 0 || j == QUAD_POINTS - 1 {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        } * h
            / 3.0;
    }
    (ys, ws)
}

/// Smooth bump supported on [-delta, delta].
fn bump(y: f64, delta: f64) -> f64 {
    let r = y / delta;
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

/// Mollified truncation: phi_m convolved with a symmetric compact bump of
/// width delta, by 129-point Simpson quadrature. The kernel is normalized
/// on the same discrete quadrature, so affine stretches of phi_m are
/// reproduced exactly.
pub fn phi_m_delta(xi: f64, truncation: f64, delta: f64, m: f64) -> f64 {
    debug_assert!(delta > 0.0);
    let (ys, ws) = quad_nodes(delta);
    let mut norm = 0.0;
    let mut acc = 0.0;
    for j in 0..QUAD_POINTS {
        let k = ws[j] * bump(ys[j], delta);
        norm += k;
        acc += k * phi_m(xi - ys[j], truncation, m);
    }
    acc / norm
}

/// Lookup table for the mollified nonlinearity and its derivative.
///
/// Two resolutions: a fine table around 0 (where fast diffusion m < 1 makes
/// the derivative peak sharply at scale delta) and a coarse table covering
/// the truncation range. Outside |xi| >= truncation + delta the function is
/// exactly linear and evaluated in closed form.
#[derive(Debug, Clone)]
pub struct PhiTable {
    m: f64,
    truncation: f64,
    delta: f64,
    slope_out: f64,
    fine_hi: f64,
    fine_h: f64,
    fine: Vec<f64>,
    coarse_hi: f64,
    coarse_h: f64,
    coarse: Vec<f64>,
}

fn build(
    truncation: f64,
    delta: f64,
    m: f64,
    hi: f64,
    intervals: usize,
) -> (f64, Vec<f64>) {
    let h = 2.0 * hi / intervals as f64;
    let vals: Vec<f64> = (0..=intervals)
        .map(|j| phi_m_delta(-hi + j as f64 * h, truncation, delta, m))
        .collect();
    (h, vals)
}

fn lerp(vals: &[f64], hi: f64, h: f64, xi: f64) -> f64 {
    let s = (xi + hi) / h;
    let j = (s.floor() as usize).min(vals.len() - 2);
    let frac = s - j as f64;
    vals[j] + frac * (vals[j + 1] - vals[j])
}

impl PhiTable {
    pub fn new(truncation: f64, delta: f64, m: f64) -> Self {
        let fine_hi = 16.0 * delta;
        let (fine_h, fine) = build(truncation, delta, m, fine_hi, 4096);
        let coarse_hi = truncation + 2.0 * delta;
        let (coarse_h, coarse) = build(truncation, delta, m, coarse_hi, 32768);
        Self {
            m,
            truncation,
            delta,
            slope_out: truncation.powf(m - 1.0),
            fine_hi,
            fine_h,
            fine,
            coarse_hi,
            coarse_h,
            coarse,
        }
    }

    pub fn exponent(&self) -> f64 {
        self.m
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Table evaluation of the mollified nonlinearity.
    pub fn eval(&self, xi: f64) -> f64 {
        let a = xi.abs();
        if a >= self.truncation + self.delta {
            return xi * self.slope_out;
        }
        if a <= self.fine_hi - 2.0 * self.fine_h && self.fine_h < self.coarse_h {
            return lerp(&self.fine, self.fine_hi, self.fine_h, xi);
        }
        lerp(&self.coarse, self.coarse_hi, self.coarse_h, xi)
    }

    /// Derivative of the table function (central differences at table
    /// resolution); used for stability bounds only.
    pub fn deriv(&self, xi: f64) -> f64 {
        let a = xi.abs();
        if a >= self.truncation + self.delta {
            return self.slope_out;
        }
        let h = if a <= self.fine_hi - 3.0 * self.fine_h && self.fine_h < self.coarse_h {
            self.fine_h
        } else {
            self.coarse_h
        };
        (self.eval(xi + h) - self.eval(xi - h)) / (2.0 * h)
    }

    /// Largest derivative over the closed interval spanned by the values,
    /// including the near-zero peak when the interval touches it.
    pub fn max_deriv(&self, lo: f64, hi: f64) -> f64 {
        let mut worst = self.deriv(lo).max(self.deriv(hi));
        if lo <= self.delta && hi >= -self.delta {
            worst = worst.max(self.deriv(0.0));
        }
        // scan a modest lattice; the derivative is monotone away from the
        // delta-peak so this is ample
        for j in 0..=32 {
            let xi = lo + (hi - lo) * j as f64 / 32.0;
            worst = worst.max(self.deriv(xi));
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_power_pointwise_values() {
        assert_eq!(phi_m(1.0, 2.0, 2.0), 1.0);
        assert_eq!(phi_m(3.0, 2.0, 2.0), 6.0);
        assert_eq!(phi_m(-3.0, 2.0, 2.0), -6.0);
    }

    #[test]
    fn truncated_power_is_monotone_and_continuous_at_the_seam() {
        let eps = 1e-9;
        let inner = phi_m(2.0 - eps, 2.0, 2.0);
        let outer = phi_m(2.0 + eps, 2.0, 2.0);
        assert!((inner - 4.0).abs() < 1e-7 && (outer - 4.0).abs() < 1e-7);
        let mut prev = f64::NEG_INFINITY;
        for j in 0..200 {
            let v = phi_m(-4.0 + j as f64 * 0.04, 2.0, 1.4);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn mollified_is_exactly_affine_far_outside() {
        let (truncation, delta, m) = (2.0, 0.1, 2.0);
        for xi in [2.2, 3.0, -2.5] {
            let expect = xi * truncation;
            assert!(
                (phi_m_delta(xi, truncation, delta, m) - expect).abs() < 1e-13,
                "xi = {xi}"
            );
        }
    }

    #[test]
    fn mollified_is_odd() {
        for xi in [0.3, 1.0, 1.9, 2.4] {
            let p = phi_m_delta(xi, 2.0, 0.05, 2.0);
            let q = phi_m_delta(-xi, 2.0, 0.05, 2.0);
            assert!((p + q).abs() <= 1e-12);
        }
    }

    #[test]
    fn mollification_error_vanishes_with_delta() {
        // smooth point: second-order shrink; the seam decays first order
        let target = phi_m(1.5, 2.0, 2.0);
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&d| (phi_m_delta(1.5, 2.0, d, 2.0) - target).abs())
            .collect();
        assert!(errs[1] < errs[0] / 1.8 && errs[2] < errs[1] / 1.8, "{errs:?}");
        let seam = phi_m(2.0, 2.0, 2.0);
        let seam_errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&d| (phi_m_delta(2.0, 2.0, d, 2.0) - seam).abs())
            .collect();
        let r1 = seam_errs[0] / seam_errs[1];
        let r2 = seam_errs[1] / seam_errs[2];
        assert!((1.6..2.6).contains(&r1) && (1.6..2.6).contains(&r2), "{seam_errs:?}");
    }

    #[test]
    fn mollified_derivative_respects_the_window_minimum() {
        // derivative of the convolution is a kernel average of phi' values
        let (truncation, delta, m) = (2.0, 0.05, 2.0);
        for xi in [0.5f64, 1.0, 1.7] {
            let h = 1e-6;
            let d = (phi_m_delta(xi + h, truncation, delta, m)
                - phi_m_delta(xi - h, truncation, delta, m))
                / (2.0 * h);
            let window_min = m * (xi.abs() - delta).max(0.0).powf(m - 1.0);
            assert!(d >= window_min - 1e-9, "xi = {xi}: {d} < {window_min}");
        }
    }

    #[test]
    fn antiderivative_pointwise_values() {
        assert!((psi_m(1.0, 2.0, 2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((psi_m(3.0, 2.0, 2.0) - 23.0 / 3.0).abs() < 1e-14);
        assert_eq!(psi_m(0.0, 2.0, 2.0), 0.0);
    }

    #[test]
    fn antiderivative_slope_is_the_truncated_power_at_the_seam() {
        // psi'' jumps at the seam, so the central difference is O(h) there
        let h = 1e-6;
        let fd = (psi_m(2.0 + h, 2.0, 2.0) - psi_m(2.0 - h, 2.0, 2.0)) / (2.0 * h);
        assert!((fd - phi_m(2.0, 2.0, 2.0)).abs() < 1e-6, "fd {fd}");
    }

    #[test]
    fn table_matches_direct_convolution() {
        let t = PhiTable::new(2.0, 1e-3, 2.0);
        for xi in [-1.9f64, -0.5, -1e-3, 0.0, 2e-3, 0.7, 1.99, 2.5] {
            let direct = phi_m_delta(xi, 2.0, 1e-3, 2.0);
            assert!(
                (t.eval(xi) - direct).abs() < 1e-8,
                "xi = {xi}: {} vs {direct}",
                t.eval(xi)
            );
        }
    }

    #[test]
    fn table_handles_fast_diffusion_near_zero() {
        let t = PhiTable::new(2.0, 1e-3, 0.5);
        for &xi in &[0.0, 1e-4, 5e-4, 2e-3, 0.01] {
            let direct = phi_m_delta(xi, 2.0, 1e-3, 0.5);
            assert!(
                (t.eval(xi) - direct).abs() < 1e-6,
                "xi = {xi}: {} vs {direct}",
                t.eval(xi)
            );
        }
        // derivative peaks near zero and is finite
        let d0 = t.deriv(0.0);
        assert!(d0.is_finite() && d0 > t.deriv(0.5));
        assert!(t.max_deriv(-0.1, 1.0) >= d0);
    }
}
