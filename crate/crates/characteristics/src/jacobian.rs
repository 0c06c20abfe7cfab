//! Variational (tangent) flow: the Jacobian of (X, Xi) with respect to the
//! starting point, integrated alongside the characteristics.

use crate::flow::{knot_spans, FlowPoint};
use crate::FlowError;
use coefficients::FluxCoefficients;
use noise_paths::DrivingPath;

/// Jacobian of the flow map, rows (X, Xi), columns (x, xi).
#[derive(Debug, Clone, Copy)]
pub struct FlowJacobian {
    pub m: [[f64; 2]; 2],
}

impl FlowJacobian {
    pub fn identity() -> Self {
        Self { m: [[1.0, 0.0], [0.0, 1.0]] }
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }
}

/// State: (x, xi, J) flattened; the tangent matrix follows dJ/dt = F' J.
#[derive(Clone, Copy)]
struct Aug {
    x: f64,
    xi: f64,
    j: [[f64; 2]; 2],
}

#[inline]
fn rhs(coeffs: &FluxCoefficients, s: &Aug, v: f64) -> Aug {
    let xs = [s.x, 0.0];
    let b = coeffs.b_matrix(&xs, s.xi)[0][0];
    let c = coeffs.c_vector(&xs, s.xi)[0];
    // F'(x, xi) = [[-b_x v, -b_xi v], [c_x v, c_xi v]]
    let f = [
        [-coeffs.b_dx(&xs, s.xi, 0)[0][0] * v, -coeffs.b_dxi(&xs, s.xi)[0][0] * v],
        [coeffs.c_dx(&xs, s.xi, 0)[0] * v, coeffs.c_dxi(&xs, s.xi)[0] * v],
    ];
    let mut dj = [[0.0; 2]; 2];
    for r in 0..2 {
        for col in 0..2 {
            dj[r][col] = f[r][0] * s.j[0][col] + f[r][1] * s.j[1][col];
        }
    }
    Aug { x: -b * v, xi: c * v, j: dj }
}

#[inline]
fn axpy(s: &Aug, k: &Aug, h: f64) -> Aug {
    let mut j = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            j[r][c] = s.j[r][c] + h * k.j[r][c];
        }
    }
    Aug { x: s.x + h * k.x, xi: s.xi + h * k.xi, j }
}

/// Jacobian of the forward flow from t0 to t1 at p.
pub fn flow_jacobian(
    p: FlowPoint,
    t0: f64,
    t1: f64,
    path: &DrivingPath,
    coeffs: &FluxCoefficients,
    dt: f64,
) -> Result<FlowJacobian, FlowError> {
    if dt <= 1e-12 {
        return Err(FlowError::StepUnderflow(dt));
    }
    let horizon = path.horizon();
    if t0.min(t1) < -1e-12 || t0.max(t1) > horizon + 1e-12 {
        return Err(FlowError::OutsideDomain(t0.min(t1), t0.max(t1), horizon));
    }
    let mut s = Aug { x: p.unwrapped_x(), xi: p.xi, j: FlowJacobian::identity().m };
    for (seg, a, b) in knot_spans(path, t0, t1) {
        let v = path.slope(seg, 0);
        let span = b - a;
        let n = ((span.abs() / dt) - 1e-9).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for _ in 0..n {
            let k1 = rhs(coeffs, &s, v);
            let k2 = rhs(coeffs, &axpy(&s, &k1, 0.5 * h), v);
            let k3 = rhs(coeffs, &axpy(&s, &k2, 0.5 * h), v);
            let k4 = rhs(coeffs, &axpy(&s, &k3, h), v);
            let mut j = [[0.0; 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    j[r][c] = s.j[r][c]
                        + h / 6.0
                            * (k1.j[r][c] + 2.0 * k2.j[r][c] + 2.0 * k3.j[r][c] + k4.j[r][c]);
                }
            }
            s = Aug {
                x: s.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
                xi: s.xi + h / 6.0 * (k1.xi + 2.0 * k2.xi + 2.0 * k3.xi + k4.xi),
                j,
            };
        }
        if !s.x.is_finite() || !s.xi.is_finite() {
            return Err(FlowError::NonFinite { t: b });
        }
    }
    Ok(FlowJacobian { m: s.j })
}
