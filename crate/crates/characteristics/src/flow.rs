//! Knot-aware RK4 integration of the characteristic ODE.

use crate::FlowError;
use coefficients::FluxCoefficients;
use noise_paths::DrivingPath;

/// A point of the space-velocity phase space: x on the torus, xi on the line.
///
/// x is kept wrapped into [0,1); winding counts how many times the
/// trajectory crossed the periodic boundary (diagnostic only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowPoint {
    pub x: f64,
    pub xi: f64,
    pub winding: i64,
}

impl FlowPoint {
    pub fn new(x: f64, xi: f64) -> Self {
        let w = x.floor();
        Self { x: x - w, xi, winding: w as i64 }
    }

    /// Unwrapped position x + winding.
    pub fn unwrapped_x(&self) -> f64 {
        self.x + self.winding as f64
    }

    /// Distance in the phase space: periodic in x, absolute in xi.
    pub fn distance(&self, other: &FlowPoint) -> f64 {
        let dx = (self.x - other.x).abs();
        let dx = dx.min(1.0 - dx);
        (dx * dx + (self.xi - other.xi) * (self.xi - other.xi)).sqrt()
    }
}

/// Right-hand side scale: dX = -b v dt, dXi = c v dt with v the driver slope.
#[inline]
fn rhs(coeffs: &FluxCoefficients, x: f64, xi: f64, v: f64) -> (f64, f64) {
    let b = coeffs.b_matrix(&[x, 0.0], xi)[0][0];
    let c = coeffs.c_vector(&[x, 0.0], xi)[0];
    (-b * v, c * v)
}

/// One RK4 step of size h on the segment with driver slope v.
#[inline]
fn rk4_step(coeffs: &FluxCoefficients, x: f64, xi: f64, v: f64, h: f64) -> (f64, f64) {
    let (k1x, k1v) = rhs(coeffs, x, xi, v);
    let (k2x, k2v) = rhs(coeffs, x + 0.5 * h * k1x, xi + 0.5 * h * k1v, v);
    let (k3x, k3v) = rhs(coeffs, x + 0.5 * h * k2x, xi + 0.5 * h * k2v, v);
    let (k4x, k4v) = rhs(coeffs, x + h * k3x, xi + h * k3v, v);
    (
        x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        xi + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

/// Split [t_from, t_to] (either orientation) at path knots and yield
/// (segment index, span start, span end) in traversal order.
pub(crate) fn knot_spans(
    path: &DrivingPath,
    t_from: f64,
    t_to: f64,
) -> Vec<(usize, f64, f64)> {
    let times = path.times();
    let mut out = Vec::new();
    if (t_from - t_to).abs() == 0.0 {
        return out;
    }
    let forward = t_to > t_from;
    let (lo, hi) = if forward { (t_from, t_to) } else { (t_to, t_from) };
    let mut spans = Vec::new();
    let mut t = lo;
    loop {
        let seg = path.segment_of(t);
        let seg_end = times[seg + 1].min(hi);
        if seg_end > t {
            spans.push((seg, t, seg_end));
        }
        if seg_end >= hi {
            break;
        }
        t = seg_end;
    }
    if forward {
        out = spans;
    } else {
        for (seg, a, b) in spans.into_iter().rev() {
            out.push((seg, b, a));
        }
    }
    out
}

pub(crate) fn integrate(
    p: FlowPoint,
    t_from: f64,
    t_to: f64,
    path: &DrivingPath,
    coeffs: &FluxCoefficients,
    dt: f64,
) -> Result<FlowPoint, FlowError> {
    if dt <= 1e-12 {
        return Err(FlowError::StepUnderflow(dt));
    }
    let horizon = path.horizon();
    let (lo, hi) = (t_from.min(t_to), t_from.max(t_to));
    if lo < -1e-12 || hi > horizon + 1e-12 {
        return Err(FlowError::OutsideDomain(lo, hi, horizon));
    }
    let mut x = p.unwrapped_x();
    let mut xi = p.xi;
    for (seg, a, b) in knot_spans(path, t_from, t_to) {
        let v = path.slope(seg, 0);
        let span = b - a;
        let n = ((span.abs() / dt) - 1e-9).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for _ in 0..n {
            let (nx, nxi) = rk4_step(coeffs, x, xi, v, h);
            x = nx;
            xi = nxi;
        }
        if !x.is_finite() || !xi.is_finite() {
            return Err(FlowError::NonFinite { t: b });
        }
    }
    Ok(FlowPoint::new(x, xi))
}

/// Flow the point forward from t0 to t1 along the driver.
pub fn flow_forward(
    p: FlowPoint,
    t0: f64,
    t1: f64,
    path: &DrivingPath,
    coeffs: &FluxCoefficients,
    dt: f64,
) -> Result<FlowPoint, FlowError> {
    integrate(p, t0, t1, path, coeffs, dt)
}

/// Invert the forward flow: p is the state at time t, the result is the
/// state at t0 (the same field integrated with time reversed).
pub fn flow_backward(
    p: FlowPoint,
    t0: f64,
    t: f64,
    path: &DrivingPath,
    coeffs: &FluxCoefficients,
    dt: f64,
) -> Result<FlowPoint, FlowError> {
    integrate(p, t, t0, path, coeffs, dt)
}

/// Forward trajectory sampled at n_snap+1 equally spaced times, optionally
/// written as CSV rows (t, x, xi).
pub fn flow_trajectory<W: std::io::Write>(
    p: FlowPoint,
    t0: f64,
    t1: f64,
    path: &DrivingPath,
    coeffs: &FluxCoefficients,
    dt: f64,
    n_snap: usize,
    sink: Option<W>,
) -> Result<Vec<(f64, FlowPoint)>, FlowError> {
    let mut out = vec![(t0, p)];
    let mut cur = p;
    for k in 1..=n_snap {
        let ta = t0 + (t1 - t0) * (k - 1) as f64 / n_snap as f64;
        let tb = t0 + (t1 - t0) * k as f64 / n_snap as f64;
        cur = integrate(cur, ta, tb, path, coeffs, dt)?;
        out.push((tb, cur));
    }
    if let Some(sink) = sink {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["t", "x", "xi"])?;
        for (t, q) in &out {
            w.write_record(&[format!("{t:.12e}"), format!("{:.12e}", q.x), format!("{:.12e}", q.xi)])?;
        }
        w.flush()?;
    }
    Ok(out)
}
