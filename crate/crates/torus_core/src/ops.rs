//! Discrete operators and quadrature on periodic grids.

use crate::{CoreError, ScalarField, VectorField};

/// Signed power v^[m] = |v|^{m-1} v, odd and monotone in v; 0^[m] = 0.
pub fn signed_power(v: f64, m: f64) -> f64 {
    debug_assert!(m > 0.0);
    // computed as |v|^m with the sign reattached so oddness is exact
    let mag = v.abs().powf(m);
    if v < 0.0 {
        -mag
    } else {
        mag
    }
}

/// Periodic second-difference Laplacian: 3-point stencil in 1-D, 5-point in 2-D.
pub fn laplacian_periodic(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let h2 = g.spacing() * g.spacing();
    let v = f.values();
    let n = g.points_per_dim();
    let mut out = vec![0.0; g.node_count()];
    match g.dim() {
        1 => {
            for i in 0..n {
                let l = v[g.wrap(i as isize - 1)];
                let r = v[g.wrap(i as isize + 1)];
                out[i] = (l - 2.0 * v[i] + r) / h2;
            }
        }
        _ => {
            for iy in 0..n {
                for ix in 0..n {
                    let c = v[g.index2(ix, iy)];
                    let xl = v[g.index2(g.wrap(ix as isize - 1), iy)];
                    let xr = v[g.index2(g.wrap(ix as isize + 1), iy)];
                    let yl = v[g.index2(ix, g.wrap(iy as isize - 1))];
                    let yr = v[g.index2(ix, g.wrap(iy as isize + 1))];
                    out[g.index2(ix, iy)] = (xl + xr + yl + yr - 4.0 * c) / h2;
                }
            }
        }
    }
    ScalarField::new(g, out).expect("stencil of a finite field is finite")
}

/// Periodic divergence in conservative form.
///
/// Per component the face flux is the two-node average, so the node value is
/// the centered difference (F[i+1] - F[i-1]) / (2h) and the sum telescopes.
pub fn divergence_periodic(field: &VectorField) -> ScalarField {
    let g = *field.grid();
    let two_h = 2.0 * g.spacing();
    let n = g.points_per_dim();
    let mut out = vec![0.0; g.node_count()];
    match g.dim() {
        1 => {
            let fx = field.component(0);
            for i in 0..n {
                out[i] = (fx[g.wrap(i as isize + 1)] - fx[g.wrap(i as isize - 1)]) / two_h;
            }
        }
        _ => {
            let fx = field.component(0);
            let fy = field.component(1);
            for iy in 0..n {
                for ix in 0..n {
                    let dx = fx[g.index2(g.wrap(ix as isize + 1), iy)]
                        - fx[g.index2(g.wrap(ix as isize - 1), iy)];
                    let dy = fy[g.index2(ix, g.wrap(iy as isize + 1))]
                        - fy[g.index2(ix, g.wrap(iy as isize - 1))];
                    out[g.index2(ix, iy)] = (dx + dy) / two_h;
                }
            }
        }
    }
    ScalarField::new(g, out).expect("difference of a finite field is finite")
}

/// Midpoint quadrature over the unit torus: cell measure times value sum.
pub fn integrate(f: &ScalarField) -> f64 {
    f.values().iter().sum::<f64>() * f.grid().cell_measure()
}

/// L^p norm for p in [1, inf]; pass f64::INFINITY for the sup norm.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64, CoreError> {
    if !(p >= 1.0) {
        return Err(CoreError::BadExponent(p));
    }
    if p.is_infinite() {
        return Ok(f.values().iter().fold(0.0, |acc, v| acc.max(v.abs())));
    }
    let meas = f.grid().cell_measure();
    let sum: f64 = f.values().iter().map(|v| v.abs().powf(p)).sum();
    Ok((sum * meas).powf(1.0 / p))
}
