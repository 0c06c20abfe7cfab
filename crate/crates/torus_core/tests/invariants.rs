//! Property tests for the operator invariants.

use proptest::prelude::*;
use torus_core::{
    divergence_periodic, integrate, laplacian_periodic, lp_norm, signed_power, ScalarField,
    TorusGrid, VectorField,
};

proptest! {
    #[test]
    fn signed_power_is_exactly_odd(v in -1e6f64..1e6, m in 0.05f64..8.0) {
        prop_assert_eq!(signed_power(-v, m), -signed_power(v, m));
    }

    #[test]
    fn signed_power_is_monotone(a in -100.0f64..100.0, b in -100.0f64..100.0, m in 0.05f64..8.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(signed_power(lo, m) <= signed_power(hi, m));
    }

    #[test]
    fn laplacian_integral_vanishes(vals in proptest::collection::vec(-10.0f64..10.0, 16)) {
        let g = TorusGrid::new(1, 16).unwrap();
        let f = ScalarField::new(g, vals).unwrap();
        let lap = laplacian_periodic(&f);
        let bound = 1e-12 * lp_norm(&f, 1.0).unwrap() * g.node_count() as f64;
        // the telescoping bound scales with the stencil magnitude 1/h^2
        let bound = bound.max(1e-12 / (g.spacing() * g.spacing()));
        prop_assert!(integrate(&lap).abs() <= bound);
    }

    #[test]
    fn divergence_integral_vanishes(vals in proptest::collection::vec(-10.0f64..10.0, 16)) {
        let g = TorusGrid::new(1, 16).unwrap();
        let field = VectorField::new(g, vec![vals]).unwrap();
        let div = divergence_periodic(&field);
        prop_assert!(integrate(&div).abs() <= 1e-13);
    }

    #[test]
    fn divergence_integral_vanishes_2d(vals in proptest::collection::vec(-10.0f64..10.0, 128)) {
        let g = TorusGrid::new(2, 8).unwrap();
        let fx = vals[..64].to_vec();
        let fy = vals[64..].to_vec();
        let field = VectorField::new(g, vec![fx, fy]).unwrap();
        let div = divergence_periodic(&field);
        prop_assert!(integrate(&div).abs() <= 1e-13);
    }

    #[test]
    fn lp_norms_are_ordered(vals in proptest::collection::vec(-5.0f64..5.0, 16)) {
        // on the unit-measure torus, ||f||_1 <= ||f||_2 <= ||f||_inf
        let g = TorusGrid::new(1, 16).unwrap();
        let f = ScalarField::new(g, vals).unwrap();
        let n1 = lp_norm(&f, 1.0).unwrap();
        let n2 = lp_norm(&f, 2.0).unwrap();
        let ni = lp_norm(&f, f64::INFINITY).unwrap();
        prop_assert!(n1 <= n2 + 1e-12);
        prop_assert!(n2 <= ni + 1e-12);
    }
}
