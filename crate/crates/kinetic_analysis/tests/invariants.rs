//! Structural invariants of the kinetic representation and the regularity
//! estimators, checked on randomized fields and short solver runs.

use characteristics::{flow_backward, FlowPoint};
use coefficients::FluxCoefficients;
use kinetic_analysis::{
    defect_measures, interpolation_check, kinetic_function, singular_moment, transported_w_s1,
    w_s1_norm, VelocityGrid,
};
use noise_paths::{brownian_path, DrivingPath};
use pme_solver::{DtPolicy, Solver, SolverConfig, Trajectory};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torus_core::{ops, ScalarField, TorusGrid};

const PI2: f64 = 2.0 * std::f64::consts::PI;

fn grid(n: usize) -> TorusGrid {
    TorusGrid::new(1, n).unwrap()
}

fn trig_field(n: usize, mean: f64, coeffs: &[(f64, f64)]) -> ScalarField {
    ScalarField::from_fn(grid(n), |x| {
        mean + coeffs
            .iter()
            .enumerate()
            .map(|(k, (a, phase))| a * (PI2 * (k + 1) as f64 * x[0] + phase).sin())
            .sum::<f64>()
    })
    .unwrap()
}

fn random_trig(rng: &mut ChaCha8Rng, n: usize) -> ScalarField {
    let mean = rng.random_range(-0.6..0.6);
    let coeffs: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.random_range(-0.4..0.4), rng.random_range(0.0..PI2)))
        .collect();
    trig_field(n, mean, &coeffs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn columns_are_sign_contiguous(
        mean in -0.8f64..0.8,
        amp in 0.0f64..0.7,
        phase in 0.0f64..PI2,
    ) {
        let u = trig_field(48, mean, &[(amp, phase)]);
        let xi = VelocityGrid::new(-2.0, 2.0, 57).unwrap();
        let kg = kinetic_function(&u, &xi).unwrap();
        for ix in 0..48 {
            let col: Vec<i8> = (0..57).map(|k| kg.chi_at(ix, k)).collect();
            let nonzero: Vec<(usize, i8)> = col
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0)
                .map(|(k, &v)| (k, v))
                .collect();
            if let Some(&(first, sign)) = nonzero.first() {
                let last = nonzero.last().unwrap().0;
                prop_assert_eq!(nonzero.len(), last - first + 1, "gap in column {}", ix);
                prop_assert!(nonzero.iter().all(|&(_, v)| v == sign), "mixed signs in column {}", ix);
                prop_assert_eq!((sign > 0), (u.values()[ix] > 0.0));
            }
        }
    }

    #[test]
    fn chi_integral_matches_the_field_integral_within_one_cell(
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_trig(&mut rng, 64);
        let xi = VelocityGrid::new(-2.5, 2.5, 80).unwrap();
        let kg = kinetic_function(&u, &xi).unwrap();
        let dxi = xi.spacing();
        let dx = u.grid().spacing();
        let chi_int: f64 = kg.chi().iter().map(|&v| v as f64).sum::<f64>() * dx * dxi;
        let u_int = ops::integrate(&u);
        prop_assert!(
            (chi_int - u_int).abs() <= dxi + 1e-12,
            "chi integral {} vs field integral {}", chi_int, u_int
        );
    }

    #[test]
    fn interpolation_ratio_is_bounded_over_random_fields(
        seed in 0u64..1000,
        m_idx in 0usize..2,
    ) {
        let m = [1.0, 2.0][m_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random_trig(&mut rng, 96);
        let r = interpolation_check(&z, m);
        prop_assert!(r.is_finite() && r >= 0.0);
        prop_assert!(r <= 10.0, "ratio {} at m={}", r, m);
    }

    #[test]
    fn singular_moments_are_monotone_in_gamma_for_subunit_velocities(
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u0 = random_trig(&mut rng, 48).map(|v| 0.2 + 0.5 * (v * 0.8).tanh().abs()).unwrap();
        let traj = short_run(&u0, 2.0, 0.05, DtPolicy::default());
        let (_, q) = defect_measures(&traj, 2.0, 0.05);
        prop_assume!(!q.is_empty());
        // |xi| <= 0.7 < 1 for this family, so lowering gamma raises the moment
        let m0 = singular_moment(&q, 0.0).value;
        let m_half = singular_moment(&q, -0.5).value;
        let m1 = singular_moment(&q, -1.0).value;
        prop_assert!(m0 <= m_half && m_half <= m1, "{} {} {}", m0, m_half, m1);
    }
}

fn short_run_for(
    u0: &ScalarField,
    m: f64,
    eta: f64,
    dt_policy: DtPolicy,
    horizon: f64,
) -> Trajectory {
    let mut config = SolverConfig::new(*u0.grid(), m, horizon);
    config.eta = eta;
    config.delta = 0.05;
    config.truncation = SolverConfig::default_truncation(u0);
    config.dt_policy = dt_policy;
    config.snapshot_times = vec![0.0, horizon / 2.0, horizon];
    let solver = Solver::new(config, FluxCoefficients::separable_sine(0.0)).unwrap();
    solver.solve(u0, &DrivingPath::zero(horizon, 1)).unwrap()
}

fn short_run(u0: &ScalarField, m: f64, eta: f64, dt_policy: DtPolicy) -> Trajectory {
    short_run_for(u0, m, eta, dt_policy, 5e-4)
}

/// Joint fractional norm of chi stays below a constant multiple of
/// 1 + ||u||_1 + ||grad u^{[(m+1)/2]}||_2^2: fit the constant on one seeded
/// family, then hold it with safety factor 2 on a disjoint family.
#[test]
fn joint_norm_is_bounded_by_mass_and_energy() {
    let xi = VelocityGrid::new(-2.5, 2.5, 64).unwrap();
    let ratio = |seed: u64| -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_trig(&mut rng, 64);
        let kg = kinetic_function(&u, &xi).unwrap();
        let norm = w_s1_norm(&kg, 0.3).unwrap();
        let dx = u.grid().spacing();
        let l1: f64 = u.values().iter().map(|v| v.abs()).sum::<f64>() * dx;
        let w: Vec<f64> = u.values().iter().map(|&v| ops::signed_power(v, 1.5)).collect();
        let n = w.len();
        let energy: f64 = (0..n)
            .map(|i| {
                let g = (w[(i + 1) % n] - w[(i + n - 1) % n]) / (2.0 * dx);
                g * g * dx
            })
            .sum();
        norm / (1.0 + l1 + energy)
    };
    let calibrated = (0..8).map(|s| ratio(s)).fold(0.0, f64::max);
    assert!(calibrated > 0.0);
    for seed in 100..108 {
        let r = ratio(seed);
        assert!(
            r <= 2.0 * calibrated,
            "holdout seed {seed}: ratio {r} exceeds 2 x calibrated {calibrated}"
        );
    }
}

/// The inverse characteristic flow preserves the joint fractional norm up to
/// a bounded factor over the default noise family.
#[test]
fn transported_norm_ratio_stays_within_the_lipschitz_window() {
    let u = trig_field(64, 0.4, &[(0.3, 0.0)]);
    let xi = VelocityGrid::new(-1.5, 1.5, 64).unwrap();
    let kg = kinetic_function(&u, &xi).unwrap();
    let base = w_s1_norm(&kg, 0.3).unwrap();

    let horizon = 0.25;
    let coeffs = FluxCoefficients::separable_sine(0.5);
    let path = brownian_path(7, horizon, 17, 1);
    let flow = move |x: f64, v: f64| {
        let q = flow_backward(FlowPoint::new(x, v), 0.0, horizon, &path, &coeffs, 1e-3)
            .expect("flow stays in the window");
        (q.x, q.xi)
    };
    let moved = transported_w_s1(&kg, &flow, 0.3).unwrap();
    let ratio = moved / base;
    assert!(
        (0.5..=2.0).contains(&ratio),
        "transported/base = {moved}/{base} = {ratio}"
    );
}

/// Constant-b flows are rigid translations: nearest-node sampling turns them
/// into exact column shifts of the lattice, so the norm is preserved to
/// rounding.
#[test]
fn constant_b_translation_preserves_the_norm() {
    let u = trig_field(48, 0.3, &[(0.4, 1.0)]);
    let xi = VelocityGrid::new(-1.2, 1.2, 48).unwrap();
    let kg = kinetic_function(&u, &xi).unwrap();
    let base = w_s1_norm(&kg, 0.3).unwrap();

    let horizon = 0.25;
    let coeffs = FluxCoefficients::constant_b(0.8);
    let path = DrivingPath::linear(&[1.0], horizon);
    let flow = move |x: f64, v: f64| {
        let q = flow_backward(FlowPoint::new(x, v), 0.0, horizon, &path, &coeffs, 1e-3)
            .expect("translation flow");
        (q.x, q.xi)
    };
    let moved = transported_w_s1(&kg, &flow, 0.3).unwrap();
    assert!(
        (moved - base).abs() <= 1e-3 * base,
        "translated norm {moved} vs {base}"
    );
}

/// gamma = -1 parabolic moment: finite and dt-stable on nonnegative data.
#[test]
fn nonnegative_moment_is_stable_under_dt_halving() {
    let u0 = ScalarField::from_fn(grid(128), |x| {
        let r = 1.0 - 16.0 * (x[0] - 0.5) * (x[0] - 0.5);
        r.max(0.0)
    })
    .unwrap();
    let coarse = short_run(&u0, 2.0, 0.0, DtPolicy::Fixed(5e-6));
    let fine = short_run(&u0, 2.0, 0.0, DtPolicy::Fixed(2.5e-6));
    let (_, qc) = defect_measures(&coarse, 2.0, 0.0);
    let (_, qf) = defect_measures(&fine, 2.0, 0.0);
    let mc = singular_moment(&qc, -1.0);
    let mf = singular_moment(&qf, -1.0);
    assert!(mc.value.is_finite() && mc.value > 0.0);
    let change = (mf.value / mc.value).max(mc.value / mf.value);
    assert!(change < 2.0, "moment jumped {}x under dt halving", change);
}

/// gamma = -1 parabolic moment diverges under refinement when the data
/// crosses zero and the diffusion is fast: the negative control trend. The
/// window is kept short so the regularized diffusion cannot smooth the
/// crossing below the finest grid scale before the measure is read off.
#[test]
fn signed_fast_diffusion_moment_grows_under_refinement() {
    let m = 0.125;
    let moment_at = |n: usize| -> f64 {
        let u0 = ScalarField::from_fn(grid(n), |x| 0.5 * (PI2 * x[0]).sin()).unwrap();
        let traj = short_run_for(&u0, m, 0.0, DtPolicy::Fixed(1e-8), 1e-7);
        let (_, q) = defect_measures(&traj, m, 0.0);
        singular_moment(&q, -1.0).value
    };
    let coarse = moment_at(32);
    let fine = moment_at(128);
    assert!(
        fine > 3.0 * coarse,
        "moment {fine} at 128 nodes vs {coarse} at 32: expected clear growth"
    );
}
