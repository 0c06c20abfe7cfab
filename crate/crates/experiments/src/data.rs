//! Initial-data families and field distances shared by the experiments.

use crate::ExperimentError;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::f64::consts::TAU;
use torus_core::{ScalarField, TorusGrid};

pub fn line_grid(nodes: usize) -> Result<TorusGrid, ExperimentError> {
    Ok(TorusGrid::new(1, nodes)?)
}

/// Compactly supported nonnegative bump centred at 1/2, peak height 1.
pub fn bump_profile(grid: &TorusGrid) -> Result<ScalarField, ExperimentError> {
    Ok(ScalarField::from_fn(grid.clone(), |x| {
        let d = x[0] - 0.5;
        (1.0 - 16.0 * d * d).max(0.0)
    })?)
}

/// Smooth field bounded away from zero: mean in [0.45, 0.75], three modes
/// with amplitude budget 0.3, so the minimum stays >= 0.15.
pub fn positive_trig(grid: &TorusGrid, seed: u64) -> Result<ScalarField, ExperimentError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mean = rng.random_range(0.45..0.75);
    let modes: Vec<(f64, f64, f64)> = (1..=3)
        .map(|k| (k as f64, rng.random_range(-0.1..0.1), rng.random_range(0.0..TAU)))
        .collect();
    Ok(ScalarField::from_fn(grid.clone(), |x| {
        mean + modes.iter().map(|(k, a, p)| a * (TAU * k * x[0] + p).sin()).sum::<f64>()
    })?)
}

/// Smooth signed field with zero crossings: zero mean, amplitude about 0.5.
pub fn signed_trig(grid: &TorusGrid, seed: u64) -> Result<ScalarField, ExperimentError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, f64)> = (1..=3)
        .map(|k| (k as f64, rng.random_range(-0.25..0.25), rng.random_range(0.0..TAU)))
        .collect();
    Ok(ScalarField::from_fn(grid.clone(), |x| {
        modes.iter().map(|(k, a, p)| a * (TAU * k * x[0] + p).sin()).sum::<f64>()
    })?)
}

/// Discrete integral of the field.
pub fn mass(f: &ScalarField) -> f64 {
    let dx = f.grid().spacing().powi(f.grid().dim() as i32);
    f.values().iter().sum::<f64>() * dx
}

/// Discrete L1 norm.
pub fn l1_norm(f: &ScalarField) -> f64 {
    let dx = f.grid().spacing().powi(f.grid().dim() as i32);
    f.values().iter().map(|v| v.abs()).sum::<f64>() * dx
}

/// Discrete L1 distance; the fields must share a grid.
pub fn l1_distance(a: &ScalarField, b: &ScalarField) -> Result<f64, ExperimentError> {
    if a.grid() != b.grid() {
        return Err(ExperimentError::BadConfig(
            "misaligned snapshot grids: fields live on different lattices".into(),
        ));
    }
    let dx = a.grid().spacing().powi(a.grid().dim() as i32);
    Ok(a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum::<f64>() * dx)
}

/// Equally spaced times 0 = t_0 < ... < t_{count-1} = horizon.
pub fn time_lattice(horizon: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| horizon * j as f64 / (count - 1) as f64).collect()
}

/// `{:e}`-formatted cells give digest-stable CSV independent of locale.
pub fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}
