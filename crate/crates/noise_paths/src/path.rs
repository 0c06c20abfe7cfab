//! Piecewise-linear driving paths and their generators.

use crate::NoiseError;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// A piecewise-linear path t -> z(t) in R^n on [0, T].
///
/// Slopes are stored once at construction; evaluation between knots is exact
/// linear interpolation and the derivative is piecewise constant
/// (right-continuous at knots).
#[derive(Debug, Clone)]
pub struct DrivingPath {
    dims: usize,
    times: Vec<f64>,
    /// Row-major: values[k * dims + j] is component j at knot k.
    values: Vec<f64>,
    /// Row-major per segment: slopes[s * dims + j].
    slopes: Vec<f64>,
}

impl DrivingPath {
    /// Build from knot times and row-major values; validates monotone times.
    pub fn from_knots(times: Vec<f64>, values: Vec<f64>, dims: usize) -> Result<Self, NoiseError> {
        if times.len() < 2 {
            return Err(NoiseError::TooFewKnots(times.len()));
        }
        if times[0] != 0.0 {
            return Err(NoiseError::BadKnots(0));
        }
        for k in 1..times.len() {
            if !(times[k] > times[k - 1]) || !times[k].is_finite() {
                return Err(NoiseError::BadKnots(k));
            }
        }
        let expected = times.len() * dims;
        if values.len() != expected || dims == 0 {
            return Err(NoiseError::LengthMismatch {
                expected,
                got: values.len(),
                knots: times.len(),
                dims,
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(NoiseError::NonFinite(k / dims));
        }
        let mut slopes = Vec::with_capacity((times.len() - 1) * dims);
        for s in 0..times.len() - 1 {
            let dt = times[s + 1] - times[s];
            for j in 0..dims {
                slopes.push((values[(s + 1) * dims + j] - values[s * dims + j]) / dt);
            }
        }
        Ok(Self { dims, times, values, slopes })
    }

    /// The constant-zero path on [0, horizon] (silent driver).
    pub fn zero(horizon: f64, dims: usize) -> Self {
        Self::from_knots(vec![0.0, horizon], vec![0.0; 2 * dims], dims).unwrap()
    }

    /// z(t) = v t on [0, horizon].
    pub fn linear(v: &[f64], horizon: f64) -> Self {
        let mut values = vec![0.0; v.len()];
        values.extend(v.iter().map(|&c| c * horizon));
        Self::from_knots(vec![0.0, horizon], values, v.len()).unwrap()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n_knots(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn knot_value(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.dims + j]
    }

    /// Index of the segment containing t (last segment for t >= horizon).
    pub fn segment_of(&self, t: f64) -> usize {
        let n = self.times.len();
        let k = self.times.partition_point(|&s| s <= t);
        k.clamp(1, n - 1) - 1
    }

    /// Slope of component j on segment s; this is the driver velocity.
    pub fn slope(&self, seg: usize, j: usize) -> f64 {
        self.slopes[seg * self.dims + j]
    }

    /// Largest |slope| over all segments and components.
    pub fn max_speed(&self) -> f64 {
        self.slopes.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Component j at time t (clamped to [0, horizon]).
    pub fn value_dim(&self, t: f64, j: usize) -> f64 {
        let t = t.clamp(0.0, self.horizon());
        let s = self.segment_of(t);
        self.values[s * self.dims + j] + self.slopes[s * self.dims + j] * (t - self.times[s])
    }

    /// Full value vector at time t.
    pub fn value(&self, t: f64) -> Vec<f64> {
        (0..self.dims).map(|j| self.value_dim(t, j)).collect()
    }

    /// Right-continuous derivative vector at time t.
    pub fn derivative(&self, t: f64) -> Vec<f64> {
        let s = self.segment_of(t);
        self.slopes[s * self.dims..(s + 1) * self.dims].to_vec()
    }

    /// Restarted path on [t_k, T], re-zeroed in time and value.
    ///
    /// Slopes are copied verbatim rather than recomputed so a restarted
    /// solver sees exactly the driver velocities of the original run.
    pub fn restart_at_knot(&self, k: usize) -> Result<Self, NoiseError> {
        if k + 2 > self.times.len() {
            return Err(NoiseError::TooFewKnots(self.times.len() - k));
        }
        let t0 = self.times[k];
        let times: Vec<f64> = self.times[k..].iter().map(|&t| t - t0).collect();
        let mut values = Vec::with_capacity((self.times.len() - k) * self.dims);
        for kk in k..self.times.len() {
            for j in 0..self.dims {
                values.push(self.values[kk * self.dims + j] - self.values[k * self.dims + j]);
            }
        }
        let slopes = self.slopes[k * self.dims..].to_vec();
        Ok(Self { dims: self.dims, times, values, slopes })
    }

    /// Path scaled by lambda in value space.
    pub fn scale(&self, lambda: f64) -> Self {
        Self {
            dims: self.dims,
            times: self.times.clone(),
            values: self.values.iter().map(|v| lambda * v).collect(),
            slopes: self.slopes.iter().map(|s| lambda * s).collect(),
        }
    }

    /// The path followed by its own retracing, on a doubled horizon.
    pub fn concat_retrace(&self) -> Self {
        let horizon = self.horizon();
        let n = self.times.len();
        let mut times = self.times.clone();
        let mut values = self.values.clone();
        for k in (0..n - 1).rev() {
            times.push(2.0 * horizon - self.times[k]);
            for j in 0..self.dims {
                values.push(self.values[k * self.dims + j]);
            }
        }
        Self::from_knots(times, values, self.dims).unwrap()
    }

    /// Write knots as CSV with header t,z1..zn.
    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<(), NoiseError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dims).map(|j| format!("z{j}")));
        w.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut rec = vec![format!("{:.17e}", self.times[k])];
            rec.extend((0..self.dims).map(|j| format!("{:.17e}", self.values[k * self.dims + j])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a path written by `to_csv`.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self, NoiseError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let dims = rdr.headers()?.len().saturating_sub(1);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row: Vec<f64> = rec
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| NoiseError::NotPositiveDefinite(format!("csv parse: {e}")))?;
            times.push(row[0]);
            values.extend_from_slice(&row[1..]);
        }
        Self::from_knots(times, values, dims)
    }
}

/// Brownian sample path on [0, T] with n_knots equally spaced knots.
pub fn brownian_path(seed: u64, horizon: f64, n_knots: usize, dims: usize) -> DrivingPath {
    assert!(n_knots >= 2, "need at least 2 knots");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dt = horizon / (n_knots - 1) as f64;
    let sd = dt.sqrt();
    let times: Vec<f64> = (0..n_knots).map(|k| k as f64 * dt).collect();
    let mut values = vec![0.0; n_knots * dims];
    for k in 1..n_knots {
        for j in 0..dims {
            let g: f64 = rng.sample(StandardNormal);
            values[k * dims + j] = values[(k - 1) * dims + j] + sd * g;
        }
    }
    DrivingPath::from_knots(times, values, dims).unwrap()
}

/// Fractional Brownian sample with exact covariance, factorized directly.
pub fn fbm_path(
    seed: u64,
    hurst: f64,
    horizon: f64,
    n_knots: usize,
    dims: usize,
) -> Result<DrivingPath, NoiseError> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(NoiseError::BadHurst(hurst));
    }
    if n_knots < 2 {
        return Err(NoiseError::TooFewKnots(n_knots));
    }
    if n_knots > 1 << 14 {
        return Err(NoiseError::TooManyKnots(n_knots));
    }
    let dt = horizon / (n_knots - 1) as f64;
    let times: Vec<f64> = (0..n_knots).map(|k| k as f64 * dt).collect();
    let m = n_knots - 1; // t = 0 carries no randomness
    let h2 = 2.0 * hurst;
    let cov = DMatrix::from_fn(m, m, |i, j| {
        let (ti, tj) = (times[i + 1], times[j + 1]);
        0.5 * (ti.powf(h2) + tj.powf(h2) - (ti - tj).abs().powf(h2))
    });
    let chol = nalgebra::Cholesky::new(cov).ok_or_else(|| {
        NoiseError::NotPositiveDefinite(format!(
            "fbm covariance for H={hurst}, {m} knots is numerically not positive definite"
        ))
    })?;
    let l = chol.l();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut values = vec![0.0; n_knots * dims];
    for j in 0..dims {
        let g: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..m {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += l[(i, k)] * g[k];
            }
            values[(i + 1) * dims + j] = acc;
        }
    }
    DrivingPath::from_knots(times, values, dims)
}

/// Piecewise-linear interpolation of `path` at 2^k + 1 equally spaced times.
pub fn dyadic_refine(path: &DrivingPath, level: u32) -> DrivingPath {
    let n = (1usize << level) + 1;
    let horizon = path.horizon();
    let times: Vec<f64> = (0..n).map(|k| k as f64 * horizon / (n - 1) as f64).collect();
    let mut values = Vec::with_capacity(n * path.dims());
    for &t in &times {
        values.extend(path.value(t));
    }
    DrivingPath::from_knots(times, values, path.dims()).unwrap()
}

/// Sample points for Hölder/metric suprema: knots plus 4 interior points per
/// segment.
pub(crate) fn sample_times(path: &DrivingPath) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.n_knots() * 5);
    let times = path.times();
    for s in 0..times.len() - 1 {
        out.push(times[s]);
        let dt = times[s + 1] - times[s];
        for q in 1..=4 {
            out.push(times[s] + dt * q as f64 / 5.0);
        }
    }
    out.push(*times.last().unwrap());
    out
}

/// alpha-Hölder seminorm of the path over the standard sample set.
pub fn holder_norm(path: &DrivingPath, alpha: f64) -> Result<f64, NoiseError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(NoiseError::BadAlpha(alpha));
    }
    let pts = sample_times(path);
    let vals: Vec<Vec<f64>> = pts.iter().map(|&t| path.value(t)).collect();
    let mut sup: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let gap = pts[j] - pts[i];
            if gap <= 0.0 {
                continue;
            }
            let mut d2 = 0.0;
            for c in 0..path.dims() {
                let d = vals[j][c] - vals[i][c];
                d2 += d * d;
            }
            sup = sup.max(d2.sqrt() / gap.powf(alpha));
        }
    }
    Ok(sup)
}
