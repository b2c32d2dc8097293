use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Driving function sampled on an increasing time grid, linearly
/// interpolated in between and held constant past the last sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingFunction {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl DrivingFunction {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Input(
                "driving needs equal, nonempty time and value lists".into(),
            ));
        }
        if times.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::Input("non-finite driving sample".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input(
                "driving times must be strictly increasing".into(),
            ));
        }
        Ok(Self { times, values })
    }

    /// Constant driving `c` on `[0, horizon]` with step `dt`.
    pub fn constant(c: f64, horizon: f64, dt: f64) -> Self {
        let n = (horizon / dt).round().max(1.0) as usize;
        let times = (0..=n).map(|k| k as f64 * horizon / n as f64).collect();
        Self {
            times,
            values: vec![c; n + 1],
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let ts = &self.times;
        if t <= ts[0] {
            return self.values[0];
        }
        if t >= *ts.last().unwrap() {
            return *self.values.last().unwrap();
        }
        let k = ts.partition_point(|&s| s <= t) - 1;
        let f = (t - ts[k]) / (ts[k + 1] - ts[k]);
        self.values[k] + f * (self.values[k + 1] - self.values[k])
    }

    /// Samples on a new grid.
    pub fn resample(&self, times: &[f64]) -> Result<Self> {
        Self::new(
            times.to_vec(),
            times.iter().map(|&t| self.eval(t)).collect(),
        )
    }

    /// Every `k`-th sample, always keeping the last.
    pub fn subsample(&self, k: usize) -> Self {
        let k = k.max(1);
        let mut idx: Vec<usize> = (0..self.len()).step_by(k).collect();
        if *idx.last().unwrap() != self.len() - 1 {
            idx.push(self.len() - 1);
        }
        Self {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
        }
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.times
            .iter()
            .chain(other.times())
            .map(|&t| (self.eval(t) - other.eval(t)).abs())
            .fold(0.0, f64::max)
    }
}

/// `√κ` times a standard Brownian motion on the grid `kδ`, `k ≤ T/δ`.
pub fn sample_driving<R: rand::Rng + ?Sized>(
    kappa: f64,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<DrivingFunction> {
    if !(horizon > 0.0 && dt > 0.0 && kappa >= 0.0) {
        return Err(Error::Input("horizon and step must be positive".into()));
    }
    let n = (horizon / dt).round().max(1.0) as usize;
    let h = horizon / n as f64;
    let sd = (kappa * h).sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut w = 0.0;
    values.push(w);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        w += sd * z;
        values.push(w);
    }
    let times = (0..=n).map(|k| k as f64 * h).collect();
    Ok(DrivingFunction { times, values })
}

/// Driving function of SLE(4): twice a standard Brownian motion.
pub fn sample_sle4_driving(horizon: f64, dt: f64, seed: u64) -> Result<DrivingFunction> {
    sample_driving(4.0, horizon, dt, &mut rng::stream(seed, 0))
}
