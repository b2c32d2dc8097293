//! Spherical-type metric on the closed half-plane via `Ψ(z) = (z−i)/(z+i)`.

use num_complex::Complex64 as C64;

use super::HalfPlanePath;
use crate::error::{Error, Result};

/// `Ψ(z)`; `None` stands for the point at infinity.
pub fn psi(z: Option<C64>) -> C64 {
    match z {
        None => C64::new(1.0, 0.0),
        Some(z) => (z - C64::i()) / (z + C64::i()),
    }
}

/// `|Ψ(z) − Ψ(w)|`, with `None` for infinity.
pub fn d_star(z: Option<C64>, w: Option<C64>) -> f64 {
    (psi(z) - psi(w)).norm()
}

/// Largest `d*` distance between corresponding points of two paths sampled
/// on the same capacity grid.
pub fn d_strong(a: &HalfPlanePath, b: &HalfPlanePath) -> Result<f64> {
    if a.points.len() != b.points.len() {
        return Err(Error::Resample(format!(
            "{} vs {} points",
            a.points.len(),
            b.points.len()
        )));
    }
    if let (Some(ta), Some(tb)) = (&a.capacity_times, &b.capacity_times) {
        if ta
            .iter()
            .zip(tb)
            .any(|(x, y)| (x - y).abs() > 1e-12 * (1.0 + x.abs()))
        {
            return Err(Error::Resample("capacity grids differ".into()));
        }
    }
    Ok(a.points
        .iter()
        .zip(&b.points)
        .map(|(&z, &w)| d_star(Some(z), Some(w)))
        .fold(0.0, f64::max))
}
