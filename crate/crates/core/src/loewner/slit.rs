//! Vertical-slit zipper: driving extraction, half-plane capacity, and the
//! reverse direction (tracing a path from its driving function).

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{sqrt_h, DrivingFunction};
use crate::error::{Error, Result};

const MAX_SPLIT_DEPTH: u32 = 10;

/// Path in the closed upper half-plane starting on the real line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlanePath {
    pub points: Vec<C64>,
    pub capacity_times: Option<Vec<f64>>,
}

impl HalfPlanePath {
    pub fn new(points: Vec<C64>) -> Self {
        Self {
            points,
            capacity_times: None,
        }
    }

    /// Errors if two non-adjacent segments intersect or the path does not
    /// start on the real line.
    pub fn check_simple(&self) -> Result<()> {
        let p = &self.points;
        if p.is_empty() {
            return Ok(());
        }
        if p[0].im.abs() > 1e-12 * (1.0 + p[0].norm()) {
            return Err(Error::InvalidPath(
                "path does not start on the real line".into(),
            ));
        }
        for i in 0..p.len().saturating_sub(1) {
            for j in i + 2..p.len() - 1 {
                if segments_cross(p[i], p[i + 1], p[j], p[j + 1]) {
                    return Err(Error::InvalidPath(format!(
                        "segments {i} and {j} intersect"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn orient(a: C64, b: C64, c: C64) -> f64 {
    ((b - a).conj() * (c - a)).im
}

fn segments_cross(a: C64, b: C64, c: C64, d: C64) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Incremental zipper. Each pushed point is uniformized by a vertical slit
/// map in the current frame; the frame is then recentred at the new tip.
#[derive(Clone, Debug)]
pub struct SlitZipper {
    maps: Vec<(f64, f64)>,
    times: Vec<f64>,
    values: Vec<f64>,
    last: C64,
    max_increment: f64,
}

impl SlitZipper {
    /// `max_increment` bounds each capacity step; longer steps are bisected.
    pub fn new(start: C64, max_increment: f64) -> Result<Self> {
        if start.im.abs() > 1e-12 * (1.0 + start.norm()) {
            return Err(Error::InvalidPath(
                "path does not start on the real line".into(),
            ));
        }
        if !(max_increment > 0.0) {
            return Err(Error::Input("capacity increment must be positive".into()));
        }
        Ok(Self {
            maps: Vec::new(),
            times: vec![0.0],
            values: vec![start.re],
            last: C64::new(start.re, 0.0),
            max_increment,
        })
    }

    pub fn capacity(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn steps(&self) -> usize {
        self.maps.len()
    }

    /// Image of `z` in the current (recentred) frame.
    pub fn map_point(&self, z: C64) -> C64 {
        let mut w = z - self.values[0];
        for &(a, b) in &self.maps {
            let u = w - a;
            w = sqrt_h(u * u + b * b, u.re);
        }
        w
    }

    pub fn push(&mut self, p: C64) -> Result<()> {
        self.push_at(p, 0)
    }

    fn push_at(&mut self, p: C64, depth: u32) -> Result<()> {
        let w = self.map_point(p);
        if !(w.im > 0.0) || !w.is_finite() {
            return Err(Error::HullCollapse {
                step: self.maps.len(),
            });
        }
        if w.im * w.im / 4.0 > self.max_increment && depth < MAX_SPLIT_DEPTH {
            let mid = 0.5 * (self.last + p);
            self.push_at(mid, depth + 1)?;
            return self.push_at(p, depth + 1);
        }
        let (a, b) = (w.re, w.im);
        self.maps.push((a, b));
        let t = self.capacity() + b * b / 4.0;
        let v = self.values.last().unwrap() + a;
        self.times.push(t);
        self.values.push(v);
        self.last = p;
        Ok(())
    }

    pub fn driving(&self) -> DrivingFunction {
        // zero-capacity steps (possible only through underflow) are dropped
        let mut times = vec![self.times[0]];
        let mut values = vec![self.values[0]];
        for k in 1..self.times.len() {
            if self.times[k] > *times.last().unwrap() {
                times.push(self.times[k]);
                values.push(self.values[k]);
            }
        }
        DrivingFunction::new(times, values).expect("capacities increase")
    }
}

/// Driving function of a polygonal path, bisecting steps whose capacity
/// exceeds `max_increment`.
pub fn extract_driving(path: &HalfPlanePath, max_increment: f64) -> Result<DrivingFunction> {
    let first = *path
        .points
        .first()
        .ok_or_else(|| Error::InvalidPath("empty path".into()))?;
    let mut z = SlitZipper::new(first, max_increment)?;
    for &p in &path.points[1..] {
        z.push(p)?;
    }
    Ok(z.driving())
}

/// Half-plane capacity of the hull of a simple polygonal path.
pub fn halfplane_capacity(path: &HalfPlanePath) -> Result<f64> {
    if path.points.len() < 2 {
        return Ok(0.0);
    }
    path.check_simple()?;
    let size = path
        .points
        .iter()
        .map(|p| (p - path.points[0]).norm())
        .fold(0.0, f64::max);
    let w = extract_driving(path, 1e-3 * size * size)?;
    Ok(w.horizon())
}

/// `γ(t) = g_t^{-1}(W_t)` at every grid time and at the `substeps − 1`
/// intermediate times of each grid interval. Each piece of the split grid
/// carries the constant driving value interpolated at its midpoint.
pub fn trace_from_driving(w: &DrivingFunction, substeps: usize) -> Result<HalfPlanePath> {
    let s = substeps.max(1);
    let ts = w.times();
    let mut pieces: Vec<(f64, f64)> = Vec::with_capacity((ts.len() - 1) * s);
    let mut times = vec![ts[0]];
    for k in 0..ts.len() - 1 {
        let dt = (ts[k + 1] - ts[k]) / s as f64;
        for j in 0..s {
            let mid = ts[k] + (j as f64 + 0.5) * dt;
            pieces.push((w.eval(mid), dt));
            times.push(if j + 1 == s {
                ts[k + 1]
            } else {
                ts[k] + (j + 1) as f64 * dt
            });
        }
    }
    let mut points = Vec::with_capacity(times.len());
    points.push(C64::new(w.values()[0], 0.0));
    for end in 1..=pieces.len() {
        let mut z = C64::new(pieces[end - 1].0, 0.0);
        for &(d, tau) in pieces[..end].iter().rev() {
            let u = z - d;
            z = d + sqrt_h(u * u - 4.0 * tau, u.re);
        }
        if !z.is_finite() {
            return Err(Error::Refine(format!("trace blew up at piece {end}")));
        }
        points.push(z);
    }
    Ok(HalfPlanePath {
        points,
        capacity_times: Some(times),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertical_slit_capacity() {
        for l in [0.5, 1.0, 2.0] {
            let p = HalfPlanePath::new(vec![C64::new(0.0, 0.0), C64::new(0.0, l)]);
            let c = halfplane_capacity(&p).unwrap();
            assert!((c - l * l / 4.0).abs() < 1e-12);
        }
        assert_eq!(
            halfplane_capacity(&HalfPlanePath::new(vec![])).unwrap(),
            0.0
        );
    }

    #[test]
    fn self_crossing_rejected() {
        let p = HalfPlanePath::new(vec![
            C64::new(0.0, 0.0),
            C64::new(0.0, 2.0),
            C64::new(1.0, 1.0),
            C64::new(-1.0, 1.0),
        ]);
        assert!(matches!(halfplane_capacity(&p), Err(Error::InvalidPath(_))));
    }

    #[test]
    fn zero_driving_traces_vertical_slit() {
        let w = DrivingFunction::constant(0.0, 1.0, 0.01);
        let p = trace_from_driving(&w, 4).unwrap();
        assert_eq!(p.points.len(), 4 * (w.len() - 1) + 1);
        for (z, t) in p.points.iter().zip(p.capacity_times.as_ref().unwrap()) {
            assert!(z.re.abs() < 1e-9);
            assert!((z.im - 2.0 * t.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn slit_extracts_zero_driving() {
        let pts: Vec<C64> = (0..=100)
            .map(|k| C64::new(0.0, 2.0 * (k as f64 / 100.0).sqrt()))
            .collect();
        let w = extract_driving(&HalfPlanePath::new(pts), 1e-3).unwrap();
        assert!(w.values().iter().all(|v| v.abs() < 1e-3));
        assert!((w.horizon() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn touching_the_line_collapses() {
        let p = HalfPlanePath::new(vec![
            C64::new(0.0, 0.0),
            C64::new(0.0, 1.0),
            C64::new(2.0, 0.0),
        ]);
        assert!(matches!(
            extract_driving(&p, 1.0),
            Err(Error::HullCollapse { .. })
        ));
    }
}
