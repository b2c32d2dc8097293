//! Chordal zero-height interface on the hexagonal dual, and the height-gap
//! statistic comparing the field near the interface with its ±λ idealization.

use std::collections::{BTreeSet, HashSet};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::field::{FieldSample, RestrictedSystem};
use crate::lattice::{segment_distance, TgDomain};

/// Dual path from `x∂` to `y∂` with the primal vertices on either side.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfacePath {
    /// `x∂`, triangle centroids, then `y∂`.
    pub dual_points: Vec<C64>,
    pub triangles: Vec<usize>,
    /// Crossed primal edges as (left, right), from the `x∂` edge to the `y∂` edge.
    pub crossed: Vec<(usize, usize)>,
    /// V−, sorted.
    pub left_vertices: Vec<usize>,
    /// V+, sorted.
    pub right_vertices: Vec<usize>,
}

impl InterfacePath {
    pub fn len(&self) -> usize {
        self.dual_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dual_points.is_empty()
    }

    /// Euclidean distance from `z` to the polyline.
    pub fn distance(&self, z: C64) -> f64 {
        self.dual_points
            .windows(2)
            .map(|w| segment_distance(w[0], w[1], z))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_left(&self, v: usize) -> bool {
        self.left_vertices.binary_search(&v).is_ok()
    }

    pub fn is_right(&self, v: usize) -> bool {
        self.right_vertices.binary_search(&v).is_ok()
    }
}

/// Step-by-step exploration. Each step reveals the sign of one vertex.
#[derive(Clone, Debug)]
pub struct Exploration<'a> {
    domain: &'a TgDomain,
    l: usize,
    r: usize,
    finished: bool,
    seen: HashSet<usize>,
    points: Vec<C64>,
    triangles: Vec<usize>,
    crossed: Vec<(usize, usize)>,
    left: BTreeSet<usize>,
    right: BTreeSet<usize>,
    reads: Vec<usize>,
}

impl<'a> Exploration<'a> {
    pub fn new(domain: &'a TgDomain) -> Self {
        let (l, r) = domain.x_edge();
        Self {
            domain,
            l,
            r,
            finished: false,
            seen: HashSet::new(),
            points: vec![domain.x_boundary()],
            triangles: Vec::new(),
            crossed: vec![(l, r)],
            left: BTreeSet::from([l]),
            right: BTreeSet::from([r]),
            reads: Vec::new(),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn steps(&self) -> usize {
        self.triangles.len()
    }

    /// Vertices whose sign was queried, in order.
    pub fn reads(&self) -> &[usize] {
        &self.reads
    }

    /// Vertices adjacent to the explored part of the path.
    pub fn adjacent(&self) -> BTreeSet<usize> {
        self.left.union(&self.right).copied().collect()
    }

    /// Advances one triangle. `plus(v)` reports whether `v` is on the plus
    /// side. Returns `false` once `y∂` has been reached.
    pub fn step<F: FnMut(usize) -> Result<bool>>(&mut self, plus: &mut F) -> Result<bool> {
        if self.finished {
            return Ok(false);
        }
        let (yp, ym) = self.domain.y_edge();
        if (self.l, self.r) == (ym, yp) {
            self.points.push(self.domain.y_boundary());
            self.finished = true;
            return Ok(false);
        }
        let t = self.domain.triangle_ahead(self.l, self.r).ok_or_else(|| {
            Error::Numerical(format!(
                "interface left the domain through edge ({}, {})",
                self.l, self.r
            ))
        })?;
        if !self.seen.insert(t) {
            return Err(Error::Numerical(format!("interface revisits triangle {t}")));
        }
        let w = *self.domain.triangles()[t]
            .iter()
            .find(|&&v| v != self.l && v != self.r)
            .expect("triangle has a third corner");
        self.reads.push(w);
        if plus(w)? {
            self.r = w;
            self.right.insert(w);
        } else {
            self.l = w;
            self.left.insert(w);
        }
        self.points.push(self.domain.centroid(t));
        self.triangles.push(t);
        self.crossed.push((self.l, self.r));
        Ok(true)
    }

    pub fn into_path(self) -> InterfacePath {
        InterfacePath {
            dual_points: self.points,
            triangles: self.triangles,
            crossed: self.crossed,
            left_vertices: self.left.into_iter().collect(),
            right_vertices: self.right.into_iter().collect(),
        }
    }
}

/// Sign oracle for `h − level`, checking the boundary arcs and ties.
pub fn level_signs<'a>(
    domain: &'a TgDomain,
    field: &'a FieldSample,
    level: f64,
) -> Result<impl FnMut(usize) -> Result<bool> + 'a> {
    if field.values.len() != domain.num_vertices() {
        return Err(Error::Input("field does not match domain".into()));
    }
    for &v in domain.arc_plus() {
        if !(field.values[v] > level) {
            return Err(Error::Precondition(format!(
                "plus-arc vertex {v} not above level"
            )));
        }
    }
    for v in domain.arc_minus() {
        if !(field.values[v] < level) {
            return Err(Error::Precondition(format!(
                "minus-arc vertex {v} not below level"
            )));
        }
    }
    Ok(move |v: usize| {
        let x = field.values[v] - level;
        if x == 0.0 {
            Err(Error::Tie { vertex: v })
        } else if x.is_nan() {
            Err(Error::Input(format!("NaN at vertex {v}")))
        } else {
            Ok(x > 0.0)
        }
    })
}

pub fn trace_interface(domain: &TgDomain, field: &FieldSample) -> Result<InterfacePath> {
    trace_level(domain, field, 0.0)
}

/// Interface between `{h > level}` and `{h < level}`.
pub fn trace_level(domain: &TgDomain, field: &FieldSample, level: f64) -> Result<InterfacePath> {
    let mut plus = level_signs(domain, field, level)?;
    let mut ex = Exploration::new(domain);
    while ex.step(&mut plus)? {}
    Ok(ex.into_path())
}

/// `h_T − F_T` on every vertex: harmonic interpolation of the actual values on
/// V−∪V+∪∂ minus the harmonic extension of ∓λ on V∓.
pub fn height_gap_field(
    domain: &TgDomain,
    field: &FieldSample,
    path: &InterfacePath,
) -> Result<Vec<f64>> {
    let n = domain.num_vertices();
    let cycle = domain.boundary_cycle();
    let lam_plus = field.boundary_data[1];
    let lam_minus = field.boundary_data[0];
    let mut fixed = vec![false; n];
    let mut diff = vec![0.0; n];
    for &v in &path.left_vertices {
        fixed[v] = true;
        diff[v] = field.values[v] - lam_minus;
    }
    for &v in &path.right_vertices {
        fixed[v] = true;
        diff[v] = field.values[v] - lam_plus;
    }
    for (i, &v) in cycle.iter().enumerate() {
        let f = if domain.in_arc_plus(v) {
            lam_plus
        } else {
            lam_minus
        };
        diff[v] = field.boundary_data[i] - f;
    }
    let system = RestrictedSystem::for_domain(domain, &fixed)?;
    system.extend(&mut diff)?;
    Ok(diff)
}

pub fn height_gap_statistic(
    domain: &TgDomain,
    field: &FieldSample,
    path: &InterfacePath,
    probe: usize,
) -> Result<f64> {
    if probe >= domain.num_vertices() || !domain.is_interior(probe) {
        return Err(Error::Domain(format!("probe {probe} is not interior")));
    }
    if path.is_left(probe) || path.is_right(probe) {
        return Err(Error::Domain(format!(
            "probe {probe} is adjacent to the interface"
        )));
    }
    Ok(height_gap_field(domain, field, path)?[probe])
}
