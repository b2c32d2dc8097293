//! Triangular-lattice domains with two marked boundary arcs.
//!
//! Vertices live at `origin + scale * (a + b ω)` with `ω = e^{iπ/3}`. A domain
//! is a union of unit triangles whose boundary is a single simple cycle.

use std::collections::{BTreeSet, HashMap};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer lattice coordinates `(a, b)` of `a + b ω`.
pub type Lat = (i32, i32);

/// The six lattice directions, counterclockwise from `+1`.
pub const DIRECTIONS: [Lat; 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];

pub const OMEGA: C64 = C64::new(0.5, 0.866_025_403_784_438_6);

/// Conductance of an interior edge for unit equilateral triangles.
pub fn fem_weight() -> f64 {
    1.0 / 3f64.sqrt()
}

/// Which end of the plus arc carries the start marker `x∂`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointConvention {
    /// `x∂` is the clockwise endpoint of the plus arc; the plus arc lies to the
    /// right of the interface.
    #[default]
    Clockwise,
    /// The signs of the two arcs are exchanged relative to `Clockwise`.
    Counterclockwise,
}

/// A unit lattice triangle. `up` triangles are `(a,b),(a+1,b),(a,b+1)`, down
/// triangles `(a+1,b),(a+1,b+1),(a,b+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triangle {
    pub a: i32,
    pub b: i32,
    pub up: bool,
}

impl Triangle {
    /// Corners in counterclockwise order.
    pub fn corners(&self) -> [Lat; 3] {
        let (a, b) = (self.a, self.b);
        if self.up {
            [(a, b), (a + 1, b), (a, b + 1)]
        } else {
            [(a + 1, b), (a + 1, b + 1), (a, b + 1)]
        }
    }
}

#[derive(Clone, Debug)]
pub struct TgDomain {
    lattice: Vec<Lat>,
    positions: Vec<C64>,
    interior: Vec<bool>,
    adjacency: Vec<Vec<usize>>,
    edges: Vec<(usize, usize, f64)>,
    triangles: Vec<[usize; 3]>,
    ahead: HashMap<(usize, usize), usize>,
    index: HashMap<Lat, usize>,
    boundary_cycle: Vec<usize>,
    cycle_pos: Vec<Option<usize>>,
    split: usize,
    scale: f64,
    origin: C64,
    edge_weight: f64,
}

/// Geometry of a domain, for reproducibility dumps.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DomainDescription {
    pub scale: f64,
    pub origin: [f64; 2],
    pub edge_weight: f64,
    pub lattice: Vec<[i32; 2]>,
    pub positions: Vec<[f64; 2]>,
    pub interior: Vec<bool>,
    pub boundary_cycle: Vec<usize>,
    pub arc_plus: Vec<usize>,
    pub arc_minus: Vec<usize>,
    pub x_boundary: [f64; 2],
    pub y_boundary: [f64; 2],
}

/// One edge of the hexagonal dual, crossing exactly one primal edge.
#[derive(Clone, Debug, PartialEq)]
pub struct DualEdge {
    /// Primal endpoints, ordered so that `left_face` is on the left of `u → v`.
    pub primal: (usize, usize),
    pub left_face: usize,
    /// `None` when the primal edge lies on the boundary cycle.
    pub right_face: Option<usize>,
    pub ends: (C64, C64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualPathGraph {
    pub hex_edges: Vec<DualEdge>,
    /// Indices into `hex_edges` of the stubs at `x∂` and `y∂`.
    pub x_stub: usize,
    pub y_stub: usize,
}

impl TgDomain {
    /// Builds a domain from a set of triangles. The boundary cycle starts at
    /// `start`; the plus arc is cycle entries `1..=split`.
    pub fn from_triangles(
        tris: &[Triangle],
        scale: f64,
        origin: C64,
        start: Lat,
        split: usize,
        convention: EndpointConvention,
    ) -> Result<Self> {
        Self::from_triangles_weighted(tris, scale, origin, start, split, convention, fem_weight())
    }

    pub fn from_triangles_weighted(
        tris: &[Triangle],
        scale: f64,
        origin: C64,
        start: Lat,
        split: usize,
        convention: EndpointConvention,
        edge_weight: f64,
    ) -> Result<Self> {
        if tris.is_empty() {
            return Err(Error::InvalidSize("no triangles".into()));
        }
        if !(scale > 0.0) || !(edge_weight > 0.0) {
            return Err(Error::InvalidSize(
                "scale and edge weight must be positive".into(),
            ));
        }
        let tris: BTreeSet<Triangle> = tris.iter().copied().collect();
        let mut verts: Vec<Lat> = tris.iter().flat_map(|t| t.corners()).collect();
        // row-major: keeps Laplacian bandwidth near the row length
        verts.sort_by_key(|&(a, b)| (b, a));
        verts.dedup();
        let index: HashMap<Lat, usize> = verts.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let positions: Vec<C64> = verts
            .iter()
            .map(|&(a, b)| origin + scale * (a as f64 + b as f64 * OMEGA))
            .collect();

        let mut triangles = Vec::with_capacity(tris.len());
        let mut ahead = HashMap::new();
        let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
        for t in &tris {
            let c = t.corners().map(|p| index[&p]);
            let ti = triangles.len();
            triangles.push(c);
            for k in 0..3 {
                let (u, v) = (c[k], c[(k + 1) % 3]);
                ahead.insert((u, v), ti);
                *edge_count.entry((u.min(v), u.max(v))).or_default() += 1;
            }
        }

        let n = verts.len();
        let mut next: Vec<Option<usize>> = vec![None; n];
        for (&(u, v), _) in ahead.iter() {
            if !ahead.contains_key(&(v, u)) {
                if next[u].is_some() {
                    return Err(Error::Domain(format!(
                        "boundary pinches at lattice point {:?}",
                        verts[u]
                    )));
                }
                next[u] = Some(v);
            }
        }
        let n_boundary = next.iter().filter(|x| x.is_some()).count();
        let s0 = *index
            .get(&start)
            .ok_or_else(|| Error::Domain(format!("start {start:?} not in domain")))?;
        if next[s0].is_none() {
            return Err(Error::Domain(format!(
                "start {start:?} is not a boundary vertex"
            )));
        }
        let mut cycle = vec![s0];
        let mut cur = next[s0].unwrap();
        while cur != s0 {
            if cycle.len() > n_boundary {
                return Err(Error::Domain("boundary walk does not close".into()));
            }
            cycle.push(cur);
            cur = next[cur].ok_or_else(|| Error::Domain("open boundary".into()))?;
        }
        if cycle.len() != n_boundary {
            return Err(Error::Domain(format!(
                "boundary has {} vertices but the cycle from the start visits {}",
                n_boundary,
                cycle.len()
            )));
        }
        let len = cycle.len();
        if split == 0 || split >= len {
            return Err(Error::InvalidSize(format!(
                "split {split} outside 1..{len}"
            )));
        }
        let (cycle, split) = match convention {
            EndpointConvention::Clockwise => (cycle, split),
            EndpointConvention::Counterclockwise => {
                let mut c = cycle[split..].to_vec();
                c.extend_from_slice(&cycle[..split]);
                (c, len - split)
            }
        };
        let mut cycle_pos = vec![None; n];
        for (i, &v) in cycle.iter().enumerate() {
            cycle_pos[v] = Some(i);
        }

        let mut interior = vec![false; n];
        for v in 0..n {
            if next[v].is_none() {
                let (a, b) = verts[v];
                if DIRECTIONS
                    .iter()
                    .any(|(da, db)| !index.contains_key(&(a + da, b + db)))
                {
                    return Err(Error::Domain(format!(
                        "vertex {:?} has a hole around it",
                        verts[v]
                    )));
                }
                interior[v] = true;
            }
        }

        let mut edges: Vec<(usize, usize, f64)> = edge_count
            .into_iter()
            .map(|((u, v), c)| (u, v, c as f64 * edge_weight / 2.0))
            .collect();
        edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v, _) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }

        Ok(Self {
            lattice: verts,
            positions,
            interior,
            adjacency,
            edges,
            triangles,
            ahead,
            index,
            boundary_cycle: cycle,
            cycle_pos,
            split,
            scale,
            origin,
            edge_weight,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.lattice.len()
    }

    pub fn num_interior(&self) -> usize {
        self.interior.iter().filter(|&&b| b).count()
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices())
            .filter(|&v| self.interior[v])
            .collect()
    }

    pub fn is_interior(&self, v: usize) -> bool {
        self.interior[v]
    }

    pub fn position(&self, v: usize) -> C64 {
        self.positions[v]
    }

    pub fn positions(&self) -> &[C64] {
        &self.positions
    }

    pub fn lattice_coord(&self, v: usize) -> Lat {
        self.lattice[v]
    }

    pub fn vertex_at(&self, p: Lat) -> Option<usize> {
        self.index.get(&p).copied()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    /// Edges `(u, v, weight)` with `u < v`.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Counterclockwise corner triples.
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Triangle having `u → v` as a counterclockwise edge.
    pub fn triangle_ahead(&self, u: usize, v: usize) -> Option<usize> {
        self.ahead.get(&(u, v)).copied()
    }

    /// Piecewise-affine interpolation of vertex values at `z`; `None` outside
    /// the triangulation.
    pub fn interpolate(&self, values: &[f64], z: C64) -> Option<f64> {
        let p = (z - self.origin) / self.scale;
        let bf = p.im / OMEGA.im;
        let af = p.re - 0.5 * bf;
        let (a, b) = (af.floor(), bf.floor());
        let (fa, fb) = (af - a, bf - b);
        let (a, b) = (a as i32, b as i32);
        let (corners, w) = if fa + fb <= 1.0 {
            ([(a, b), (a + 1, b), (a, b + 1)], [1.0 - fa - fb, fa, fb])
        } else {
            (
                [(a + 1, b), (a + 1, b + 1), (a, b + 1)],
                [1.0 - fb, fa + fb - 1.0, 1.0 - fa],
            )
        };
        let v = corners.map(|c| self.vertex_at(c));
        let (v0, v1, v2) = (v[0]?, v[1]?, v[2]?);
        let t = self.triangle_ahead(v0, v1)?;
        if !self.triangles[t].contains(&v2) {
            return None;
        }
        Some(w[0] * values[v0] + w[1] * values[v1] + w[2] * values[v2])
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn edge_weight(&self) -> f64 {
        self.edge_weight
    }

    pub fn boundary_cycle(&self) -> &[usize] {
        &self.boundary_cycle
    }

    /// Position of `v` in the boundary cycle, if it is a boundary vertex.
    pub fn cycle_index(&self, v: usize) -> Option<usize> {
        self.cycle_pos[v]
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn arc_plus(&self) -> &[usize] {
        &self.boundary_cycle[1..=self.split]
    }

    pub fn arc_minus(&self) -> Vec<usize> {
        let mut out = self.boundary_cycle[self.split + 1..].to_vec();
        out.push(self.boundary_cycle[0]);
        out
    }

    pub fn in_arc_plus(&self, v: usize) -> bool {
        matches!(self.cycle_pos[v], Some(i) if i >= 1 && i <= self.split)
    }

    pub fn in_arc_minus(&self, v: usize) -> bool {
        matches!(self.cycle_pos[v], Some(i) if i == 0 || i > self.split)
    }

    /// Start edge as (minus vertex, plus vertex).
    pub fn x_edge(&self) -> (usize, usize) {
        (self.boundary_cycle[0], self.boundary_cycle[1])
    }

    /// End edge as (plus vertex, minus vertex).
    pub fn y_edge(&self) -> (usize, usize) {
        let len = self.boundary_cycle.len();
        (
            self.boundary_cycle[self.split],
            self.boundary_cycle[(self.split + 1) % len],
        )
    }

    pub fn x_boundary(&self) -> C64 {
        let (u, v) = self.x_edge();
        0.5 * (self.positions[u] + self.positions[v])
    }

    pub fn y_boundary(&self) -> C64 {
        let (u, v) = self.y_edge();
        0.5 * (self.positions[u] + self.positions[v])
    }

    /// Boundary vertex in the middle of the plus arc.
    pub fn arc_plus_mid(&self) -> usize {
        self.boundary_cycle[(self.split + 1) / 2]
    }

    /// Boundary values −λ on the minus arc and +λ on the plus arc, aligned with
    /// `boundary_cycle`.
    pub fn arc_boundary_data(&self, lambda: f64) -> Vec<f64> {
        (0..self.boundary_cycle.len())
            .map(|i| {
                if i >= 1 && i <= self.split {
                    lambda
                } else {
                    -lambda
                }
            })
            .collect()
    }

    /// Domain with the two arcs exchanged; `x∂` and `y∂` swap accordingly.
    pub fn with_swapped_arcs(&self) -> Self {
        let len = self.boundary_cycle.len();
        let mut out = self.clone();
        let mut c = self.boundary_cycle[self.split..].to_vec();
        c.extend_from_slice(&self.boundary_cycle[..self.split]);
        out.boundary_cycle = c;
        out.split = len - self.split;
        for (i, &v) in out.boundary_cycle.iter().enumerate() {
            out.cycle_pos[v] = Some(i);
        }
        out
    }

    /// Boundary polygon in counterclockwise order.
    pub fn boundary_polygon(&self) -> Vec<C64> {
        self.boundary_cycle
            .iter()
            .map(|&v| self.positions[v])
            .collect()
    }

    pub fn area(&self) -> f64 {
        self.triangles.len() as f64 * 3f64.sqrt() / 4.0 * self.scale * self.scale
    }

    /// Whether `z` lies in the closed polygon.
    pub fn contains(&self, z: C64) -> bool {
        let poly = self.boundary_polygon();
        if distance_to_polygon(&poly, z) < 1e-12 * self.scale {
            return true;
        }
        winding_inside(&poly, z)
    }

    /// Distance from `z` to the complement of the domain.
    pub fn inradius(&self, center: C64) -> Result<f64> {
        let poly = self.boundary_polygon();
        let d = distance_to_polygon(&poly, center);
        if d < 1e-12 * self.scale {
            return Ok(0.0);
        }
        if !winding_inside(&poly, center) {
            return Err(Error::Domain(format!("center {center} outside domain")));
        }
        Ok(d)
    }

    /// Distance from a point to the boundary polygon.
    pub fn distance_to_boundary(&self, z: C64) -> f64 {
        distance_to_polygon(&self.boundary_polygon(), z)
    }

    pub fn barycenter(&self) -> C64 {
        let s: C64 = self.positions.iter().sum();
        s / self.positions.len() as f64
    }

    /// Lattice diameter (max Euclidean distance between vertices).
    pub fn diameter(&self) -> f64 {
        let poly = self.boundary_polygon();
        let mut d: f64 = 0.0;
        for i in 0..poly.len() {
            for j in i + 1..poly.len() {
                d = d.max((poly[i] - poly[j]).norm());
            }
        }
        d
    }

    pub fn centroid(&self, t: usize) -> C64 {
        let [a, b, c] = self.triangles[t];
        (self.positions[a] + self.positions[b] + self.positions[c]) / 3.0
    }

    pub fn describe(&self) -> DomainDescription {
        let p = |z: C64| [z.re, z.im];
        DomainDescription {
            scale: self.scale,
            origin: p(self.origin),
            edge_weight: self.edge_weight,
            lattice: self.lattice.iter().map(|&(a, b)| [a, b]).collect(),
            positions: self.positions.iter().map(|&z| p(z)).collect(),
            interior: self.interior.clone(),
            boundary_cycle: self.boundary_cycle.clone(),
            arc_plus: self.arc_plus().to_vec(),
            arc_minus: self.arc_minus(),
            x_boundary: p(self.x_boundary()),
            y_boundary: p(self.y_boundary()),
        }
    }
}

/// Rhombus with corners `0, n, n(1+ω), nω`. The arcs meet at corner `(0,0)`
/// and at the corner nearest `split_fraction` of the way around.
pub fn build_rhombus_domain(side_n: usize, split_fraction: f64) -> Result<TgDomain> {
    build_rhombus_with(
        side_n,
        split_fraction,
        EndpointConvention::Clockwise,
        fem_weight(),
    )
}

pub fn build_rhombus_with(
    side_n: usize,
    split_fraction: f64,
    convention: EndpointConvention,
    edge_weight: f64,
) -> Result<TgDomain> {
    if side_n < 2 {
        return Err(Error::InvalidSize(format!("rhombus side {side_n} < 2")));
    }
    check_fraction(split_fraction)?;
    let n = side_n as i32;
    let mut tris = Vec::with_capacity(2 * side_n * side_n);
    for b in 0..n {
        for a in 0..n {
            tris.push(Triangle { a, b, up: true });
            tris.push(Triangle { a, b, up: false });
        }
    }
    let split = nearest_corner(split_fraction, 4, side_n);
    TgDomain::from_triangles_weighted(
        &tris,
        1.0,
        C64::new(0.0, 0.0),
        (0, 0),
        split,
        convention,
        edge_weight,
    )
}

/// Regular hexagon of side `n` centred at the origin.
pub fn build_hexagon_domain(side_n: usize, split_fraction: f64) -> Result<TgDomain> {
    if side_n < 1 {
        return Err(Error::InvalidSize("hexagon side must be positive".into()));
    }
    check_fraction(split_fraction)?;
    let n = side_n as i32;
    let inside = |(a, b): Lat| a.abs() <= n && b.abs() <= n && (a + b).abs() <= n;
    let mut tris = Vec::new();
    for b in -n..=n {
        for a in -n..=n {
            for up in [true, false] {
                let t = Triangle { a, b, up };
                if t.corners().iter().all(|&p| inside(p)) {
                    tris.push(t);
                }
            }
        }
    }
    let split = nearest_corner(split_fraction, 6, side_n);
    TgDomain::from_triangles(
        &tris,
        1.0,
        C64::new(0.0, 0.0),
        (0, -n),
        split,
        EndpointConvention::Clockwise,
    )
}

/// Lattice approximation of the box `[-half_width, half_width] × [0, height]`
/// at the given mesh, bottom row on the real axis. The plus arc is the left
/// half of the bottom row.
pub fn build_box_domain(half_width: f64, height: f64, mesh: f64) -> Result<TgDomain> {
    if !(mesh > 0.0 && half_width >= 2.0 * mesh && height >= 2.0 * mesh) {
        return Err(Error::InvalidSize("box too small for mesh".into()));
    }
    let origin = C64::new(-half_width, 0.0);
    let rows = (height / (mesh * OMEGA.im) + 1e-9).floor() as i32;
    let cols = (2.0 * half_width / mesh + 1e-9).round() as i32;
    let inside = |(a, b): Lat| {
        let x = mesh * (a as f64 + 0.5 * b as f64);
        b >= 0 && b <= rows && x >= -1e-9 && x <= 2.0 * half_width + 1e-9
    };
    let mut tris = Vec::new();
    for b in 0..rows {
        for a in -rows..=cols {
            for up in [true, false] {
                let t = Triangle { a, b, up };
                if t.corners().iter().all(|&p| inside(p)) {
                    tris.push(t);
                }
            }
        }
    }
    let split = (cols / 2).max(1) as usize;
    TgDomain::from_triangles(
        &tris,
        mesh,
        origin,
        (0, 0),
        split,
        EndpointConvention::Clockwise,
    )
}

fn check_fraction(f: f64) -> Result<()> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::InvalidSize(format!(
            "split fraction {f} not in (0,1)"
        )));
    }
    Ok(())
}

fn nearest_corner(fraction: f64, corners: usize, side: usize) -> usize {
    let target = fraction * corners as f64;
    let k = target.round().clamp(1.0, (corners - 1) as f64) as usize;
    k * side
}

fn winding_inside(poly: &[C64], z: C64) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        if (p.im > z.im) != (q.im > z.im) {
            let x = p.re + (z.im - p.im) / (q.im - p.im) * (q.re - p.re);
            if z.re < x {
                inside = !inside;
            }
        }
    }
    inside
}

pub(crate) fn segment_distance(p: C64, q: C64, z: C64) -> f64 {
    let d = q - p;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (z - p).norm();
    }
    let t = (((z - p) * d.conj()).re / len2).clamp(0.0, 1.0);
    (z - (p + t * d)).norm()
}

pub(crate) fn distance_to_polygon(poly: &[C64], z: C64) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| segment_distance(poly[i], poly[(i + 1) % n], z))
        .fold(f64::INFINITY, f64::min)
}

/// Hexagonal dual of a domain: one dual edge per triangulation edge.
pub fn dual_graph(domain: &TgDomain) -> DualPathGraph {
    let mut hex_edges = Vec::with_capacity(domain.edges.len());
    let mut x_stub = usize::MAX;
    let mut y_stub = usize::MAX;
    let (xm, xp) = domain.x_edge();
    let (yp, ym) = domain.y_edge();
    for &(a, b, _) in &domain.edges {
        let (u, v, left) = match domain.triangle_ahead(a, b) {
            Some(t) => (a, b, t),
            None => (
                b,
                a,
                domain.triangle_ahead(b, a).expect("edge without triangle"),
            ),
        };
        let right = domain.triangle_ahead(v, u);
        let end = match right {
            Some(t) => domain.centroid(t),
            None => 0.5 * (domain.positions[u] + domain.positions[v]),
        };
        if (u, v) == (xm, xp) {
            x_stub = hex_edges.len();
        }
        if (u, v) == (yp, ym) {
            y_stub = hex_edges.len();
        }
        hex_edges.push(DualEdge {
            primal: (u, v),
            left_face: left,
            right_face: right,
            ends: (domain.centroid(left), end),
        });
    }
    DualPathGraph {
        hex_edges,
        x_stub,
        y_stub,
    }
}
