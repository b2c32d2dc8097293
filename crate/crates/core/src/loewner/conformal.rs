//! Geodesic zipper for maps from a lattice domain onto the upper half-plane.
//!
//! The boundary is densified and unzipped point by point with maps that
//! remove a circular arc orthogonal to the real line. A final affine change
//! of coordinates fixes the three-point normalization.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::sqrt_h;
use crate::error::{Error, Result};
use crate::field::PlaneMap;
use crate::lattice::TgDomain;

/// How the positive-scaling freedom of the map is fixed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `φ(mid(arc_plus)) = 1`.
    #[default]
    ArcMidpoint,
    /// `φ(z) = i` for the given domain point.
    InteriorPoint { re: f64, im: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    /// Boundary points per lattice edge; must be even.
    pub densify: usize,
    pub normalization: Normalization,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            densify: 4,
            normalization: Normalization::ArcMidpoint,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Elem {
    /// `w = i √((z − z1)/(z − z0))`
    Init { z0: C64, z1: C64 },
    /// `m = z/(1 − z/c)`, `w = √(m² + d²)`; `c = None` means `m = z`.
    Geo { c: Option<f64>, d: f64 },
    /// `m = z/(1 − z/p)`, `w = s m²`
    Final { p: Option<f64>, s: f64 },
    /// `w = (z − shift) · scale`
    Affine { shift: f64, scale: f64 },
}

impl Elem {
    fn apply(&self, z: C64, dz: C64) -> (C64, C64) {
        match *self {
            Elem::Init { z0, z1 } => {
                let psi = (z - z1) / (z - z0);
                // principal root: the slit [z0, z1] is the only cut
                let w = C64::i() * psi.sqrt();
                let dpsi = (z1 - z0) / ((z - z0) * (z - z0));
                (w, -dpsi / (2.0 * w) * dz)
            }
            Elem::Geo { c, d } => {
                let (m, dm) = match c {
                    Some(c) => {
                        let q = 1.0 - z / c;
                        (z / q, 1.0 / (q * q))
                    }
                    None => (z, C64::new(1.0, 0.0)),
                };
                let w = sqrt_h(m * m + d * d, m.re);
                (w, m * dm / w * dz)
            }
            Elem::Final { p, s } => {
                let (m, dm) = match p {
                    Some(p) => {
                        let q = 1.0 - z / p;
                        (z / q, 1.0 / (q * q))
                    }
                    None => (z, C64::new(1.0, 0.0)),
                };
                (s * m * m, 2.0 * s * m * dm * dz)
            }
            Elem::Affine { shift, scale } => ((z - shift) * scale, dz * scale),
        }
    }

    fn invert(&self, w: C64) -> C64 {
        match *self {
            Elem::Init { z0, z1 } => {
                let psi = -(w * w);
                (z1 - psi * z0) / (C64::new(1.0, 0.0) - psi)
            }
            Elem::Geo { c, d } => {
                let m = upper_root(w * w - d * d);
                match c {
                    Some(c) => m / (1.0 + m / c),
                    None => m,
                }
            }
            Elem::Final { p, s } => {
                let m = upper_root(w / s);
                match p {
                    Some(p) => m / (1.0 + m / p),
                    None => m,
                }
            }
            Elem::Affine { shift, scale } => w / scale + shift,
        }
    }

    /// Image of a real point, or of infinity (`None`), with an explicit side
    /// for points sitting exactly at a slit base.
    fn apply_real(&self, x: Option<f64>, side: f64) -> Option<f64> {
        match *self {
            Elem::Init { .. } => unreachable!("initial map is applied in the plane"),
            Elem::Geo { c, d } => {
                let m = match (x, c) {
                    (None, None) => return None,
                    (None, Some(c)) => -c,
                    (Some(x), None) => x,
                    (Some(x), Some(c)) => {
                        if x == c {
                            return None;
                        }
                        x / (1.0 - x / c)
                    }
                };
                let sgn = if m > 0.0 || (m == 0.0 && side > 0.0) {
                    1.0
                } else {
                    -1.0
                };
                Some(sgn * (m * m + d * d).sqrt())
            }
            Elem::Final { p, s } => {
                let m = match (x, p) {
                    (None, None) => return None,
                    (None, Some(p)) => -p,
                    (Some(x), None) => x,
                    (Some(x), Some(p)) => {
                        if x == p {
                            return None;
                        }
                        x / (1.0 - x / p)
                    }
                };
                Some(s * m * m)
            }
            Elem::Affine { shift, scale } => x.map(|x| (x - shift) * scale),
        }
    }
}

/// The square root with positive imaginary part.
fn upper_root(u: C64) -> C64 {
    let s = u.sqrt();
    if s.im < 0.0 {
        -s
    } else {
        s
    }
}

/// Conformal map of a polygonal domain onto the upper half-plane.
#[derive(Clone, Debug)]
pub struct ConformalMap {
    elems: Vec<Elem>,
    boundary: Vec<C64>,
    x_index: usize,
    plus_mid_index: usize,
    densify: usize,
}

impl ConformalMap {
    /// Builds the zipper for a counterclockwise closed polygon `points`
    /// (`points[0]` goes to ∞). `interior` must lie inside the polygon.
    fn build(points: Vec<C64>, interior: C64) -> Result<(Vec<Elem>, Vec<C64>)> {
        let n = points.len();
        if n < 4 {
            return Err(Error::Refine("too few boundary points".into()));
        }
        let init = Elem::Init {
            z0: points[0],
            z1: points[1],
        };
        let one = C64::new(1.0, 0.0);
        let mut imgs: Vec<C64> = points.iter().map(|&z| init.apply(z, one).0).collect();
        let mut probe = init.apply(interior, one).0;
        let mut elems = vec![init];
        let mut p: Option<f64> = None;
        for k in 2..n {
            let a = imgs[k];
            if !(a.im > 0.0) || !a.is_finite() {
                return Err(Error::Refine(format!(
                    "boundary point {k} left the half-plane"
                )));
            }
            let r2 = a.norm_sqr();
            let c = if a.re.abs() <= 1e-14 * a.norm() {
                None
            } else {
                Some(r2 / a.re)
            };
            let g = Elem::Geo { c, d: r2 / a.im };
            for img in imgs.iter_mut().skip(k + 1) {
                *img = g.apply(*img, one).0;
            }
            probe = g.apply(probe, one).0;
            p = g.apply_real(p, -1.0);
            elems.push(g);
        }
        let m = match p {
            Some(p) => probe / (1.0 - probe / p),
            None => probe,
        };
        let s = if (m * m).im > 0.0 { 1.0 } else { -1.0 };
        elems.push(Elem::Final { p, s });
        Ok((elems, points))
    }

    /// `φ(z)` for an interior point.
    pub fn eval(&self, z: C64) -> C64 {
        self.eval_with_derivative_raw(z).0
    }

    fn eval_with_derivative_raw(&self, z: C64) -> (C64, C64) {
        let mut w = z;
        let mut dw = C64::new(1.0, 0.0);
        for e in &self.elems {
            let (a, b) = e.apply(w, dw);
            w = a;
            dw = b;
        }
        (w, dw)
    }

    /// `φ⁻¹(w)` for `w` in the upper half-plane.
    pub fn inverse(&self, w: C64) -> C64 {
        self.elems.iter().rev().fold(w, |acc, e| e.invert(acc))
    }

    /// Real image of densified boundary point `j`; `None` for the point sent
    /// to infinity.
    pub fn boundary_image(&self, j: usize) -> Option<f64> {
        if j == 0 {
            return None;
        }
        let one = C64::new(1.0, 0.0);
        let z = self.elems[0].apply(self.boundary[j], one).0;
        // elems[e] unzips boundary point e + 1 while it is a geodesic map
        let mut state: std::result::Result<C64, Option<f64>> =
            if j == 1 { Err(Some(0.0)) } else { Ok(z) };
        for (e, elem) in self.elems.iter().enumerate().skip(1) {
            state = match state {
                Ok(_) if e + 1 == j => Err(Some(0.0)),
                Ok(z) => Ok(elem.apply(z, one).0),
                Err(x) => Err(elem.apply_real(x, -1.0)),
            };
        }
        match state {
            Ok(z) => Some(z.re),
            Err(x) => x,
        }
    }

    pub fn boundary_points(&self) -> &[C64] {
        &self.boundary
    }

    /// Densified index of `x∂`.
    pub fn x_index(&self) -> usize {
        self.x_index
    }

    pub fn densify(&self) -> usize {
        self.densify
    }

    /// Densified index of the plus-arc midpoint.
    pub fn plus_mid_index(&self) -> usize {
        self.plus_mid_index
    }
}

impl PlaneMap for ConformalMap {
    fn eval_with_derivative(&self, z: C64) -> Result<(C64, C64)> {
        let (w, dw) = self.eval_with_derivative_raw(z);
        if !w.is_finite() || !dw.is_finite() {
            return Err(Error::Numerical(format!("map evaluation failed at {z}")));
        }
        Ok((w, dw))
    }

    fn image(&self, z: C64) -> Result<C64> {
        let w = self.eval(z);
        if !w.is_finite() {
            return Err(Error::Numerical(format!("map evaluation failed at {z}")));
        }
        Ok(w)
    }
}

/// Conformal map of `domain` onto H with `φ(x∂) = 0`, `φ(y∂) = ∞` and the
/// chosen scale normalization.
pub fn map_domain_to_h(domain: &TgDomain, opts: &MapOptions) -> Result<ConformalMap> {
    let m = opts.densify;
    if m < 2 || m % 2 != 0 {
        return Err(Error::Refine(format!(
            "densify {m} must be even and at least 2"
        )));
    }
    let cycle = domain.boundary_cycle();
    let len = cycle.len();
    let split = domain.split();
    let pos = |i: usize| domain.position(cycle[i % len]);
    // densified boundary starting at y∂, counterclockwise
    let mut pts = Vec::with_capacity(len * m);
    let mut x_index = 0;
    let mut plus_mid_index = 0;
    let plus_mid = (split + 1) / 2;
    for e in 0..=len {
        let i = (split + e) % len;
        let (a, b) = (pos(i), pos(i + 1));
        let range = if e == 0 {
            m / 2..m
        } else if e == len {
            0..m / 2
        } else {
            0..m
        };
        for j in range {
            if i == 0 && j == m / 2 {
                x_index = pts.len();
            }
            if i == plus_mid && j == 0 {
                plus_mid_index = pts.len();
            }
            pts.push(a + (b - a) * (j as f64 / m as f64));
        }
    }
    let interior = domain
        .interior_vertices()
        .into_iter()
        .map(|v| domain.position(v))
        .min_by(|a, b| {
            let c = domain.barycenter();
            (a - c).norm().total_cmp(&(b - c).norm())
        })
        .ok_or_else(|| Error::Domain("domain has no interior vertex".into()))?;
    let (mut elems, boundary) = ConformalMap::build(pts, interior)?;
    let mut map = ConformalMap {
        elems: Vec::new(),
        boundary,
        x_index,
        plus_mid_index,
        densify: m,
    };
    map.elems = std::mem::take(&mut elems);
    let x0 = map
        .boundary_image(x_index)
        .ok_or_else(|| Error::Numerical("x∂ mapped to infinity".into()))?;
    let scale = match opts.normalization {
        Normalization::ArcMidpoint => {
            let x1 = map
                .boundary_image(plus_mid_index)
                .ok_or_else(|| Error::Numerical("arc midpoint mapped to infinity".into()))?;
            if !(x1 > x0) {
                return Err(Error::Numerical(
                    "plus arc not mapped to the right of x∂".into(),
                ));
            }
            1.0 / (x1 - x0)
        }
        Normalization::InteriorPoint { re, im } => {
            let w = map.eval(C64::new(re, im)) - x0;
            // scaling keeps arguments, so only |w| can be matched to |i|
            1.0 / w.norm()
        }
    };
    map.elems.push(Elem::Affine { shift: x0, scale });
    Ok(map)
}
