//! Dirichlet forms, zero-boundary discrete Gaussian free fields, harmonic
//! extension and the finite-element projection of smooth test functions.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lattice::TgDomain;
use crate::linalg::{BandCholesky, SymBand};
use crate::rng;

const HARMONIC_RESIDUAL: f64 = 1e-8;

/// Real heights on the vertices of a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub values: Vec<f64>,
    /// Aligned with `TgDomain::boundary_cycle`.
    pub boundary_data: Vec<f64>,
    pub seed: Option<u64>,
}

impl FieldSample {
    pub fn value(&self, v: usize) -> f64 {
        self.values[v]
    }
}

/// Quadratic form `Σ_edges w (f(u) − f(v))²`.
#[derive(Clone, Debug)]
pub struct DirichletForm {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    weight: f64,
}

pub fn dirichlet_form(domain: &TgDomain) -> DirichletForm {
    DirichletForm {
        n: domain.num_vertices(),
        edges: domain.edges().to_vec(),
        weight: domain.edge_weight(),
    }
}

impl DirichletForm {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Conductance of an interior edge.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn energy(&self, f: &[f64]) -> f64 {
        self.edges
            .iter()
            .map(|&(u, v, w)| w * (f[u] - f[v]).powi(2))
            .sum()
    }

    /// Bilinear form.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.edges
            .iter()
            .map(|&(u, v, w)| w * (f[u] - f[v]) * (g[u] - g[v]))
            .sum()
    }

    /// Laplacian matrix applied to `f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for &(u, v, w) in &self.edges {
            let d = w * (f[u] - f[v]);
            out[u] += d;
            out[v] -= d;
        }
        out
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(u, v, w) in &self.edges {
            m[(u, u)] += w;
            m[(v, v)] += w;
            m[(u, v)] -= w;
            m[(v, u)] -= w;
        }
        m
    }
}

/// Laplacian restricted to a set of unknown vertices, all other vertices
/// carrying Dirichlet data. Factorized once, then reused for solves and
/// Gaussian samples.
#[derive(Clone, Debug)]
pub struct RestrictedSystem {
    n: usize,
    unknowns: Vec<usize>,
    slot: Vec<usize>,
    couplings: Vec<Vec<(usize, f64)>>,
    matrix: SymBand,
    chol: BandCholesky,
}

const NO_SLOT: usize = usize::MAX;

impl RestrictedSystem {
    /// `extra_diag[v]` adds a conductance from `v` to a grounded node.
    pub fn new(
        n: usize,
        edges: &[(usize, usize, f64)],
        unknown: &[bool],
        extra_diag: Option<&[f64]>,
    ) -> Result<Self> {
        let unknowns: Vec<usize> = (0..n).filter(|&v| unknown[v]).collect();
        let mut slot = vec![NO_SLOT; n];
        for (i, &v) in unknowns.iter().enumerate() {
            slot[v] = i;
        }
        let mut bw = 0;
        for &(u, v, _) in edges {
            if slot[u] != NO_SLOT && slot[v] != NO_SLOT {
                bw = bw.max(slot[u].abs_diff(slot[v]));
            }
        }
        let m = unknowns.len();
        let mut matrix = SymBand::zeros(m, bw);
        let mut couplings = vec![Vec::new(); m];
        for &(u, v, w) in edges {
            let (su, sv) = (slot[u], slot[v]);
            if su != NO_SLOT {
                matrix.add(su, su, w);
            }
            if sv != NO_SLOT {
                matrix.add(sv, sv, w);
            }
            match (su != NO_SLOT, sv != NO_SLOT) {
                (true, true) => matrix.add(su, sv, -w),
                (true, false) => couplings[su].push((v, w)),
                (false, true) => couplings[sv].push((u, w)),
                (false, false) => {}
            }
        }
        if let Some(extra) = extra_diag {
            for (i, &v) in unknowns.iter().enumerate() {
                if extra[v] != 0.0 {
                    matrix.add(i, i, extra[v]);
                }
            }
        }
        let chol = BandCholesky::factor(matrix.clone())?;
        Ok(Self {
            n,
            unknowns,
            slot,
            couplings,
            matrix,
            chol,
        })
    }

    /// Interior vertices of `domain` that are not in `fixed` become unknowns.
    pub fn for_domain(domain: &TgDomain, fixed: &[bool]) -> Result<Self> {
        let unknown: Vec<bool> = (0..domain.num_vertices())
            .map(|v| domain.is_interior(v) && !fixed[v])
            .collect();
        Self::new(domain.num_vertices(), domain.edges(), &unknown, None)
    }

    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    pub fn is_unknown(&self, v: usize) -> bool {
        self.slot[v] != NO_SLOT
    }

    /// Overwrites the unknowns of `values` with the harmonic extension of the
    /// fixed entries.
    pub fn extend(&self, values: &mut [f64]) -> Result<()> {
        assert_eq!(values.len(), self.n);
        let rhs: Vec<f64> = self
            .couplings
            .iter()
            .map(|c| c.iter().map(|&(v, w)| w * values[v]).sum())
            .collect();
        let mut x = rhs.clone();
        self.chol.solve(&mut x);
        let ax = self.matrix.mul_vec(&x);
        let scale = rhs.iter().fold(1.0f64, |m, r| m.max(r.abs()));
        let res = ax
            .iter()
            .zip(&rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if res > HARMONIC_RESIDUAL * scale {
            return Err(Error::Numerical(format!("harmonic residual {res:e}")));
        }
        for (i, &v) in self.unknowns.iter().enumerate() {
            values[v] = x[i];
        }
        Ok(())
    }

    /// Adds an exact zero-boundary Gaussian sample to the unknowns.
    pub fn add_gaussian<R: rand::Rng + ?Sized>(&self, rng: &mut R, values: &mut [f64]) {
        let mut z: Vec<f64> = (0..self.unknowns.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.chol.solve_upper(&mut z);
        for (i, &v) in self.unknowns.iter().enumerate() {
            values[v] += z[i];
        }
    }

    /// Inverse of the restricted Laplacian between two unknowns.
    pub fn green(&self, u: usize, v: usize) -> Option<f64> {
        let (su, sv) = (self.slot[u], self.slot[v]);
        if su == NO_SLOT || sv == NO_SLOT {
            return None;
        }
        Some(self.chol.inverse_column(sv)[su])
    }

    /// Solves the restricted system for a right-hand side indexed by vertex.
    pub fn solve_vertex_rhs(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.unknowns.iter().map(|&v| rhs[v]).collect();
        self.chol.solve(&mut x);
        let mut out = vec![0.0; self.n];
        for (i, &v) in self.unknowns.iter().enumerate() {
            out[v] = x[i];
        }
        out
    }
}

/// Sampler for fields with Dirichlet data on the whole boundary cycle.
#[derive(Clone, Debug)]
pub struct Dgff {
    system: RestrictedSystem,
}

impl Dgff {
    pub fn new(domain: &TgDomain) -> Result<Self> {
        let fixed = vec![false; domain.num_vertices()];
        Ok(Self {
            system: RestrictedSystem::for_domain(domain, &fixed)?,
        })
    }

    pub fn system(&self) -> &RestrictedSystem {
        &self.system
    }

    pub fn harmonic(&self, domain: &TgDomain, boundary_data: &[f64]) -> Result<FieldSample> {
        let mut values = with_boundary(domain, boundary_data)?;
        self.system.extend(&mut values)?;
        Ok(FieldSample {
            values,
            boundary_data: boundary_data.to_vec(),
            seed: None,
        })
    }

    /// Harmonic extension plus an independent zero-boundary DGFF drawn from
    /// stream `replicate` of `seed`.
    pub fn sample(
        &self,
        domain: &TgDomain,
        boundary_data: &[f64],
        seed: u64,
        replicate: u64,
    ) -> Result<FieldSample> {
        let mut rng = rng::stream(seed, replicate);
        let mut f = self.sample_with(domain, boundary_data, &mut rng)?;
        f.seed = Some(seed);
        Ok(f)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(
        &self,
        domain: &TgDomain,
        boundary_data: &[f64],
        rng: &mut R,
    ) -> Result<FieldSample> {
        let mut f = self.harmonic(domain, boundary_data)?;
        self.system.add_gaussian(rng, &mut f.values);
        Ok(f)
    }
}

fn with_boundary(domain: &TgDomain, boundary_data: &[f64]) -> Result<Vec<f64>> {
    let cycle = domain.boundary_cycle();
    if boundary_data.len() != cycle.len() {
        return Err(Error::Input(format!(
            "{} boundary values for {} boundary vertices",
            boundary_data.len(),
            cycle.len()
        )));
    }
    if boundary_data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("non-finite boundary value".into()));
    }
    let mut values = vec![0.0; domain.num_vertices()];
    for (&v, &b) in cycle.iter().zip(boundary_data) {
        values[v] = b;
    }
    Ok(values)
}

pub fn harmonic_extension(domain: &TgDomain, boundary_data: &[f64]) -> Result<FieldSample> {
    Dgff::new(domain)?.harmonic(domain, boundary_data)
}

pub fn sample_dgff(domain: &TgDomain, boundary_data: &[f64], seed: u64) -> Result<FieldSample> {
    Dgff::new(domain)?.sample(domain, boundary_data, seed, 0)
}

/// Covariance of the zero-boundary DGFF at two interior vertices.
pub fn discrete_green(domain: &TgDomain, u: usize, v: usize) -> Result<f64> {
    for w in [u, v] {
        if w >= domain.num_vertices() || !domain.is_interior(w) {
            return Err(Error::Domain(format!("vertex {w} is not interior")));
        }
    }
    let dgff = Dgff::new(domain)?;
    Ok(dgff
        .system
        .green(u, v)
        .expect("interior vertices are unknowns"))
}

/// Pointwise sum with a bump that vanishes on the boundary.
pub fn add_bump(domain: &TgDomain, field: &FieldSample, psi: &[f64]) -> Result<FieldSample> {
    if psi.len() != field.values.len() {
        return Err(Error::Input("bump length does not match field".into()));
    }
    if psi.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("non-finite bump value".into()));
    }
    if let Some(&v) = domain.boundary_cycle().iter().find(|&&v| psi[v] != 0.0) {
        return Err(Error::Domain(format!(
            "bump nonzero at boundary vertex {v}"
        )));
    }
    let values = field.values.iter().zip(psi).map(|(a, b)| a + b).collect();
    Ok(FieldSample {
        values,
        boundary_data: field.boundary_data.clone(),
        seed: field.seed,
    })
}

/// `height` on vertices within `radius` of `center`, zero elsewhere.
pub fn disk_bump(domain: &TgDomain, center: C64, radius: f64, height: f64) -> Vec<f64> {
    domain
        .positions()
        .iter()
        .map(|&z| {
            if (z - center).norm() <= radius {
                height
            } else {
                0.0
            }
        })
        .collect()
}

/// Smooth function on the upper half-plane with a closed-form gradient.
pub trait SmoothFn: Sync {
    fn value(&self, z: C64) -> f64;
    /// `f_x + i f_y`.
    fn gradient(&self, z: C64) -> C64;
    /// Disc containing the support, or `None` when unbounded.
    fn support(&self) -> Option<(C64, f64)>;
}

/// `height · exp(1 − 1/(1 − |z−c|²/R²))` inside the disc, zero outside.
#[derive(Clone, Copy, Debug)]
pub struct Bump {
    pub center: C64,
    pub radius: f64,
    pub height: f64,
}

impl SmoothFn for Bump {
    fn value(&self, z: C64) -> f64 {
        let q = (z - self.center).norm_sqr() / (self.radius * self.radius);
        if q >= 1.0 {
            return 0.0;
        }
        self.height * (1.0 - 1.0 / (1.0 - q)).exp()
    }

    fn gradient(&self, z: C64) -> C64 {
        let r2 = self.radius * self.radius;
        let q = (z - self.center).norm_sqr() / r2;
        if q >= 1.0 {
            return C64::new(0.0, 0.0);
        }
        let f = self.height * (1.0 - 1.0 / (1.0 - q)).exp();
        let dfdq = -f / (1.0 - q).powi(2);
        dfdq * 2.0 * (z - self.center) / r2
    }

    fn support(&self) -> Option<(C64, f64)> {
        Some((self.center, self.radius))
    }
}

/// A conformal map with its complex derivative.
pub trait PlaneMap: Sync {
    fn eval_with_derivative(&self, z: C64) -> Result<(C64, C64)>;

    /// Image alone; must stay finite on the domain boundary, where the
    /// derivative may blow up.
    fn image(&self, z: C64) -> Result<C64> {
        self.eval_with_derivative(z).map(|(w, _)| w)
    }
}

/// The identity, for functions already living on the domain.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityMap;

impl PlaneMap for IdentityMap {
    fn eval_with_derivative(&self, z: C64) -> Result<(C64, C64)> {
        Ok((z, C64::new(1.0, 0.0)))
    }
}

#[derive(Clone, Debug)]
pub struct Projection {
    /// Vertex coefficients of the projected piecewise-affine function.
    pub coefficients: Vec<f64>,
    /// `‖P f_D − f_D‖_∇`.
    pub projection_error: f64,
    /// `‖f_D‖_∇` from the same quadrature.
    pub norm: f64,
}

// interior 3-point rule, exact for quadratics; avoids triangle edges
const GAUSS3: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

/// Each triangle is split this many times per side for quadrature.
const QUAD_SPLIT: usize = 4;

/// Barycentric corners of the `QUAD_SPLIT²` congruent sub-triangles.
fn sub_triangles() -> Vec<[[f64; 3]; 3]> {
    let s = QUAD_SPLIT;
    let q = |i: usize, j: usize| {
        let (a, b) = (i as f64 / s as f64, j as f64 / s as f64);
        [1.0 - a - b, a, b]
    };
    let mut out = Vec::with_capacity(s * s);
    for i in 0..s {
        for j in 0..s - i {
            out.push([q(i, j), q(i + 1, j), q(i, j + 1)]);
            if i + j + 2 <= s {
                out.push([q(i + 1, j), q(i + 1, j + 1), q(i, j + 1)]);
            }
        }
    }
    out
}

/// True when the image of the triangle provably avoids the support of `f`:
/// the image lies within `|φ'|·diam` of the centroid image, doubled for
/// curvature.
fn misses_support(f: &dyn SmoothFn, map: &dyn PlaneMap, p: &[C64; 3]) -> Result<bool> {
    let Some((c, r)) = f.support() else {
        return Ok(false);
    };
    let centroid = (p[0] + p[1] + p[2]) / 3.0;
    let (w, dw) = map.eval_with_derivative(centroid)?;
    let reach = 2.0 * dw.norm() * (p[1] - p[0]).norm();
    Ok((w - c).norm() > r + reach)
}

/// Dirichlet-orthogonal projection of `f ∘ φ` onto zero-boundary
/// piecewise-affine functions, with the energy-norm error.
pub fn project_fem(f: &dyn SmoothFn, domain: &TgDomain, map: &dyn PlaneMap) -> Result<Projection> {
    if let Some((c, r)) = f.support() {
        if c.im - r <= 0.0 {
            return Err(Error::Support(
                "test function support reaches the real axis".into(),
            ));
        }
    }
    for &v in domain.boundary_cycle() {
        let w = map.image(domain.position(v))?;
        if f.value(w) != 0.0 || f.gradient(w) != C64::new(0.0, 0.0) {
            return Err(Error::Support(format!(
                "pulled-back support reaches boundary vertex {v}"
            )));
        }
    }
    let pos = domain.positions();
    let n = domain.num_vertices();
    let subs = sub_triangles();
    let area = domain.area() / domain.triangles().len() as f64;
    let sub_area = area / subs.len() as f64;
    // per triangle: gradients of f ∘ φ at the quadrature points, or None
    // where the triangle is seen to miss the support
    let mut tri_grads: Vec<Option<Vec<C64>>> = Vec::with_capacity(domain.triangles().len());
    let mut hat: Vec<[C64; 3]> = Vec::with_capacity(domain.triangles().len());
    let mut rhs = vec![0.0; n];
    let mut norm2 = 0.0;
    for tri in domain.triangles() {
        let p = tri.map(|v| pos[v]);
        let h = [
            C64::i() * (p[2] - p[1]) / (2.0 * area),
            C64::i() * (p[0] - p[2]) / (2.0 * area),
            C64::i() * (p[1] - p[0]) / (2.0 * area),
        ];
        hat.push(h);
        if misses_support(f, map, &p)? {
            tri_grads.push(None);
            continue;
        }
        let mut g = Vec::with_capacity(3 * subs.len());
        let mut gint = C64::new(0.0, 0.0);
        for sub in &subs {
            for bary in &GAUSS3 {
                let mut b = [0.0; 3];
                for k in 0..3 {
                    for l in 0..3 {
                        b[l] += bary[k] * sub[k][l];
                    }
                }
                let z = b[0] * p[0] + b[1] * p[1] + b[2] * p[2];
                let (w, dw) = map.eval_with_derivative(z)?;
                let gk = dw.conj() * f.gradient(w);
                norm2 += sub_area / 3.0 * gk.norm_sqr();
                gint += gk * (sub_area / 3.0);
                g.push(gk);
            }
        }
        for k in 0..3 {
            rhs[tri[k]] += (h[k].conj() * gint).re;
        }
        tri_grads.push(Some(g));
    }
    let system = Dgff::new(domain)?.system;
    let coefficients = system.solve_vertex_rhs(&rhs);
    let mut err2 = 0.0;
    for (t, tri) in domain.triangles().iter().enumerate() {
        let gp: C64 = (0..3).map(|k| coefficients[tri[k]] * hat[t][k]).sum();
        match &tri_grads[t] {
            Some(g) => {
                err2 += g
                    .iter()
                    .map(|gk| sub_area / 3.0 * (gk - gp).norm_sqr())
                    .sum::<f64>()
            }
            None => err2 += area * gp.norm_sqr(),
        }
    }
    Ok(Projection {
        coefficients,
        projection_error: err2.max(0.0).sqrt(),
        norm: norm2.sqrt(),
    })
}
