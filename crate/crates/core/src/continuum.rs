//! Closed-form half-plane quantities (Green's function, harmonic heights,
//! electrostatic energy), Monte Carlo verifiers for the Itô identities along
//! SLE(4), and the explicit coupling of an SLE(4) path with a lattice field.

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{Bump, FieldSample, RestrictedSystem, SmoothFn};
use crate::lattice::{build_box_domain, TgDomain};
use crate::loewner::{
    sample_sle4_driving, solve_forward_with_derivative, sqrt_h, trace_from_driving,
};
use crate::loewner::{DrivingFunction, HalfPlanePath};
use crate::rng;
use crate::stats::{self, KsResult, MeanSe};

const SWALLOW_IM: f64 = 1e-12;
const MIN_RUNS: usize = 100;

/// `G(x,y) = (2π)⁻¹ log |(x̄ − y)/(x − y)|`.
pub fn green_h(x: C64, y: C64) -> Result<f64> {
    if x.im < 0.0 || y.im < 0.0 {
        return Err(Error::Domain(format!("{x} or {y} below the real axis")));
    }
    if x == y {
        return Err(Error::Numerical(format!(
            "Green's function is singular at {x}"
        )));
    }
    if x.im == 0.0 || y.im == 0.0 {
        return Ok(0.0);
    }
    Ok(((x.conj() - y).norm() / (x - y).norm()).ln() / (2.0 * PI))
}

/// Diagonal of the Green's function with the logarithmic singularity
/// removed: `(2π)⁻¹ log(2 Im Z / |g'|)` for the image `Z` of a point with
/// derivative `g'`. Differences in time match the off-diagonal dynamics.
pub fn green_renormalized(z: C64, gp: C64) -> f64 {
    (2.0 * z.im / gp.norm()).ln() / (2.0 * PI)
}

/// `λ (1 − 2 arg(g − W)/π)`; points on the real line get `±λ` by side.
pub fn h_t_eval(g: C64, w: f64, lambda: f64) -> f64 {
    let d = g - w;
    let arg = if d.im <= 0.0 {
        if d.re >= 0.0 {
            0.0
        } else {
            PI
        }
    } else {
        d.im.atan2(d.re)
    };
    lambda * (1.0 - 2.0 * arg / PI)
}

/// Point masses in the upper half-plane. With `self_radius` set, each mass
/// is treated as a uniform disc of that radius for its own energy term;
/// otherwise the diagonal is left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeTestFunction {
    pub points: Vec<C64>,
    pub weights: Vec<f64>,
    pub self_radius: Option<f64>,
    pub tag: String,
}

impl LatticeTestFunction {
    pub fn point_masses(
        points: Vec<C64>,
        weights: Vec<f64>,
        self_radius: Option<f64>,
    ) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Input("points and weights differ in length".into()));
        }
        if points.iter().any(|p| !(p.im > 0.0)) {
            return Err(Error::Domain(
                "test function support must lie in the open half-plane".into(),
            ));
        }
        if let Some(a) = self_radius {
            if !(a > 0.0) {
                return Err(Error::Input("self radius must be positive".into()));
            }
        }
        Ok(Self {
            points,
            weights,
            self_radius,
            tag: "points".into(),
        })
    }

    /// Unit-mass density proportional to `bump`, on a square sub-grid of the
    /// given spacing. Each cell carries its own disc self-energy.
    pub fn from_bump(bump: &Bump, spacing: f64) -> Result<Self> {
        let (c, r) = (bump.center, bump.radius);
        if c.im - r <= 0.0 {
            return Err(Error::Support("bump reaches the real axis".into()));
        }
        let k = (r / spacing).ceil() as i32;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for i in -k..=k {
            for j in -k..=k {
                let z = c + C64::new(i as f64 * spacing, j as f64 * spacing);
                let v = bump.value(z);
                if v > 0.0 {
                    points.push(z);
                    weights.push(v);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            points,
            weights,
            self_radius: Some(spacing / PI.sqrt()),
            tag: format!("bump({},{};{})", c.re, c.im, r),
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn support_radius(&self) -> f64 {
        let c = self.points.iter().sum::<C64>() / self.points.len().max(1) as f64;
        self.points
            .iter()
            .map(|p| (p - c).norm())
            .fold(0.0, f64::max)
    }

    /// `Σ m_j h(x_j)` for a function given pointwise.
    pub fn pair(&self, h: impl Fn(C64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &m)| m * h(p))
            .sum()
    }
}

/// `E_t(ρ)` from the images `(g_t(x), g_t'(x))` of the support points and
/// the driving value `W_t`.
pub fn energy(rho: &LatticeTestFunction, images: &[(C64, C64)], w: f64) -> Result<f64> {
    if images.len() != rho.points.len() {
        return Err(Error::Input("one image per support point required".into()));
    }
    let z: Vec<C64> = images.iter().map(|&(g, _)| g - w).collect();
    for (j, zj) in z.iter().enumerate() {
        if !(zj.im > SWALLOW_IM) {
            return Err(Error::Domain(format!(
                "support point {} is swallowed",
                rho.points[j]
            )));
        }
    }
    let m = &rho.weights;
    let mut e = 0.0;
    for j in 0..z.len() {
        for k in j + 1..z.len() {
            e += 2.0 * m[j] * m[k] * green_h(z[j], z[k])?;
        }
        if let Some(a) = rho.self_radius {
            e += m[j]
                * m[j]
                * (green_renormalized(z[j], images[j].1) - a.ln() / (2.0 * PI) + 0.125 / PI);
        }
    }
    Ok(e)
}

/// `E_t(ρ)` under the Loewner flow of `w`, by adaptive integration.
pub fn energy_at(rho: &LatticeTestFunction, w: &DrivingFunction, t: f64) -> Result<f64> {
    let images = rho
        .points
        .iter()
        .map(|&x| solve_forward_with_derivative(w, x, t))
        .collect::<Result<Vec<_>>>()?;
    energy(rho, &images, w.eval(t))
}

/// Loewner flow of a finite point set in centred coordinates `Z = g − W`,
/// stepped by a driving jump followed by a constant-driving interval.
#[derive(Clone, Debug)]
pub struct Flow {
    z: Vec<C64>,
    gp: Vec<C64>,
    w: f64,
    t: f64,
    swallowed: bool,
}

impl Flow {
    pub fn new(points: &[C64]) -> Self {
        Self {
            z: points.to_vec(),
            gp: vec![C64::new(1.0, 0.0); points.len()],
            w: 0.0,
            t: 0.0,
            swallowed: false,
        }
    }

    /// `Z ↦ √((Z − ΔW)² + 4Δt)`.
    pub fn step(&mut self, dw: f64, dt: f64) {
        for (z, gp) in self.z.iter_mut().zip(self.gp.iter_mut()) {
            let u = *z - dw;
            let next = sqrt_h(u * u + 4.0 * dt, u.re);
            if next.norm() > 0.0 {
                *gp *= u / next;
            }
            if u.im > 0.0 && !(next.im > SWALLOW_IM) {
                self.swallowed = true;
            }
            *z = next;
        }
        self.w += dw;
        self.t += dt;
    }

    /// Smallest `|g − W|` over points off the real line.
    pub fn nearest(&self) -> f64 {
        self.z
            .iter()
            .filter(|z| z.im > 0.0)
            .map(|z| z.norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn centred(&self) -> &[C64] {
        &self.z
    }

    pub fn derivatives(&self) -> &[C64] {
        &self.gp
    }

    pub fn driving(&self) -> f64 {
        self.w
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn swallowed(&self) -> bool {
        self.swallowed
    }

    pub fn heights(&self, lambda: f64) -> Vec<f64> {
        self.z.iter().map(|&z| h_t_eval(z, 0.0, lambda)).collect()
    }

    /// `E_t(ρ)` for a test function whose support is the flowed point set.
    pub fn energy(&self, rho: &LatticeTestFunction) -> Result<f64> {
        let images: Vec<(C64, C64)> = self
            .z
            .iter()
            .copied()
            .zip(self.gp.iter().copied())
            .collect();
        energy(rho, &images, 0.0)
    }

    /// `G_t` between flowed points `j` and `k`, renormalized on the diagonal.
    pub fn green(&self, j: usize, k: usize) -> f64 {
        if j == k {
            green_renormalized(self.z[j], self.gp[j])
        } else {
            green_h(self.z[j], self.z[k]).unwrap_or(0.0)
        }
    }
}

/// Steps closer than this many `√dt` to the tip are bisected.
const REFINE_RATIO: f64 = 40.0;
const MAX_REFINE: u32 = 24;

/// One SLE(4) run on a grid of step `dt`: increments `2√dt·N(0,1)`, with
/// steps bisected by Brownian bridges while a tracked point is near the tip.
struct Sle4Run {
    rng: rng::Rng,
    dt: f64,
}

impl Sle4Run {
    fn new(seed: u64, run: usize, dt: f64) -> Self {
        Self {
            rng: rng::stream(seed, run as u64),
            dt,
        }
    }

    /// Advances one grid step; `sub` sees the flow after every substep.
    /// Returns the grid increment.
    fn step(&mut self, flow: &mut Flow, sub: &mut dyn FnMut(&Flow)) -> f64 {
        let dw = 2.0 * self.dt.sqrt() * self.rng.sample::<f64, _>(StandardNormal);
        advance(flow, dw, self.dt, &mut self.rng, 0, sub);
        dw
    }
}

fn advance(
    flow: &mut Flow,
    dw: f64,
    dt: f64,
    rng: &mut rng::Rng,
    depth: u32,
    sub: &mut dyn FnMut(&Flow),
) {
    if depth < MAX_REFINE && flow.nearest() < REFINE_RATIO * dt.sqrt() {
        // bridge midpoint of a variance-4 Brownian motion over dt
        let mid = 0.5 * dw + dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
        advance(flow, mid, 0.5 * dt, rng, depth + 1, sub);
        advance(flow, dw - mid, 0.5 * dt, rng, depth + 1, sub);
    } else {
        flow.step(dw, dt);
        sub(flow);
    }
}

fn grid(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(horizon >= 0.0 && dt > 0.0) {
        return Err(Error::Input(
            "horizon must be nonnegative and step positive".into(),
        ));
    }
    let n = (horizon / dt).round() as usize;
    Ok((n, if n == 0 { dt } else { horizon / n as f64 }))
}

/// Common Monte Carlo settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub runs: usize,
    pub dt: f64,
    pub seed: u64,
    pub lambda: f64,
}

impl EnsembleSpec {
    pub fn new(runs: usize, dt: f64, seed: u64) -> Self {
        Self {
            runs,
            dt,
            seed,
            lambda: crate::lambda_critical(),
        }
    }

    fn warnings(&self) -> Vec<String> {
        if self.runs < MIN_RUNS {
            vec![format!(
                "only {} runs; the test has little power",
                self.runs
            )]
        } else {
            Vec::new()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftCheck {
    pub s: f64,
    pub t: f64,
    pub drift: MeanSe,
    pub z: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub point: (f64, f64),
    pub checks: Vec<DriftCheck>,
    pub range_ok: bool,
    pub swallowed_runs: usize,
    pub warnings: Vec<String>,
    pub threshold: f64,
    pub pass: bool,
}

/// Drift of `h_t(z) − h_s(z)` over all checkpoint pairs.
pub fn verify_height_martingale(
    z: C64,
    checkpoints: &[f64],
    spec: &EnsembleSpec,
) -> Result<MartingaleReport> {
    let mut cps = checkpoints.to_vec();
    cps.sort_by(f64::total_cmp);
    cps.dedup();
    if cps.iter().any(|&t| t < 0.0) {
        return Err(Error::Input("negative checkpoint".into()));
    }
    let horizon = cps.last().copied().unwrap_or(0.0);
    let (steps, dt) = grid(horizon, spec.dt)?;
    let marks: Vec<usize> = cps.iter().map(|&t| (t / dt).round() as usize).collect();
    let lambda = spec.lambda;
    let runs: Vec<(Vec<f64>, bool, bool)> = (0..spec.runs)
        .into_par_iter()
        .map(|r| {
            let mut run = Sle4Run::new(spec.seed, r, dt);
            let mut flow = Flow::new(&[z]);
            let mut vals = Vec::with_capacity(marks.len());
            let mut in_range = true;
            let mut next = 0;
            for k in 0..=steps {
                if k > 0 {
                    run.step(&mut flow, &mut |_| {});
                }
                let h = h_t_eval(flow.centred()[0], 0.0, lambda);
                in_range &= h.abs() <= lambda * (1.0 + 1e-12);
                while next < marks.len() && marks[next] == k {
                    vals.push(h);
                    next += 1;
                }
            }
            (vals, in_range, flow.swallowed())
        })
        .collect();
    let kept: Vec<&Vec<f64>> = runs.iter().filter(|r| !r.2).map(|r| &r.0).collect();
    let mut checks = Vec::new();
    for a in 0..cps.len() {
        for b in a + 1..cps.len() {
            let d: Vec<f64> = kept.iter().map(|v| v[b] - v[a]).collect();
            let drift = stats::mean_se(&d);
            let zs = drift.z();
            checks.push(DriftCheck {
                s: cps[a],
                t: cps[b],
                drift,
                z: zs,
                pass: zs.abs() < 3.0,
            });
        }
    }
    let range_ok = runs.iter().all(|r| r.1);
    let pass = range_ok && checks.iter().all(|c| c.pass);
    Ok(MartingaleReport {
        point: (z.re, z.im),
        checks,
        range_ok,
        swallowed_runs: runs.len() - kept.len(),
        warnings: spec.warnings(),
        threshold: 3.0,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QvReport {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub horizon: f64,
    pub dt: f64,
    pub lambda: f64,
    pub covariation: MeanSe,
    /// Mean of `G_0 − G_T`.
    pub green_drop: MeanSe,
    /// Mean of covariation + `G_T − G_0`.
    pub residual: MeanSe,
    pub relative_residual: f64,
    pub z: f64,
    /// z-score of `Σ(ΔB)² − T` for a Brownian control on the same grid.
    pub control_z: f64,
    pub swallowed_runs: usize,
    pub warnings: Vec<String>,
    pub pass: bool,
}

/// Realized covariation of `h_t(x), h_t(y)` against the drop of `G_t(x,y)`.
pub fn verify_qv_relation(x: C64, y: C64, horizon: f64, spec: &EnsembleSpec) -> Result<QvReport> {
    if !(x.im > 0.0 && y.im > 0.0) {
        return Err(Error::Domain(
            "QV points must lie in the open half-plane".into(),
        ));
    }
    let (steps, dt) = grid(horizon, spec.dt)?;
    let same = x == y;
    let pts: Vec<C64> = if same { vec![x] } else { vec![x, y] };
    let (j, k) = if same { (0, 0) } else { (0, 1) };
    let lambda = spec.lambda;
    let runs: Vec<(f64, f64, f64, bool)> = (0..spec.runs)
        .into_par_iter()
        .map(|r| {
            let mut run = Sle4Run::new(spec.seed, r, dt);
            let mut flow = Flow::new(&pts);
            let g0 = flow.green(j, k);
            let mut h = flow.heights(lambda);
            let mut cov = 0.0;
            // Brownian control on the same grid, from the standardized increments
            let mut qv = 0.0;
            for _ in 0..steps {
                let dw = run.step(&mut flow, &mut |f| {
                    let h2 = f.heights(lambda);
                    cov += (h2[j] - h[j]) * (h2[k] - h[k]);
                    h = h2;
                });
                qv += dw * dw / 4.0;
            }
            (cov, g0 - flow.green(j, k), qv, flow.swallowed())
        })
        .collect();
    let kept: Vec<_> = runs.iter().filter(|r| !r.3).collect();
    let cov: Vec<f64> = kept.iter().map(|r| r.0).collect();
    let drop: Vec<f64> = kept.iter().map(|r| r.1).collect();
    let res: Vec<f64> = kept.iter().map(|r| r.0 - r.1).collect();
    let control: Vec<f64> = kept.iter().map(|r| r.2 - horizon).collect();
    let covariation = stats::mean_se(&cov);
    let green_drop = stats::mean_se(&drop);
    let residual = stats::mean_se(&res);
    let control_z = stats::mean_se(&control).z();
    let mut warnings = spec.warnings();
    if control_z.abs() >= 3.0 {
        warnings.push("Brownian control covariation is biased; refine the grid".into());
    }
    let relative_residual = if green_drop.mean == 0.0 {
        0.0
    } else {
        residual.mean / green_drop.mean
    };
    let z = residual.z();
    let pass = z.abs() < 3.0 && relative_residual.abs() <= 0.05 && control_z.abs() < 3.0;
    Ok(QvReport {
        x: (x.re, x.im),
        y: (y.re, y.im),
        horizon,
        dt,
        lambda,
        covariation,
        green_drop,
        residual,
        relative_residual,
        z,
        control_z,
        swallowed_runs: runs.len() - kept.len(),
        warnings,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyClockReport {
    pub horizon: f64,
    pub e0: f64,
    /// `Σ (Δ(h,ρ))² / Σ Δu` pooled over runs and blocks.
    pub variance_ratio: f64,
    pub variance_ratio_se: f64,
    /// Increments up to the first grid time with `u ≥ clock_level`, divided by `√u`.
    pub clock_level: f64,
    pub ks: KsResult,
    pub unreached_runs: usize,
    /// Covariation of the pairings with the first and the remaining points.
    pub cross_covariation: Option<MeanSe>,
    pub cross_energy_drop: Option<MeanSe>,
    pub cross_z: Option<f64>,
    pub swallowed_runs: usize,
    pub warnings: Vec<String>,
    pub pass: bool,
}

/// Blocks per run for the pooled variance ratio.
const CLOCK_BLOCKS: usize = 10;

/// `(h_t, ρ)` against the clock `u = E_0(ρ) − E_t(ρ)`.
pub fn verify_energy_clock(
    rho: &LatticeTestFunction,
    horizon: f64,
    clock_level: f64,
    spec: &EnsembleSpec,
) -> Result<EnergyClockReport> {
    let (steps, dt) = grid(horizon, spec.dt)?;
    let lambda = spec.lambda;
    let e0 = Flow::new(&rho.points).energy(rho)?;
    let n = rho.points.len();
    let cross = n >= 2;
    // pair ρ₁ = first mass, ρ₂ = the rest, for the cross term
    let rho1 = LatticeTestFunction {
        points: rho.points[..1].to_vec(),
        weights: rho.weights[..1].to_vec(),
        self_radius: None,
        tag: String::new(),
    };
    let rho2 = LatticeTestFunction {
        points: rho.points[1..].to_vec(),
        weights: rho.weights[1..].to_vec(),
        self_radius: None,
        tag: String::new(),
    };
    let cross_energy = move |flow: &Flow| -> f64 {
        let mut e = 0.0;
        for b in 1..n {
            e += rho.weights[0] * rho.weights[b] * flow.green(0, b);
        }
        e
    };
    let block_marks: Vec<usize> = (0..=CLOCK_BLOCKS)
        .map(|b| (b * steps) / CLOCK_BLOCKS)
        .collect();
    type Run = (f64, f64, Option<f64>, f64, f64, bool);
    let runs: Vec<Run> = (0..spec.runs)
        .into_par_iter()
        .map(|r| {
            let mut run = Sle4Run::new(spec.seed, r, dt);
            let mut flow = Flow::new(&rho.points);
            let pair = |f: &Flow| -> f64 {
                f.heights(lambda)
                    .iter()
                    .zip(&rho.weights)
                    .map(|(h, m)| h * m)
                    .sum()
            };
            let p0 = pair(&flow);
            let c0 = cross_energy(&flow);
            let (mut sq, mut du) = (0.0, 0.0);
            let (mut bp, mut be) = (p0, e0);
            let mut normal = None;
            let mut cov = 0.0;
            let mut h_prev = flow.heights(lambda);
            let mut block = 1;
            for k in 1..=steps {
                run.step(&mut flow, &mut |f| {
                    let h = f.heights(lambda);
                    if cross {
                        let d1 = rho1.weights[0] * (h[0] - h_prev[0]);
                        let d2: f64 = (1..n)
                            .map(|b| rho2.weights[b - 1] * (h[b] - h_prev[b]))
                            .sum();
                        cov += d1 * d2;
                    }
                    h_prev = h;
                });
                if flow.swallowed() {
                    break;
                }
                let need_energy =
                    normal.is_none() || (block <= CLOCK_BLOCKS && block_marks[block] == k);
                if need_energy {
                    let e = flow.energy(rho).unwrap_or(f64::NAN);
                    let p = pair(&flow);
                    if normal.is_none() && e0 - e >= clock_level {
                        normal = Some((p - p0) / (e0 - e).sqrt());
                    }
                    while block <= CLOCK_BLOCKS && block_marks[block] == k {
                        sq += (p - bp).powi(2);
                        du += be - e;
                        bp = p;
                        be = e;
                        block += 1;
                    }
                }
            }
            (
                sq,
                du,
                normal,
                cov,
                c0 - cross_energy(&flow),
                flow.swallowed(),
            )
        })
        .collect();
    let kept: Vec<&Run> = runs.iter().filter(|r| !r.5).collect();
    let sq: f64 = kept.iter().map(|r| r.0).sum();
    let du: f64 = kept.iter().map(|r| r.1).sum();
    let variance_ratio = if du > 0.0 { sq / du } else { f64::NAN };
    // delta-method standard error from per-run ratios
    let per_run: Vec<f64> = kept.iter().map(|r| r.0 - variance_ratio * r.1).collect();
    let mean_du = du / kept.len().max(1) as f64;
    let variance_ratio_se = stats::mean_se(&per_run).se / mean_du;
    let normals: Vec<f64> = kept.iter().filter_map(|r| r.2).collect();
    let ks = stats::ks_standard_normal(&normals);
    let unreached_runs = kept.len() - normals.len();
    let (cross_covariation, cross_energy_drop, cross_z) = if cross {
        let c: Vec<f64> = kept.iter().map(|r| r.3).collect();
        let d: Vec<f64> = kept.iter().map(|r| r.4).collect();
        let r: Vec<f64> = kept.iter().map(|r| r.3 - r.4).collect();
        (
            Some(stats::mean_se(&c)),
            Some(stats::mean_se(&d)),
            Some(stats::mean_se(&r).z()),
        )
    } else {
        (None, None, None)
    };
    let mut warnings = spec.warnings();
    let swallowed_runs = runs.len() - kept.len();
    if swallowed_runs * 100 > runs.len() {
        warnings.push("support swallowed in more than 1% of runs; shrink the horizon".into());
    }
    if unreached_runs > 0 {
        warnings.push(format!(
            "{unreached_runs} runs never reached the clock level"
        ));
    }
    let pass = steps == 0
        || ((0.9..=1.1).contains(&variance_ratio)
            && ks.p_value > 0.01
            && swallowed_runs * 100 <= runs.len());
    Ok(EnergyClockReport {
        horizon,
        e0,
        variance_ratio,
        variance_ratio_se,
        clock_level,
        ks,
        unreached_runs,
        cross_covariation,
        cross_energy_drop,
        cross_z,
        swallowed_runs,
        warnings,
        pass,
    })
}

/// Truncated half-plane box and time horizon for the coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub half_width: f64,
    pub height: f64,
    pub mesh: f64,
    pub horizon: f64,
    pub dt: f64,
    pub lambda: f64,
    #[serde(default)]
    pub method: CouplingMethod,
    /// Lattice box standing in for the half-plane in the uniformized
    /// coordinates of the transplant method: (half width, height, mesh).
    #[serde(default = "default_image_box")]
    pub image_box: (f64, f64, f64),
}

fn default_image_box() -> (f64, f64, f64) {
    (16.0, 16.0, 0.25)
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            height: 8.0,
            mesh: 0.5,
            horizon: 0.5,
            dt: 1e-3,
            lambda: crate::lambda_critical(),
            method: CouplingMethod::default(),
            image_box: default_image_box(),
        }
    }
}

/// How the zero-boundary field off the path is realized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMethod {
    /// A box DGFF in the uniformized plane, pulled back through `g_T − W_T`
    /// by piecewise-affine interpolation. Resolves the slit exactly.
    #[default]
    Transplant,
    /// A DGFF on the box itself with the edges crossing the path cut and
    /// replaced by conductances to ground. First order in mesh/path length.
    CutLattice,
}

/// An SLE(4) path to time `T` with the field `h_T` plus a zero-boundary
/// field off the path, on the lattice box.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingSample {
    pub driving: DrivingFunction,
    pub path: HalfPlanePath,
    pub field: FieldSample,
    /// `h_T` at each vertex.
    pub mean: Vec<f64>,
    /// +1 right of the path (plus side), −1 left.
    pub side: Vec<i8>,
    /// Vertices with a lattice edge crossing the path.
    pub adjacent: Vec<usize>,
}

/// Smallest edge fraction used for a cut conductance.
const MIN_CUT_FRACTION: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct Coupler {
    config: CouplingConfig,
    domain: TgDomain,
    image: TgDomain,
    free: RestrictedSystem,
}

impl Coupler {
    pub fn new(config: CouplingConfig) -> Result<Self> {
        if !(config.lambda > 0.0 && config.horizon > 0.0 && config.dt > 0.0) {
            return Err(Error::Input(
                "coupling needs positive λ, horizon and step".into(),
            ));
        }
        let domain = build_box_domain(config.half_width, config.height, config.mesh)?;
        let (iw, ih, im) = config.image_box;
        let image = match config.method {
            CouplingMethod::Transplant => build_box_domain(iw, ih, im)?,
            CouplingMethod::CutLattice => domain.clone(),
        };
        let free = RestrictedSystem::for_domain(&image, &vec![false; image.num_vertices()])?;
        Ok(Self {
            config,
            domain,
            image,
            free,
        })
    }

    pub fn domain(&self) -> &TgDomain {
        &self.domain
    }

    pub fn config(&self) -> &CouplingConfig {
        &self.config
    }

    pub fn sample(&self, seed: u64) -> Result<CouplingSample> {
        let c = &self.config;
        let d = &self.domain;
        let driving = sample_sle4_driving(c.horizon, c.dt, seed)?;
        let path = trace_from_driving(&driving, 1)?;
        let margin = c.mesh;
        if path
            .points
            .iter()
            .any(|p| p.re.abs() > c.half_width - margin || p.im > c.height - margin)
        {
            return Err(Error::Domain(format!(
                "seed {seed}: path leaves the box; enlarge it"
            )));
        }
        // h_T by the same jump-and-flow discretization as the path
        let mut flow = Flow::new(d.positions());
        let vals = driving.values();
        let ts = driving.times();
        for k in 1..vals.len() {
            flow.step(vals[k] - vals[k - 1], ts[k] - ts[k - 1]);
        }
        let mean = flow.heights(c.lambda);
        let side: Vec<i8> = flow
            .centred()
            .iter()
            .map(|z| if z.re >= 0.0 { 1 } else { -1 })
            .collect();

        let cuts = PathCuts::new(&path.points, c.mesh);
        let n = d.num_vertices();
        let mut extra = vec![0.0; n];
        let mut kept = Vec::with_capacity(d.edges().len());
        let mut adjacent = std::collections::BTreeSet::new();
        for &(u, v, w) in d.edges() {
            match cuts.crossing(d.position(u), d.position(v)) {
                Some((su, sv)) => {
                    extra[u] += w / su.max(MIN_CUT_FRACTION);
                    extra[v] += w / sv.max(MIN_CUT_FRACTION);
                    adjacent.insert(u);
                    adjacent.insert(v);
                }
                None => kept.push((u, v, w)),
            }
        }
        let mut gff_rng = rng::stream(seed, 1);
        let mut values = vec![0.0; n];
        match c.method {
            CouplingMethod::CutLattice => {
                let unknown: Vec<bool> = (0..n).map(|v| d.is_interior(v)).collect();
                let system = RestrictedSystem::new(n, &kept, &unknown, Some(&extra))?;
                system.add_gaussian(&mut gff_rng, &mut values);
            }
            CouplingMethod::Transplant => {
                let mut phi = vec![0.0; self.image.num_vertices()];
                self.free.add_gaussian(&mut gff_rng, &mut phi);
                for (v, (x, z)) in values.iter_mut().zip(flow.centred()).enumerate() {
                    if d.is_interior(v) {
                        *x = self.image.interpolate(&phi, *z).unwrap_or(0.0);
                    }
                }
            }
        }
        for (x, m) in values.iter_mut().zip(&mean) {
            *x += m;
        }
        let boundary_data = d.boundary_cycle().iter().map(|&v| values[v]).collect();
        Ok(CouplingSample {
            driving,
            path,
            field: FieldSample {
                values,
                boundary_data,
                seed: Some(seed),
            },
            mean,
            side,
            adjacent: adjacent.into_iter().collect(),
        })
    }
}

/// Coupling on the box `[−w/2, w/2] × [0, h]` with `box_size = (w, h)`.
pub fn build_coupling(
    seed: u64,
    box_size: (f64, f64),
    mesh: f64,
    horizon: f64,
) -> Result<CouplingSample> {
    let config = CouplingConfig {
        half_width: box_size.0 / 2.0,
        height: box_size.1,
        mesh,
        horizon,
        ..CouplingConfig::default()
    };
    Coupler::new(config)?.sample(seed)
}

/// Bucketed path segments for edge-crossing queries.
struct PathCuts<'a> {
    points: &'a [C64],
    cell: f64,
    buckets: std::collections::HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> PathCuts<'a> {
    fn new(points: &'a [C64], cell: f64) -> Self {
        let mut buckets: std::collections::HashMap<(i64, i64), Vec<usize>> = Default::default();
        for s in 0..points.len().saturating_sub(1) {
            let (a, b) = (points[s], points[s + 1]);
            for key in cells(a, b, cell) {
                buckets.entry(key).or_default().push(s);
            }
        }
        Self {
            points,
            cell,
            buckets,
        }
    }

    /// Fractions from each end to the nearest crossing, when the segment
    /// `p → q` meets the path.
    fn crossing(&self, p: C64, q: C64) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut seen = Vec::new();
        for key in cells(p, q, self.cell) {
            if let Some(list) = self.buckets.get(&key) {
                for &s in list {
                    if seen.contains(&s) {
                        continue;
                    }
                    seen.push(s);
                    if let Some(f) = segment_hit(p, q, self.points[s], self.points[s + 1]) {
                        lo = lo.min(f);
                        hi = hi.max(f);
                    }
                }
            }
        }
        (lo <= hi).then(|| (lo, 1.0 - hi))
    }
}

fn cells(a: C64, b: C64, cell: f64) -> Vec<(i64, i64)> {
    let x0 = (a.re.min(b.re) / cell).floor() as i64;
    let x1 = (a.re.max(b.re) / cell).floor() as i64;
    let y0 = (a.im.min(b.im) / cell).floor() as i64;
    let y1 = (a.im.max(b.im) / cell).floor() as i64;
    let mut out = Vec::new();
    for x in x0..=x1 {
        for y in y0..=y1 {
            out.push((x, y));
        }
    }
    out
}

/// Fraction along `p → q` where it meets segment `a → b`.
fn segment_hit(p: C64, q: C64, a: C64, b: C64) -> Option<f64> {
    let cross = |u: C64, v: C64| u.re * v.im - u.im * v.re;
    let (d1, d2) = (q - p, b - a);
    let den = cross(d1, d2);
    if den == 0.0 {
        return None;
    }
    let s = cross(a - p, d2) / den;
    let r = cross(a - p, d1) / den;
    ((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&r)).then_some(s)
}

/// Lumped vertex masses of a unit-mass bump on a lattice domain.
pub fn lattice_masses(domain: &TgDomain, bump: &Bump) -> Vec<f64> {
    let mut m: Vec<f64> = domain
        .positions()
        .iter()
        .enumerate()
        .map(|(v, &z)| {
            if domain.is_interior(v) {
                bump.value(z)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = m.iter().sum();
    if total > 0.0 {
        m.iter_mut().for_each(|x| *x /= total);
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingCheck {
    pub center: (f64, f64),
    pub radius: f64,
    /// `E_0(ρ)` by quadrature of the half-plane Green's function.
    pub e0: f64,
    /// Variance of the pairing under the box DGFF with no path.
    pub lattice_variance: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub ratio: f64,
    pub mean: MeanSe,
    pub predicted_mean: f64,
    pub mean_z: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub config: CouplingConfig,
    pub seeds: usize,
    pub failed_seeds: Vec<(u64, String)>,
    pub checks: Vec<PairingCheck>,
    pub pass: bool,
}

/// Pairings of the coupled field with unit-mass bumps, against `E_0(ρ)` and
/// the harmonic mean.
pub fn verify_coupling(
    config: &CouplingConfig,
    bumps: &[Bump],
    seeds: usize,
    seed0: u64,
) -> Result<CouplingReport> {
    let coupler = Coupler::new(config.clone())?;
    let d = coupler.domain();
    let masses: Vec<Vec<f64>> = bumps.iter().map(|b| lattice_masses(d, b)).collect();
    let results: Vec<std::result::Result<Vec<f64>, String>> = (0..seeds as u64)
        .into_par_iter()
        .map(|k| {
            let s = coupler.sample(seed0 + k).map_err(|e| e.to_string())?;
            Ok(masses
                .iter()
                .map(|m| m.iter().zip(&s.field.values).map(|(a, b)| a * b).sum())
                .collect())
        })
        .collect();
    let mut failed_seeds = Vec::new();
    let mut pairings: Vec<Vec<f64>> = vec![Vec::new(); bumps.len()];
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => p
                .into_iter()
                .enumerate()
                .for_each(|(j, x)| pairings[j].push(x)),
            Err(e) => failed_seeds.push((seed0 + k as u64, e)),
        }
    }
    let free = RestrictedSystem::for_domain(d, &vec![false; d.num_vertices()])?;
    let mut checks = Vec::new();
    for (j, b) in bumps.iter().enumerate() {
        let rho = LatticeTestFunction::from_bump(b, b.radius / 20.0)?;
        let e0 = energy(
            &rho,
            &rho.points
                .iter()
                .map(|&p| (p, C64::new(1.0, 0.0)))
                .collect::<Vec<_>>(),
            0.0,
        )?;
        let x = free.solve_vertex_rhs(&masses[j]);
        let lattice_variance: f64 = x.iter().zip(&masses[j]).map(|(a, b)| a * b).sum();
        let variance = stats::variance(&pairings[j]);
        let variance_se = stats::variance_se(&pairings[j]);
        let mean = stats::mean_se(&pairings[j]);
        let predicted_mean = rho.pair(|z| h_t_eval(z, 0.0, config.lambda));
        let mean_z = (mean.mean - predicted_mean) / mean.se;
        let ratio = variance / e0;
        let pass = (ratio - 1.0).abs() <= 0.05 && mean_z.abs() < 3.0;
        checks.push(PairingCheck {
            center: (b.center.re, b.center.im),
            radius: b.radius,
            e0,
            lattice_variance,
            variance,
            variance_se,
            ratio,
            mean,
            predicted_mean,
            mean_z,
            pass,
        });
    }
    let pass = checks.iter().all(|c| c.pass) && failed_seeds.len() * 100 <= seeds;
    Ok(CouplingReport {
        config: config.clone(),
        seeds,
        failed_seeds,
        checks,
        pass,
    })
}

/// Unit-mass bumps used by the coupling check.
pub fn default_coupling_bumps() -> Vec<Bump> {
    vec![
        Bump {
            center: C64::new(0.0, 2.0),
            radius: 1.0,
            height: 1.0,
        },
        Bump {
            center: C64::new(-2.0, 2.0),
            radius: 1.0,
            height: 1.0,
        },
        Bump {
            center: C64::new(2.5, 1.5),
            radius: 1.0,
            height: 1.0,
        },
    ]
}
