//! Verifier dispatch. Each verifier reads its table under `[verify]` and
//! returns a JSON report with an overall pass flag.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, HeightGapConfig, LocalityConfig, ProjectionConfig};
use crate::continuum::{self, CouplingConfig, EnsembleSpec, LatticeTestFunction};
use crate::error::{Error, Result};
use crate::field::{project_fem, Bump, Dgff};
use crate::interface::{height_gap_field, trace_interface};
use crate::lattice::build_rhombus_domain;
use crate::localset::{self, SetRule};
use crate::loewner::{map_domain_to_h, MapOptions};
use crate::stats::{self, LinearFit};
use crate::{rng, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Verifier {
    Martingale,
    Qv,
    EnergyClock,
    Coupling,
    Projection,
    Locality,
    HeightGap,
}

impl Verifier {
    pub fn name(&self) -> &'static str {
        match self {
            Verifier::Martingale => "martingale",
            Verifier::Qv => "qv",
            Verifier::EnergyClock => "energy-clock",
            Verifier::Coupling => "coupling",
            Verifier::Projection => "projection",
            Verifier::Locality => "locality",
            Verifier::HeightGap => "height-gap",
        }
    }
}

impl std::str::FromStr for Verifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        <Self as clap::ValueEnum>::from_str(s, false)
            .map_err(|_| Error::Config(format!("unknown verifier `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifierOutcome {
    pub which: Verifier,
    pub pass: bool,
    pub report: serde_json::Value,
}

fn outcome<T: Serialize>(which: Verifier, pass: bool, report: &T) -> VerifierOutcome {
    VerifierOutcome {
        which,
        pass,
        report: serde_json::to_value(report).expect("report serializes"),
    }
}

/// Runs one verifier with the settings in `config.verify` and the seed in
/// `config.ensemble.seed`.
pub fn run_verifier(config: &ExperimentConfig, which: Verifier) -> Result<VerifierOutcome> {
    config.validate()?;
    let v = &config.verify;
    let seed = config.ensemble.seed;
    let spec = |runs: usize, dt: f64| EnsembleSpec {
        runs,
        dt,
        seed,
        lambda: config.lambda,
    };
    match which {
        Verifier::Martingale => {
            let m = &v.martingale;
            let z = C64::new(m.point.0, m.point.1);
            let r = continuum::verify_height_martingale(z, &m.checkpoints, &spec(m.runs, m.dt))?;
            Ok(outcome(which, r.pass, &r))
        }
        Verifier::Qv => {
            let q = &v.qv;
            let reports = q
                .pairs
                .iter()
                .map(|p| {
                    let (x, y) = (C64::new(p[0], p[1]), C64::new(p[2], p[3]));
                    continuum::verify_qv_relation(x, y, q.horizon, &spec(q.runs, q.dt))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(outcome(which, reports.iter().all(|r| r.pass), &reports))
        }
        Verifier::EnergyClock => {
            let e = &v.energy_clock;
            let points: Vec<C64> = e.masses.iter().map(|m| C64::new(m[0], m[1])).collect();
            let weights: Vec<f64> = e.masses.iter().map(|m| m[2]).collect();
            let rho = LatticeTestFunction::point_masses(points, weights, Some(e.self_radius))?;
            let r = continuum::verify_energy_clock(
                &rho,
                e.horizon,
                e.clock_level,
                &spec(e.runs, e.dt),
            )?;
            Ok(outcome(which, r.pass, &r))
        }
        Verifier::Coupling => {
            let c = &v.coupling;
            let cc = CouplingConfig {
                half_width: c.half_width,
                height: c.height,
                mesh: c.mesh,
                horizon: c.horizon,
                dt: c.dt,
                lambda: config.lambda,
                method: c.method,
                image_box: c.image_box,
            };
            let bumps: Vec<Bump> = c
                .bumps
                .iter()
                .map(|b| Bump {
                    center: C64::new(b[0], b[1]),
                    radius: b[2],
                    height: 1.0,
                })
                .collect();
            let r = continuum::verify_coupling(&cc, &bumps, c.seeds, seed)?;
            Ok(outcome(which, r.pass, &r))
        }
        Verifier::Projection => {
            let r = verify_projection(&v.projection)?;
            Ok(outcome(which, r.pass, &r))
        }
        Verifier::Locality => {
            let r = verify_locality(&v.locality, seed)?;
            Ok(outcome(which, r.pass, &r))
        }
        Verifier::HeightGap => {
            let r = verify_height_gap(&v.height_gap, config.lambda, seed)?;
            Ok(outcome(which, r.pass, &r))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub side_n: usize,
    /// Inradius of the domain seen from `φ⁻¹(i)`.
    pub r_d: f64,
    pub error: f64,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub bump: [f64; 3],
    pub points: Vec<ProjectionPoint>,
    /// Fit of `log error` against `log r_D`.
    pub fit: LinearFit,
    pub slope_window: (f64, f64),
    pub pass: bool,
}

/// Energy-norm error of the piecewise-affine projection of a fixed bump
/// pulled back to rhombi of growing size.
pub fn verify_projection(cfg: &ProjectionConfig) -> Result<ProjectionReport> {
    if cfg.sides.len() < 2 {
        return Err(Error::Config("projection needs at least two sides".into()));
    }
    let bump = Bump {
        center: C64::new(cfg.bump[0], cfg.bump[1]),
        radius: cfg.bump[2],
        height: 1.0,
    };
    let opts = MapOptions {
        densify: cfg.densify,
        ..Default::default()
    };
    let points = cfg
        .sides
        .par_iter()
        .map(|&n| {
            let d = build_rhombus_domain(n, 0.5)?;
            let map = map_domain_to_h(&d, &opts)?;
            let r_d = d.inradius(map.inverse(C64::i()))?;
            let p = project_fem(&bump, &d, &map)?;
            Ok(ProjectionPoint {
                side_n: n,
                r_d,
                error: p.projection_error,
                norm: p.norm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = points.iter().map(|p| p.r_d.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.error.ln()).collect();
    let fit = stats::ols(&x, &y);
    let pass = fit.slope >= cfg.slope_window.0 && fit.slope <= cfg.slope_window.1;
    Ok(ProjectionReport {
        bump: cfg.bump,
        points,
        fit,
        slope_window: cfg.slope_window,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalitySuiteReport {
    pub side_n: usize,
    pub rules: Vec<localset::LocalityReport>,
    pub unions: Vec<localset::CcupReport>,
    pub harmonicity: Vec<localset::HarmonicityReport>,
    pub pass: bool,
}

/// Locality of each configured rule, the union property of each pair and
/// conditional-mean harmonicity.
pub fn verify_locality(cfg: &LocalityConfig, seed: u64) -> Result<LocalitySuiteReport> {
    let d = build_rhombus_domain(cfg.side_n, 0.5)?;
    let mut rules = Vec::new();
    for (k, name) in cfg.rules.iter().enumerate() {
        let rule = SetRule::parse(name)?;
        rules.push(localset::test_locality(
            &rule,
            &d,
            cfg.samples,
            rng::derive(seed, k as u64),
        )?);
    }
    let mut unions = Vec::new();
    for (k, (a, b)) in cfg.unions.iter().enumerate() {
        let (r1, r2) = (SetRule::parse(a)?, SetRule::parse(b)?);
        let s = rng::derive(seed, 0x100 + k as u64);
        let aux = (rng::derive(s, 1), rng::derive(s, 2));
        unions.push(localset::ccup_union(&r1, &r2, &d, cfg.samples, s, Some(aux))?.1);
    }
    let mut harmonicity = Vec::new();
    for (k, name) in cfg.harmonicity.iter().enumerate() {
        let rule = SetRule::parse(name)?;
        let s = rng::derive(seed, 0x200 + k as u64);
        harmonicity.push(localset::conditional_mean_harmonicity(
            &rule,
            &d,
            cfg.harmonicity_samples,
            s,
        )?);
    }
    let pass = rules.iter().all(|r| r.pass)
        && unions.iter().all(|u| u.pass)
        && harmonicity.iter().all(|h| h.pass);
    Ok(LocalitySuiteReport {
        side_n: cfg.side_n,
        rules,
        unions,
        harmonicity,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapAtDistance {
    pub distance: f64,
    pub probes: usize,
    pub median_abs_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightGapReport {
    pub side_n: usize,
    pub samples: usize,
    pub failed_seeds: Vec<(u64, String)>,
    pub gaps: Vec<GapAtDistance>,
    pub nonincreasing: bool,
    pub pass: bool,
}

/// `|h_T(v) − F_T(v)|` at probes whose distance to the interface rounds to
/// each configured distance, pooled over samples.
pub fn verify_height_gap(cfg: &HeightGapConfig, lambda: f64, seed: u64) -> Result<HeightGapReport> {
    let d = build_rhombus_domain(cfg.side_n, 0.5)?;
    let dgff = Dgff::new(&d)?;
    let bd = d.arc_boundary_data(lambda);
    let probes: Vec<usize> = d
        .interior_vertices()
        .into_iter()
        .filter(|&v| d.distance_to_boundary(d.position(v)) > cfg.boundary_margin)
        .collect();
    let per_seed: Vec<(u64, Result<Vec<Vec<f64>>>)> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|k| {
            let s = seed + k;
            let r = (|| {
                let f = dgff.sample(&d, &bd, s, 0)?;
                let path = trace_interface(&d, &f)?;
                let gap = height_gap_field(&d, &f, &path)?;
                let mut buckets = vec![Vec::new(); cfg.distances.len()];
                for &v in &probes {
                    if path.is_left(v) || path.is_right(v) {
                        continue;
                    }
                    let dist = path.distance(d.position(v));
                    if let Some(j) = cfg.distances.iter().position(|&t| (dist - t).abs() < 0.5) {
                        buckets[j].push(gap[v].abs());
                    }
                }
                Ok(buckets)
            })();
            (s, r)
        })
        .collect();
    let mut failed_seeds = Vec::new();
    let mut pooled = vec![Vec::new(); cfg.distances.len()];
    for (s, r) in per_seed {
        match r {
            Ok(b) => b
                .into_iter()
                .enumerate()
                .for_each(|(j, v)| pooled[j].extend(v)),
            Err(e) => failed_seeds.push((s, e.to_string())),
        }
    }
    let gaps: Vec<GapAtDistance> = cfg
        .distances
        .iter()
        .zip(&pooled)
        .map(|(&distance, v)| GapAtDistance {
            distance,
            probes: v.len(),
            median_abs_gap: stats::median(v),
        })
        .collect();
    let nonincreasing = gaps.iter().all(|g| g.probes > 0)
        && gaps
            .windows(2)
            .all(|w| w[1].median_abs_gap <= w[0].median_abs_gap);
    let pass = nonincreasing && failed_seeds.len() * 100 <= cfg.samples;
    Ok(HeightGapReport {
        side_n: cfg.side_n,
        samples: cfg.samples,
        failed_seeds,
        gaps,
        nonincreasing,
        pass,
    })
}
