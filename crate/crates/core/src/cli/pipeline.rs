//! Sample → trace → map → extract, per seed, and the ensemble statistics of
//! the extracted driving functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::output::{driving_csv, ExperimentDir};
use crate::error::{Error, Result};
use crate::field::{add_bump, Dgff, FieldSample};
use crate::interface::{trace_interface, InterfacePath};
use crate::lattice::TgDomain;
use crate::loewner::{map_domain_to_h, ConformalMap, DrivingFunction, SlitZipper};
use crate::stats::{self, KsResult, LinearFit};
use crate::C64;

/// Window for the slope of `Var(W_t)` against `t`.
pub const SLOPE_WINDOW: (f64, f64) = (3.5, 4.5);
/// Smallest acceptable KS p-value for the pooled increments.
pub const KS_LEVEL: f64 = 0.01;
/// Largest tolerated fraction of failed seeds.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Everything shared by the runs of one experiment.
pub struct Pipeline {
    config: ExperimentConfig,
    domain: TgDomain,
    dgff: Dgff,
    boundary: Vec<f64>,
    psi: Option<Vec<f64>>,
    map: ConformalMap,
}

/// One completed run.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub field: FieldSample,
    pub path: InterfacePath,
    /// Image of the dual path in H, cut once the capacity passes `t_max`.
    pub image: Vec<C64>,
    pub driving: DrivingFunction,
}

impl Pipeline {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let domain = config.domain.build()?;
        let dgff = Dgff::new(&domain)?;
        let boundary = domain.arc_boundary_data(config.lambda);
        let psi = config.bump.map(|b| b.values(&domain));
        let map = map_domain_to_h(&domain, &config.zipper.map_options())?;
        Ok(Self {
            config: config.clone(),
            domain,
            dgff,
            boundary,
            psi,
            map,
        })
    }

    pub fn domain(&self) -> &TgDomain {
        &self.domain
    }

    pub fn map(&self) -> &ConformalMap {
        &self.map
    }

    /// DGFF with `±λ` arcs from stream 0 of `seed`, plus the bump if any.
    pub fn field(&self, seed: u64) -> Result<FieldSample> {
        let f = self.dgff.sample(&self.domain, &self.boundary, seed, 0)?;
        match &self.psi {
            Some(psi) => add_bump(&self.domain, &f, psi),
            None => Ok(f),
        }
    }

    pub fn trace(&self, seed: u64) -> Result<(FieldSample, InterfacePath)> {
        let f = self.field(seed)?;
        let p = trace_interface(&self.domain, &f)?;
        Ok((f, p))
    }

    /// Maps the dual path into H and runs the slit zipper until the
    /// capacity reaches `t_max`. `x∂` goes to 0 exactly; `y∂` is never used.
    pub fn extract(&self, path: &InterfacePath) -> Result<(Vec<C64>, DrivingFunction)> {
        let z = &self.config.zipper;
        let mut zipper = SlitZipper::new(C64::new(0.0, 0.0), z.max_increment)?;
        let mut image = vec![C64::new(0.0, 0.0)];
        let last = path.dual_points.len().saturating_sub(1);
        for &p in &path.dual_points[1..last] {
            if zipper.capacity() >= z.t_max {
                break;
            }
            let w = self.map.eval(p);
            zipper.push(w)?;
            image.push(w);
        }
        if zipper.capacity() < z.t_max {
            return Err(Error::Refine(format!(
                "path capacity {:.4} stays below t_max = {}",
                zipper.capacity(),
                z.t_max
            )));
        }
        Ok((image, zipper.driving()))
    }

    pub fn run_seed(&self, seed: u64) -> Result<SeedRun> {
        let (field, path) = self.trace(seed)?;
        let (image, driving) = self.extract(&path)?;
        Ok(SeedRun {
            seed,
            field,
            path,
            image,
            driving,
        })
    }

    /// Seeds `seed, seed + 1, …` of the ensemble.
    pub fn seeds(&self) -> Vec<u64> {
        let e = &self.config.ensemble;
        (0..e.size as u64).map(|k| e.seed + k).collect()
    }

    /// Runs every seed in parallel; failures are kept per seed.
    pub fn run_all(&self) -> Vec<(u64, Result<DrivingFunction>)> {
        self.seeds()
            .into_par_iter()
            .map(|s| (s, self.run_seed(s).map(|r| r.driving)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub lambda: f64,
    pub side_n: usize,
    pub seeds: usize,
    pub failed_seeds: Vec<(u64, String)>,
    pub failure_rate: f64,
    pub times: Vec<f64>,
    /// `Var(W_t)` across runs at each readout time.
    pub variances: Vec<f64>,
    pub aggregate: Option<Aggregate>,
    pub pass: Option<bool>,
}

/// Ensemble tests; absent for a single run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Fit of `Var(W_t)` over `t ∈ [t_min, t_max]`.
    pub fit: LinearFit,
    pub slope_window: (f64, f64),
    pub slope_in_window: bool,
    /// KS test of the increments over consecutive readout intervals, each
    /// interval standardized by its own sample mean and deviation.
    pub increment_ks: KsResult,
    /// Correlation of consecutive standardized increments, and its z-score.
    pub lag_correlation: f64,
    pub lag_z: f64,
}

/// Statistics of an ensemble of driving functions read on `times`.
pub fn summarize(
    config: &ExperimentConfig,
    runs: &[(u64, Result<DrivingFunction>)],
) -> PipelineReport {
    let z = &config.zipper;
    let times = z.grid();
    let mut failed_seeds = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (seed, r) in runs {
        match r {
            Ok(w) => rows.push(times.iter().map(|&t| w.eval(t)).collect()),
            Err(e) => failed_seeds.push((*seed, e.to_string())),
        }
    }
    let column = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let variances: Vec<f64> = (0..times.len())
        .map(|j| stats::variance(&column(j)))
        .collect();
    let failure_rate = failed_seeds.len() as f64 / runs.len().max(1) as f64;
    let aggregate = (rows.len() >= 3).then(|| {
        let (x, y): (Vec<f64>, Vec<f64>) = times
            .iter()
            .zip(&variances)
            .filter(|(t, _)| **t >= z.t_min - 1e-12 && **t <= z.t_max + 1e-12)
            .map(|(t, v)| (*t, *v))
            .unzip();
        let fit = stats::ols(&x, &y);
        // increments over [0, t1], [t1, t2], …
        let mut standardized: Vec<Vec<f64>> = Vec::new();
        for j in 0..times.len() {
            let inc: Vec<f64> = rows
                .iter()
                .map(|r| r[j] - if j == 0 { 0.0 } else { r[j - 1] })
                .collect();
            let m = stats::mean_se(&inc).mean;
            let sd = stats::variance(&inc).sqrt();
            standardized.push(
                inc.iter()
                    .map(|v| if sd > 0.0 { (v - m) / sd } else { 0.0 })
                    .collect(),
            );
        }
        let pooled: Vec<f64> = standardized.iter().flatten().copied().collect();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for j in 1..standardized.len() {
            a.extend_from_slice(&standardized[j - 1]);
            b.extend_from_slice(&standardized[j]);
        }
        let lag_correlation = stats::correlation(&a, &b);
        Aggregate {
            fit,
            slope_window: SLOPE_WINDOW,
            slope_in_window: fit.slope >= SLOPE_WINDOW.0 && fit.slope <= SLOPE_WINDOW.1,
            increment_ks: stats::ks_standard_normal(&pooled),
            lag_correlation,
            lag_z: lag_correlation * (a.len() as f64).sqrt(),
        }
    });
    let pass = aggregate.as_ref().map(|a| {
        a.slope_in_window && a.increment_ks.p_value > KS_LEVEL && failure_rate <= MAX_FAILURE_RATE
    });
    PipelineReport {
        lambda: config.lambda,
        side_n: config.domain.side_n,
        seeds: runs.len(),
        failed_seeds,
        failure_rate,
        times,
        variances,
        aggregate,
        pass,
    }
}

/// Runs the ensemble, writes `runs/driving_<seed>.csv` and `report.json`.
pub fn run_interface_pipeline(
    config: &ExperimentConfig,
    out: &ExperimentDir,
) -> Result<PipelineReport> {
    let pipeline = Pipeline::new(config)?;
    let runs = pipeline.run_all();
    for (seed, r) in &runs {
        if let Ok(w) = r {
            out.write_run(&format!("driving_{seed}.csv"), &driving_csv(w))?;
        }
    }
    let report = summarize(config, &runs);
    out.write_report("pipeline", report.pass, &report)?;
    Ok(report)
}
