//! Command-line surface of the `sle4lab` binary.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use super::config::{BumpSpec, ExperimentConfig};
use super::output::{driving_csv, field_csv, path_csv, points_csv, ExperimentDir};
use super::pipeline::{run_interface_pipeline, Pipeline};
use super::verify::{run_verifier, Verifier};
use crate::error::{Error, Result};

/// Exit status for a run whose checks passed.
pub const EXIT_PASS: i32 = 0;
/// Exit status for a completed run whose checks failed.
pub const EXIT_FAIL: i32 = 1;
/// Exit status for configuration or runtime errors.
pub const EXIT_ERROR: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sle4lab", version = crate::VERSION, about = "DGFF contour lines and SLE(4) checks on triangular-lattice domains")]
pub struct Cli {
    /// TOML experiment configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; overrides `ensemble.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment directory; overrides the config and `SLE4LAB_OUT`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; overrides the config and `SLE4LAB_THREADS`.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Radial bump `cx,cy,r,height` added to each field before tracing.
    #[arg(long, global = true, value_name = "CX,CY,R,HEIGHT")]
    pub add_bump: Option<BumpSpec>,
    /// Treat a failing check as the expected outcome and exit 0 on it.
    #[arg(long, global = true)]
    pub expected_fail: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample one field and write `runs/field_<seed>.csv`.
    Sample,
    /// Sample and trace one interface; writes `runs/path_<seed>.csv`.
    Trace,
    /// Trace and map the interface into H; writes `runs/image_<seed>.csv`.
    Map,
    /// Full single-seed chain; writes `runs/driving_<seed>.csv`.
    Extract,
    /// Run one verifier and write its report.
    Verify {
        #[arg(value_enum)]
        which: Verifier,
    },
    /// Ensemble pipeline with aggregate statistics.
    Pipeline,
}

impl Cli {
    /// Config file, then environment, then flags.
    pub fn resolve_config(&self, env: impl Fn(&str) -> Option<String>) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        c.apply_env(env)?;
        if let Some(s) = self.seed {
            c.ensemble.seed = s;
        }
        if let Some(o) = &self.out {
            c.output.dir = o.clone();
        }
        if let Some(t) = self.threads {
            c.output.threads = Some(t);
        }
        if let Some(b) = self.add_bump {
            c.bump = Some(b);
        }
        if c.output.dir.as_os_str().is_empty() {
            c.output.dir = PathBuf::from("out").join(&c.name);
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Serialize)]
struct SingleRun<'a> {
    command: &'a str,
    seed: u64,
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    path_length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    capacity: Option<f64>,
}

/// Runs the parsed command; returns the process exit code.
pub fn run(cli: &Cli, config: &ExperimentConfig) -> Result<i32> {
    let out = ExperimentDir::create(&config.output.dir, config)?;
    let seed = config.ensemble.seed;
    let verdict = |pass: bool| {
        if pass != cli.expected_fail {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    };
    let single = |command: &str,
                  file: String,
                  path_length: Option<usize>,
                  capacity: Option<f64>|
     -> Result<i32> {
        let r = SingleRun {
            command,
            seed,
            file,
            path_length,
            capacity,
        };
        out.write_report(command, None, &r)?;
        Ok(EXIT_PASS)
    };
    match &cli.command {
        Command::Sample => {
            let p = Pipeline::new(config)?;
            let f = p.field(seed)?;
            let name = format!("field_{seed}.csv");
            out.write_run(&name, &field_csv(p.domain(), &f.values))?;
            let desc =
                serde_json::to_string_pretty(&p.domain().describe()).expect("domain serializes");
            std::fs::write(out.root().join("domain.json"), desc + "\n")?;
            single("sample", name, None, None)
        }
        Command::Trace => {
            let p = Pipeline::new(config)?;
            let (_, path) = p.trace(seed)?;
            let name = format!("path_{seed}.csv");
            out.write_run(&name, &path_csv(&path))?;
            single("trace", name, Some(path.len()), None)
        }
        Command::Map => {
            let p = Pipeline::new(config)?;
            let (_, path) = p.trace(seed)?;
            let (image, w) = p.extract(&path)?;
            let name = format!("image_{seed}.csv");
            out.write_run(&name, &points_csv(&image))?;
            single("map", name, Some(image.len()), Some(w.horizon()))
        }
        Command::Extract => {
            let p = Pipeline::new(config)?;
            let r = p.run_seed(seed)?;
            let name = format!("driving_{seed}.csv");
            out.write_run(&name, &driving_csv(&r.driving))?;
            single(
                "extract",
                name,
                Some(r.image.len()),
                Some(r.driving.horizon()),
            )
        }
        Command::Pipeline => {
            let report = run_interface_pipeline(config, &out)?;
            let ok = report.failure_rate <= super::pipeline::MAX_FAILURE_RATE
                && report.pass != Some(false);
            Ok(verdict(ok))
        }
        Command::Verify { which } => {
            let o = run_verifier(config, *which)?;
            out.write_report(which.name(), Some(o.pass), &o.report)?;
            Ok(verdict(o.pass))
        }
    }
}

/// Parses, configures the worker pool and runs; errors become `EXIT_ERROR`.
pub fn main_with(cli: Cli) -> i32 {
    let result = cli
        .resolve_config(|k| std::env::var(k).ok())
        .and_then(|config| {
            if let Some(t) = config.output.threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            }
            run(&cli, &config)
        });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("sle4lab: {e}");
            EXIT_ERROR
        }
    }
}
