//! Experiment directory layout: `runs/*.csv`, `report.json`, `config.snapshot`.
//!
//! Every CSV starts with one `#` line naming the version and config hash;
//! the rest of the file depends only on the config and the seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::interface::InterfacePath;
use crate::lattice::TgDomain;
use crate::loewner::DrivingFunction;

pub struct ExperimentDir {
    root: PathBuf,
    hash: String,
}

impl ExperimentDir {
    /// Creates `dir/runs` and writes the config snapshot.
    pub fn create(dir: &Path, config: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(dir.join("runs"))?;
        fs::write(dir.join("config.snapshot"), config.to_toml())?;
        Ok(Self {
            root: dir.to_path_buf(),
            hash: config.hash(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn header(&self) -> String {
        format!("# sle4lab {} config {}\n", crate::VERSION, self.hash)
    }

    pub fn write_run(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.root.join("runs").join(name);
        fs::write(&path, format!("{}{}", self.header(), body))?;
        Ok(path)
    }

    /// `report.json` wrapping `body` with the version and config hash.
    pub fn write_report<T: Serialize>(
        &self,
        kind: &str,
        pass: Option<bool>,
        body: &T,
    ) -> Result<PathBuf> {
        let doc = serde_json::json!({
            "version": crate::VERSION,
            "config_hash": self.hash,
            "kind": kind,
            "pass": pass,
            "report": body,
        });
        let path = self.root.join("report.json");
        fs::write(
            &path,
            serde_json::to_string_pretty(&doc).expect("report serializes") + "\n",
        )?;
        Ok(path)
    }
}

/// `t,w` rows.
pub fn driving_csv(w: &DrivingFunction) -> String {
    let mut s = String::from("t,w\n");
    for (t, v) in w.times().iter().zip(w.values()) {
        let _ = writeln!(s, "{t},{v}");
    }
    s
}

/// `k,x,y` rows of the dual path in domain coordinates.
pub fn path_csv(path: &InterfacePath) -> String {
    points_csv(&path.dual_points)
}

pub fn points_csv(points: &[crate::C64]) -> String {
    let mut s = String::from("k,x,y\n");
    for (k, z) in points.iter().enumerate() {
        let _ = writeln!(s, "{k},{},{}", z.re, z.im);
    }
    s
}

/// `id,x,y,value` rows, one per vertex.
pub fn field_csv(domain: &TgDomain, values: &[f64]) -> String {
    let mut s = String::from("id,x,y,value\n");
    for (v, z) in domain.positions().iter().enumerate() {
        let _ = writeln!(s, "{v},{},{},{}", z.re, z.im, values[v]);
    }
    s
}
