//! Experiment configuration: a TOML file with one table per concern.
//!
//! Missing keys take their defaults, unknown keys are rejected. Only the
//! output directory and the thread count may be overridden from the
//! environment (`SLE4LAB_OUT`, `SLE4LAB_THREADS`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{
    build_hexagon_domain, build_rhombus_with, fem_weight, EndpointConvention, TgDomain,
};
use crate::loewner::conformal::{MapOptions, Normalization};
use crate::C64;

pub const ENV_OUT: &str = "SLE4LAB_OUT";
pub const ENV_THREADS: &str = "SLE4LAB_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Boundary height; the arcs carry `±lambda`.
    pub lambda: f64,
    pub domain: DomainSpec,
    pub ensemble: EnsembleConfig,
    pub zipper: ZipperConfig,
    pub output: OutputConfig,
    /// Radial bump added to every field before tracing.
    pub bump: Option<BumpSpec>,
    pub verify: VerifyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            lambda: crate::lambda_critical(),
            domain: DomainSpec::default(),
            ensemble: EnsembleConfig::default(),
            zipper: ZipperConfig::default(),
            output: OutputConfig::default(),
            bump: None,
            verify: VerifyConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    #[default]
    Rhombus,
    Hexagon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSpec {
    pub shape: Shape,
    pub side_n: usize,
    pub split_fraction: f64,
    pub convention: EndpointConvention,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            shape: Shape::Rhombus,
            side_n: 60,
            split_fraction: 0.5,
            convention: EndpointConvention::Clockwise,
        }
    }
}

impl DomainSpec {
    pub fn build(&self) -> Result<TgDomain> {
        match self.shape {
            Shape::Rhombus => build_rhombus_with(
                self.side_n,
                self.split_fraction,
                self.convention,
                fem_weight(),
            ),
            Shape::Hexagon => {
                let d = build_hexagon_domain(self.side_n, self.split_fraction)?;
                Ok(match self.convention {
                    EndpointConvention::Clockwise => d,
                    EndpointConvention::Counterclockwise => d.with_swapped_arcs(),
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Number of seeds; run `k` uses seed `seed + k`.
    pub size: usize,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { size: 500, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZipperConfig {
    /// Boundary points per lattice edge for the domain map.
    pub densify: usize,
    pub normalization: Normalization,
    /// Largest capacity step of the slit zipper.
    pub max_increment: f64,
    /// The driving function is read on `t_step, 2 t_step, …, t_max`.
    pub t_step: f64,
    pub t_max: f64,
    /// Lower end of the variance regression window.
    pub t_min: f64,
}

impl Default for ZipperConfig {
    fn default() -> Self {
        Self {
            densify: 4,
            normalization: Normalization::ArcMidpoint,
            max_increment: 1e-3,
            t_step: 0.05,
            t_max: 0.5,
            t_min: 0.05,
        }
    }
}

impl ZipperConfig {
    pub fn map_options(&self) -> MapOptions {
        MapOptions {
            densify: self.densify,
            normalization: self.normalization,
        }
    }

    /// Readout times `t_step, 2 t_step, …` up to `t_max`.
    pub fn grid(&self) -> Vec<f64> {
        let n = (self.t_max / self.t_step + 1e-9).floor() as usize;
        (1..=n).map(|k| k as f64 * self.t_step).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Worker threads; `None` lets the pool decide.
    pub threads: Option<usize>,
}

/// `ψ = height` profile of a smooth radial bump of the given radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub height: f64,
}

impl std::str::FromStr for BumpSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bump `{s}`: {e}")))?;
        match parts[..] {
            [cx, cy, r, height] => Ok(Self { cx, cy, r, height }),
            _ => Err(Error::Config(format!("bump `{s}` needs cx,cy,r,height"))),
        }
    }
}

impl BumpSpec {
    pub fn center(&self) -> C64 {
        C64::new(self.cx, self.cy)
    }

    /// Vertex values of the bump; zero at and beyond distance `r`.
    pub fn values(&self, domain: &TgDomain) -> Vec<f64> {
        use crate::field::{Bump, SmoothFn};
        let b = Bump {
            center: self.center(),
            radius: self.r,
            height: self.height,
        };
        domain.positions().iter().map(|&z| b.value(z)).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub martingale: MartingaleConfig,
    pub qv: QvConfig,
    pub energy_clock: EnergyClockConfig,
    pub coupling: CouplingSection,
    pub projection: ProjectionConfig,
    pub locality: LocalityConfig,
    pub height_gap: HeightGapConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MartingaleConfig {
    pub runs: usize,
    pub dt: f64,
    pub point: (f64, f64),
    pub checkpoints: Vec<f64>,
}

impl Default for MartingaleConfig {
    fn default() -> Self {
        Self {
            runs: 10_000,
            dt: 1e-4,
            point: (0.0, 1.0),
            checkpoints: vec![0.0, 0.1, 0.2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QvConfig {
    pub runs: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Point pairs `[[x.re, x.im, y.re, y.im], …]`.
    pub pairs: Vec<[f64; 4]>,
}

impl Default for QvConfig {
    fn default() -> Self {
        Self {
            runs: 10_000,
            dt: 1e-3,
            horizon: 0.5,
            pairs: vec![[0.0, 1.0, 0.0, 1.0], [0.0, 1.0, 1.0, 1.0]],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyClockConfig {
    pub runs: usize,
    pub dt: f64,
    pub horizon: f64,
    pub clock_level: f64,
    /// Point masses `[[re, im, weight], …]`.
    pub masses: Vec<[f64; 3]>,
    /// Radius of the disc replacing each point for its self-energy.
    pub self_radius: f64,
}

impl Default for EnergyClockConfig {
    fn default() -> Self {
        Self {
            runs: 10_000,
            dt: 1e-3,
            // at 0.5 the mass at i is swallowed in about 3% of runs
            horizon: 0.25,
            clock_level: 0.05,
            masses: vec![[0.0, 1.0, 1.0], [0.0, 2.0, 1.0]],
            self_radius: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSection {
    pub seeds: usize,
    pub half_width: f64,
    pub height: f64,
    pub mesh: f64,
    pub horizon: f64,
    pub dt: f64,
    pub method: crate::continuum::CouplingMethod,
    pub image_box: (f64, f64, f64),
    /// Unit-height bumps `[[cx, cy, r], …]` paired with the field.
    pub bumps: Vec<[f64; 3]>,
}

impl Default for CouplingSection {
    fn default() -> Self {
        let c = crate::continuum::CouplingConfig::default();
        Self {
            seeds: 2000,
            half_width: c.half_width,
            height: c.height,
            mesh: c.mesh,
            horizon: c.horizon,
            dt: c.dt,
            method: c.method,
            image_box: c.image_box,
            bumps: crate::continuum::default_coupling_bumps()
                .iter()
                .map(|b| [b.center.re, b.center.im, b.radius])
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub sides: Vec<usize>,
    /// Bump in the half-plane: `[cx, cy, r]`.
    pub bump: [f64; 3],
    pub densify: usize,
    pub slope_window: (f64, f64),
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            sides: vec![10, 20, 40, 80],
            bump: [0.0, 1.0, 0.5],
            densify: 4,
            slope_window: (-1.35, -0.65),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalityConfig {
    pub side_n: usize,
    pub samples: usize,
    /// Rule names, e.g. `fixed:7,12`, `negative`, `cluster-minus`,
    /// `random-arc`, `exploration:5`.
    pub rules: Vec<String>,
    /// Pairs of rule names tested for the union property.
    pub unions: Vec<(String, String)>,
    /// Rules checked for conditional-mean harmonicity.
    pub harmonicity: Vec<String>,
    pub harmonicity_samples: usize,
}

impl Default for LocalityConfig {
    fn default() -> Self {
        Self {
            side_n: 4,
            samples: 100_000,
            rules: vec![
                "fixed:7,12".into(),
                "cluster-minus".into(),
                "exploration:6".into(),
            ],
            unions: vec![("cluster-minus".into(), "random-arc".into())],
            harmonicity: vec!["cluster-minus".into()],
            harmonicity_samples: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeightGapConfig {
    pub side_n: usize,
    pub samples: usize,
    pub distances: Vec<f64>,
    /// Probes closer than this to the domain boundary are skipped.
    pub boundary_margin: f64,
}

impl Default for HeightGapConfig {
    fn default() -> Self {
        Self {
            side_n: 80,
            samples: 200,
            distances: vec![5.0, 10.0, 20.0, 30.0],
            boundary_margin: 2.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `SLE4LAB_OUT` and `SLE4LAB_THREADS` from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(out) = lookup(ENV_OUT) {
            self.output.dir = PathBuf::from(out);
        }
        if let Some(t) = lookup(ENV_THREADS) {
            let n = t
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_THREADS}=`{t}` is not a count")))?;
            self.output.threads = Some(n);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if self.ensemble.size < 1 {
            return bad("ensemble size must be at least 1");
        }
        if !(self.domain.split_fraction > 0.0 && self.domain.split_fraction < 1.0) {
            return bad("split_fraction must lie in (0, 1)");
        }
        let z = &self.zipper;
        if !(z.max_increment > 0.0
            && z.t_step > 0.0
            && z.t_max > 0.0
            && z.t_min > 0.0
            && z.t_min < z.t_max)
        {
            return bad("zipper tolerances must be positive with t_min < t_max");
        }
        if z.densify < 2 || z.densify % 2 != 0 {
            return bad("densify must be even and at least 2");
        }
        if self.output.threads == Some(0) {
            return bad("thread count must be positive");
        }
        if let Some(b) = &self.bump {
            if !(b.r > 0.0) {
                return bad("bump radius must be positive");
            }
        }
        let v = &self.verify;
        for (runs, dt) in [
            (v.martingale.runs, v.martingale.dt),
            (v.qv.runs, v.qv.dt),
            (v.energy_clock.runs, v.energy_clock.dt),
        ] {
            if runs < 1 || !(dt > 0.0) {
                return bad("verifier runs must be at least 1 and steps positive");
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml("name = \"x\"\n[domain]\nside_n = 8\n").unwrap();
        assert_eq!(c.domain.side_n, 8);
        assert_eq!(c.domain.split_fraction, 0.5);
        assert_eq!(c.lambda, crate::lambda_critical());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml("colour = 3\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = ExperimentConfig {
            lambda: -1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.lambda = 1.0;
        c.ensemble.size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn env_overrides_only_output_and_threads() {
        let mut c = ExperimentConfig::default();
        c.apply_env(|k| match k {
            ENV_OUT => Some("/tmp/o".into()),
            ENV_THREADS => Some("3".into()),
            _ => Some("junk".into()),
        })
        .unwrap();
        assert_eq!(c.output.dir, PathBuf::from("/tmp/o"));
        assert_eq!(c.output.threads, Some(3));
        assert!(c
            .apply_env(|k| (k == ENV_THREADS).then(|| "many".into()))
            .is_err());
    }

    #[test]
    fn bump_parses() {
        let b: BumpSpec = "1, 2.5,0.5,-1".parse().unwrap();
        assert_eq!(
            b,
            BumpSpec {
                cx: 1.0,
                cy: 2.5,
                r: 0.5,
                height: -1.0
            }
        );
        assert!("1,2".parse::<BumpSpec>().is_err());
    }
}
