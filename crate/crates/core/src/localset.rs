//! Discrete local sets: exact Gaussian conditioning, Monte Carlo locality
//! tests by residualization, conditionally independent unions, and the
//! harmonicity of conditional means off a local set.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Dgff, FieldSample, RestrictedSystem};
use crate::interface::{level_signs, Exploration};
use crate::lattice::TgDomain;
use crate::rng;
use crate::stats;

/// Independence threshold in standard errors.
pub const LOCALITY_Z: f64 = 4.0;
/// Minimum stratum size for the harmonicity check.
pub const MIN_STRATUM_HITS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arc {
    Plus,
    Minus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RuleKind {
    /// A fixed vertex set.
    Fixed(Vec<usize>),
    /// `{v : h(v) < 0}`.
    Negative,
    /// Interior vertices read while exploring the sign cluster attached to an
    /// arc (negative from the minus arc, positive from the plus arc).
    BoundaryCluster(Arc),
    /// A boundary cluster on an arc chosen by an auxiliary fair coin.
    RandomArc,
    /// Interior vertices read by the interface tracer in its first steps.
    Exploration(usize),
}

/// Random vertex set as a function of the field (and an auxiliary seed for
/// randomized rules).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetRule {
    pub name: String,
    pub kind: RuleKind,
}

/// Realized set with the vertices read to decide it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleOutput {
    pub set: Vec<usize>,
    pub reads: Option<Vec<usize>>,
}

impl SetRule {
    pub fn fixed(set: Vec<usize>) -> Self {
        let mut set = set;
        set.sort_unstable();
        set.dedup();
        Self {
            name: "fixed".into(),
            kind: RuleKind::Fixed(set),
        }
    }

    pub fn negative() -> Self {
        Self {
            name: "negative".into(),
            kind: RuleKind::Negative,
        }
    }

    pub fn boundary_cluster(arc: Arc) -> Self {
        let name = match arc {
            Arc::Plus => "cluster-plus",
            Arc::Minus => "cluster-minus",
        };
        Self {
            name: name.into(),
            kind: RuleKind::BoundaryCluster(arc),
        }
    }

    pub fn random_arc() -> Self {
        Self {
            name: "random-arc".into(),
            kind: RuleKind::RandomArc,
        }
    }

    pub fn exploration(steps: usize) -> Self {
        Self {
            name: format!("exploration:{steps}"),
            kind: RuleKind::Exploration(steps),
        }
    }

    /// `fixed:1,2,3`, `negative`, `cluster-minus`, `cluster-plus`,
    /// `random-arc`, `exploration:T`.
    pub fn parse(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let bad = || Error::Config(format!("unknown set rule '{s}'"));
        match (head, arg) {
            ("fixed", a) => {
                let set = a
                    .unwrap_or("")
                    .split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self::fixed(set))
            }
            ("negative", None) => Ok(Self::negative()),
            ("cluster-minus", None) => Ok(Self::boundary_cluster(Arc::Minus)),
            ("cluster-plus", None) => Ok(Self::boundary_cluster(Arc::Plus)),
            ("random-arc", None) => Ok(Self::random_arc()),
            ("exploration", Some(a)) => Ok(Self::exploration(a.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self.kind, RuleKind::RandomArc)
    }

    pub fn evaluate(
        &self,
        domain: &TgDomain,
        field: &FieldSample,
        aux: Option<u64>,
    ) -> Result<RuleOutput> {
        match &self.kind {
            RuleKind::Fixed(set) => {
                if let Some(&v) = set.iter().find(|&&v| v >= domain.num_vertices()) {
                    return Err(Error::Input(format!("fixed set names missing vertex {v}")));
                }
                Ok(RuleOutput {
                    set: set.clone(),
                    reads: Some(Vec::new()),
                })
            }
            RuleKind::Negative => Ok(RuleOutput {
                set: domain
                    .interior_vertices()
                    .into_iter()
                    .filter(|&v| field.values[v] < 0.0)
                    .collect(),
                reads: None,
            }),
            RuleKind::BoundaryCluster(arc) => Ok(boundary_cluster(domain, field, *arc)),
            RuleKind::RandomArc => {
                let seed = aux.ok_or_else(|| Error::SeedRequired(self.name.clone()))?;
                let arc = if rng::stream(seed, 0).random::<bool>() {
                    Arc::Plus
                } else {
                    Arc::Minus
                };
                Ok(boundary_cluster(domain, field, arc))
            }
            RuleKind::Exploration(steps) => {
                let mut plus = level_signs(domain, field, 0.0)?;
                let mut ex = Exploration::new(domain);
                for _ in 0..*steps {
                    if !ex.step(&mut plus)? {
                        break;
                    }
                }
                let mut set: Vec<usize> = ex
                    .reads()
                    .iter()
                    .copied()
                    .filter(|&v| domain.is_interior(v))
                    .collect();
                set.sort_unstable();
                set.dedup();
                Ok(RuleOutput {
                    set,
                    reads: Some(ex.reads().to_vec()),
                })
            }
        }
    }
}

/// Breadth-first exploration from an arc through interior vertices of the
/// arc's sign; every interior vertex looked at joins the set.
fn boundary_cluster(domain: &TgDomain, field: &FieldSample, arc: Arc) -> RuleOutput {
    let seeds: Vec<usize> = match arc {
        Arc::Plus => domain.arc_plus().to_vec(),
        Arc::Minus => domain.arc_minus(),
    };
    let same_sign = |v: usize| match arc {
        Arc::Plus => field.values[v] > 0.0,
        Arc::Minus => field.values[v] < 0.0,
    };
    let mut read = BTreeSet::new();
    let mut order = Vec::new();
    let mut queue: VecDeque<usize> = seeds.into_iter().collect();
    while let Some(u) = queue.pop_front() {
        for &w in domain.neighbors(u) {
            if domain.is_interior(w) && read.insert(w) {
                order.push(w);
                if same_sign(w) {
                    queue.push_back(w);
                }
            }
        }
    }
    RuleOutput {
        set: read.into_iter().collect(),
        reads: Some(order),
    }
}

/// Law of the field given its values on `C ∪ ∂D`.
#[derive(Clone, Debug)]
pub struct ConditionalLaw {
    pub mean: Vec<f64>,
    system: Option<RestrictedSystem>,
}

impl ConditionalLaw {
    pub fn covariance(&self, u: usize, v: usize) -> f64 {
        self.system
            .as_ref()
            .and_then(|s| s.green(u, v))
            .unwrap_or(0.0)
    }

    /// Vertices that remain random.
    pub fn free_vertices(&self) -> &[usize] {
        self.system.as_ref().map(|s| s.unknowns()).unwrap_or(&[])
    }
}

pub fn condition_on_set(
    domain: &TgDomain,
    boundary_data: &[f64],
    set: &[usize],
    values_on_set: &[f64],
) -> Result<ConditionalLaw> {
    if set.len() != values_on_set.len() {
        return Err(Error::Input(format!(
            "{} values for {} conditioned vertices",
            values_on_set.len(),
            set.len()
        )));
    }
    let n = domain.num_vertices();
    let cycle = domain.boundary_cycle();
    if boundary_data.len() != cycle.len() {
        return Err(Error::Input(
            "boundary data does not match the boundary".into(),
        ));
    }
    let mut fixed = vec![false; n];
    let mut mean = vec![0.0; n];
    for (&v, &b) in cycle.iter().zip(boundary_data) {
        mean[v] = b;
    }
    for (&v, &x) in set.iter().zip(values_on_set) {
        if v >= n || !domain.is_interior(v) {
            return Err(Error::Input(format!(
                "conditioned vertex {v} is not interior"
            )));
        }
        fixed[v] = true;
        mean[v] = x;
    }
    if (0..n).all(|v| !domain.is_interior(v) || fixed[v]) {
        return Ok(ConditionalLaw { mean, system: None });
    }
    let system = RestrictedSystem::for_domain(domain, &fixed)?;
    system.extend(&mut mean)?;
    Ok(ConditionalLaw {
        mean,
        system: Some(system),
    })
}

/// One dependence channel between `1{A∩B=∅}` and a residual of `h_B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelTest {
    pub set: Vec<usize>,
    pub channel: String,
    pub correlation: f64,
    pub z: f64,
    /// Fraction of samples with `A ∩ B = ∅`.
    pub disjoint_rate: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub rule: String,
    pub samples: usize,
    pub tests: Vec<ChannelTest>,
    pub max_abs_z: f64,
    pub threshold: f64,
    pub warnings: Vec<String>,
    pub pass: bool,
}

/// Candidate sets `B`: all interior singletons and pairs.
fn candidate_sets(domain: &TgDomain) -> Vec<Vec<usize>> {
    let iv = domain.interior_vertices();
    let mut out: Vec<Vec<usize>> = iv.iter().map(|&v| vec![v]).collect();
    for (i, &a) in iv.iter().enumerate() {
        for &b in &iv[i + 1..] {
            out.push(vec![a, b]);
        }
    }
    out
}

/// Linear map `h ↦ h_B − E[h_B | h_{B^c}]`, stored as rows over all vertices.
fn residual_rows(domain: &TgDomain, set: &[usize]) -> Result<Vec<Vec<f64>>> {
    let n = domain.num_vertices();
    let mut fixed: Vec<bool> = vec![true; n];
    for &v in set {
        fixed[v] = false;
    }
    let system = RestrictedSystem::for_domain(domain, &fixed)?;
    let mut rows = vec![vec![0.0; n]; set.len()];
    for u in 0..n {
        if !fixed[u] {
            continue;
        }
        let mut e = vec![0.0; n];
        e[u] = 1.0;
        system.extend(&mut e)?;
        for (r, &v) in set.iter().enumerate() {
            rows[r][u] = -e[v];
        }
    }
    for (r, &v) in set.iter().enumerate() {
        rows[r][v] = 1.0;
    }
    Ok(rows)
}

/// Fields and realized sets for an ensemble.
fn draw(
    rule: &SetRule,
    domain: &TgDomain,
    boundary_data: &[f64],
    n_samples: usize,
    seed: u64,
    aux: Option<u64>,
) -> Result<Vec<(Vec<f64>, Vec<usize>)>> {
    if rule.is_randomized() && aux.is_none() {
        return Err(Error::SeedRequired(rule.name.clone()));
    }
    let dgff = Dgff::new(domain)?;
    let base = dgff.harmonic(domain, boundary_data)?;
    (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut f = base.clone();
            dgff.system()
                .add_gaussian(&mut rng::stream(seed, k as u64), &mut f.values);
            let a = rule.evaluate(domain, &f, aux.map(|s| rng::derive(s, k as u64)))?;
            Ok((f.values, a.set))
        })
        .collect()
}

/// Residualized independence tests over all singleton and pair sets `B`.
fn locality_from_samples(
    rule: &str,
    domain: &TgDomain,
    samples: &[(Vec<f64>, Vec<usize>)],
) -> Result<LocalityReport> {
    let n = samples.len();
    let mut tests = Vec::new();
    let mut warnings = Vec::new();
    for b in candidate_sets(domain) {
        let rows = residual_rows(domain, &b)?;
        let ind: Vec<f64> = samples
            .iter()
            .map(|(_, a)| {
                if b.iter().any(|v| a.binary_search(v).is_ok()) {
                    0.0
                } else {
                    1.0
                }
            })
            .collect();
        let rate = ind.iter().sum::<f64>() / n.max(1) as f64;
        let res: Vec<Vec<f64>> = rows
            .iter()
            .map(|row| {
                samples
                    .iter()
                    .map(|(h, _)| row.iter().zip(h).map(|(c, x)| c * x).sum())
                    .collect()
            })
            .collect();
        let mut channels: Vec<(String, Vec<f64>)> = Vec::new();
        for (r, v) in b.iter().enumerate() {
            channels.push((format!("r{v}"), res[r].clone()));
            channels.push((format!("r{v}^2"), res[r].iter().map(|x| x * x).collect()));
        }
        if b.len() == 2 {
            channels.push((
                "r0*r1".into(),
                res[0].iter().zip(&res[1]).map(|(x, y)| x * y).collect(),
            ));
        }
        for (name, x) in channels {
            let corr = stats::correlation(&ind, &x);
            let z = corr * (n as f64).sqrt();
            tests.push(ChannelTest {
                set: b.clone(),
                channel: name,
                correlation: corr,
                z,
                disjoint_rate: rate,
                pass: z.abs() < LOCALITY_Z,
            });
        }
        let hits = (rate * n as f64).round() as usize;
        if b.len() == 1 && (hits < 30 || n - hits < 30) && hits != 0 && hits != n {
            warnings.push(format!(
                "sparse stratum for B = {b:?}: {hits} of {n} disjoint"
            ));
        }
    }
    let max_abs_z = tests.iter().map(|t| t.z.abs()).fold(0.0, f64::max);
    Ok(LocalityReport {
        rule: rule.to_string(),
        samples: n,
        pass: tests.iter().all(|t| t.pass),
        tests,
        max_abs_z,
        threshold: LOCALITY_Z,
        warnings,
    })
}

/// Locality test with `±λ` arc boundary data at the critical height.
pub fn test_locality(
    rule: &SetRule,
    domain: &TgDomain,
    n_samples: usize,
    seed: u64,
) -> Result<LocalityReport> {
    let bd = domain.arc_boundary_data(crate::lambda_critical());
    test_locality_with(
        rule,
        domain,
        &bd,
        n_samples,
        seed,
        Some(rng::derive(seed, 0x10ca1)),
    )
}

pub fn test_locality_with(
    rule: &SetRule,
    domain: &TgDomain,
    boundary_data: &[f64],
    n_samples: usize,
    seed: u64,
    aux: Option<u64>,
) -> Result<LocalityReport> {
    let samples = draw(rule, domain, boundary_data, n_samples, seed, aux)?;
    locality_from_samples(&rule.name, domain, &samples)
}

/// Field with two sets drawn conditionally independently given it.
#[derive(Clone, Debug, PartialEq)]
pub struct CcupDraw {
    pub field: Vec<f64>,
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub union: Vec<usize>,
}

/// Samples of the conditionally independent union of two rules.
#[derive(Clone, Debug)]
pub struct CcupSampler {
    domain: TgDomain,
    dgff: Dgff,
    base: FieldSample,
    rules: (SetRule, SetRule),
    seed: u64,
    aux: (u64, u64),
}

impl CcupSampler {
    pub fn draw(&self, k: usize) -> Result<CcupDraw> {
        let mut f = self.base.clone();
        self.dgff
            .system()
            .add_gaussian(&mut rng::stream(self.seed, k as u64), &mut f.values);
        let a1 =
            self.rules
                .0
                .evaluate(&self.domain, &f, Some(rng::derive(self.aux.0, k as u64)))?;
        let a2 =
            self.rules
                .1
                .evaluate(&self.domain, &f, Some(rng::derive(self.aux.1, k as u64)))?;
        let union: BTreeSet<usize> = a1.set.iter().chain(&a2.set).copied().collect();
        Ok(CcupDraw {
            field: f.values,
            first: a1.set,
            second: a2.set,
            union: union.into_iter().collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcupReport {
    pub first: LocalityReport,
    pub second: LocalityReport,
    pub union: LocalityReport,
    pub pass: bool,
}

/// Gates both rules on locality, then tests their conditionally independent
/// union. Randomized rules need `aux_seeds`.
pub fn ccup_union(
    rule1: &SetRule,
    rule2: &SetRule,
    domain: &TgDomain,
    n_samples: usize,
    seed: u64,
    aux_seeds: Option<(u64, u64)>,
) -> Result<(CcupSampler, CcupReport)> {
    if (rule1.is_randomized() || rule2.is_randomized()) && aux_seeds.is_none() {
        return Err(Error::SeedRequired(format!(
            "{} ∪ {}",
            rule1.name, rule2.name
        )));
    }
    let aux = aux_seeds.unwrap_or((rng::derive(seed, 1), rng::derive(seed, 2)));
    let bd = domain.arc_boundary_data(crate::lambda_critical());
    let first = test_locality_with(
        rule1,
        domain,
        &bd,
        n_samples,
        rng::derive(seed, 11),
        Some(aux.0),
    )?;
    let second = test_locality_with(
        rule2,
        domain,
        &bd,
        n_samples,
        rng::derive(seed, 12),
        Some(aux.1),
    )?;
    for r in [&first, &second] {
        if !r.pass {
            return Err(Error::Precondition(format!(
                "rule '{}' is not local (max |z| = {:.2})",
                r.rule, r.max_abs_z
            )));
        }
    }
    let dgff = Dgff::new(domain)?;
    let base = dgff.harmonic(domain, &bd)?;
    let sampler = CcupSampler {
        domain: domain.clone(),
        dgff,
        base,
        rules: (rule1.clone(), rule2.clone()),
        seed,
        aux,
    };
    let samples: Vec<(Vec<f64>, Vec<usize>)> = (0..n_samples)
        .into_par_iter()
        .map(|k| sampler.draw(k).map(|d| (d.field, d.union)))
        .collect::<Result<_>>()?;
    let union = locality_from_samples(
        &format!("{} ∪ {}", rule1.name, rule2.name),
        domain,
        &samples,
    )?;
    let pass = union.pass;
    Ok((
        sampler,
        CcupReport {
            first,
            second,
            union,
            pass,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicityCheck {
    pub set: Vec<usize>,
    pub vertex: usize,
    pub hits: usize,
    /// Mean of `h(v) − (mean of the six neighbours)` within the stratum.
    pub defect: stats::MeanSe,
    pub z: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicityReport {
    pub rule: String,
    pub samples: usize,
    pub strata_tested: usize,
    pub checks: Vec<HarmonicityCheck>,
    pub threshold: f64,
    pub warnings: Vec<String>,
    pub pass: bool,
}

/// Stratifies by the realized set `C` and checks the mean-value property of
/// `E[h | A = C]` at interior vertices neither in nor adjacent to `C`.
pub fn conditional_mean_harmonicity(
    rule: &SetRule,
    domain: &TgDomain,
    n_samples: usize,
    seed: u64,
) -> Result<HarmonicityReport> {
    let bd = domain.arc_boundary_data(crate::lambda_critical());
    let aux = rule.is_randomized().then(|| rng::derive(seed, 0x4a12));
    let dgff = Dgff::new(domain)?;
    let base = dgff.harmonic(domain, &bd)?;
    let iv = domain.interior_vertices();
    // defect per interior vertex, accumulated per stratum in fixed-size chunks
    let chunk = 4096;
    let chunks: Vec<HashMap<Vec<usize>, (usize, Vec<f64>, Vec<f64>)>> = (0..n_samples
        .div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut acc: HashMap<Vec<usize>, (usize, Vec<f64>, Vec<f64>)> = HashMap::new();
            for k in c * chunk..((c + 1) * chunk).min(n_samples) {
                let mut f = base.clone();
                dgff.system()
                    .add_gaussian(&mut rng::stream(seed, k as u64), &mut f.values);
                let a = rule.evaluate(domain, &f, aux.map(|s| rng::derive(s, k as u64)))?;
                let e = acc
                    .entry(a.set)
                    .or_insert_with(|| (0, vec![0.0; iv.len()], vec![0.0; iv.len()]));
                e.0 += 1;
                for (i, &v) in iv.iter().enumerate() {
                    let nb = domain.neighbors(v);
                    let d = f.values[v]
                        - nb.iter().map(|&w| f.values[w]).sum::<f64>() / nb.len() as f64;
                    e.1[i] += d;
                    e.2[i] += d * d;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut strata: HashMap<Vec<usize>, (usize, Vec<f64>, Vec<f64>)> = HashMap::new();
    for acc in chunks {
        for (set, (n, s1, s2)) in acc {
            let e = strata
                .entry(set)
                .or_insert_with(|| (0, vec![0.0; iv.len()], vec![0.0; iv.len()]));
            e.0 += n;
            for i in 0..iv.len() {
                e.1[i] += s1[i];
                e.2[i] += s2[i];
            }
        }
    }
    let mut keys: Vec<&Vec<usize>> = strata.keys().collect();
    keys.sort();
    let mut checks = Vec::new();
    let mut tested = 0;
    for set in keys {
        let (hits, s1, s2) = &strata[set];
        if *hits < MIN_STRATUM_HITS {
            continue;
        }
        tested += 1;
        for (i, &v) in iv.iter().enumerate() {
            let in_or_next = set.binary_search(&v).is_ok()
                || domain
                    .neighbors(v)
                    .iter()
                    .any(|w| set.binary_search(w).is_ok());
            if in_or_next {
                continue;
            }
            let nf = *hits as f64;
            let mean = s1[i] / nf;
            let var = ((s2[i] / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
            let defect = stats::MeanSe {
                mean,
                se: (var / nf).sqrt(),
                n: *hits,
            };
            let z = defect.z();
            checks.push(HarmonicityCheck {
                set: set.clone(),
                vertex: v,
                hits: *hits,
                defect,
                z,
                pass: z.abs() < LOCALITY_Z,
            });
        }
    }
    let mut warnings = Vec::new();
    if tested == 0 {
        warnings.push(format!(
            "no stratum reached {MIN_STRATUM_HITS} hits; undersampled"
        ));
    }
    Ok(HarmonicityReport {
        rule: rule.name.clone(),
        samples: n_samples,
        strata_tested: tested,
        pass: checks.iter().all(|c| c.pass),
        checks,
        threshold: LOCALITY_Z,
        warnings,
    })
}
