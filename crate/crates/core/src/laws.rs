//! Laws for the community size `X` and density `Q`.
//!
//! [`CommunityLaw`] is the declarative form, deserialized straight from the
//! law JSON file. [`PreparedLaw`] is the validated, ready-to-sample form: every
//! size law is turned into a finite table of atoms with a cumulative table for
//! inverse-CDF sampling, and the same atoms drive the exact moments computed in
//! [`crate::analytic`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rng::RandomState;
use crate::{Error, Result, ValidationErrors};

/// Tolerance on the total mass of a pmf table.
pub const PMF_SUM_TOLERANCE: f64 = 1e-12;

/// Poisson terms beyond the mean smaller than this are dropped.
const POISSON_NEGLIGIBLE: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SizeLaw {
    Point {
        value: u64,
    },
    Pmf {
        entries: Vec<(u64, f64)>,
    },
    /// `P{X = x}` proportional to `x^-exponent` on `[xmin, xmax]`.
    Zipf {
        exponent: f64,
        xmin: u64,
        xmax: u64,
    },
    /// Poisson with all mass above `cap` placed on `cap`.
    Poisson {
        mean: f64,
        cap: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DensityLaw {
    Point { value: f64 },
    Pmf { entries: Vec<(f64, f64)> },
    Uniform { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    #[default]
    Independent,
    /// Finite joint table of `(x, q, probability)` triples.
    Joint(Vec<(u64, f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternEntry {
    pub x: SizeLaw,
    pub q: DensityLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum CommunityLaw {
    /// Identically distributed communities. With independent coupling both
    /// `x` and `q` are required; with a joint table both must be omitted.
    Iid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x: Option<SizeLaw>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<DensityLaw>,
        #[serde(default)]
        coupling: Coupling,
    },
    /// Community `i` uses `pattern[i % pattern.len()]`.
    Noniid { pattern: Vec<PatternEntry> },
}

impl CommunityLaw {
    pub fn iid(x: SizeLaw, q: DensityLaw) -> Self {
        CommunityLaw::Iid {
            x: Some(x),
            q: Some(q),
            coupling: Coupling::Independent,
        }
    }

    pub fn joint(table: Vec<(u64, f64, f64)>) -> Self {
        CommunityLaw::Iid {
            x: None,
            q: None,
            coupling: Coupling::Joint(table),
        }
    }

    pub fn noniid(pattern: Vec<(SizeLaw, DensityLaw)>) -> Self {
        CommunityLaw::Noniid {
            pattern: pattern
                .into_iter()
                .map(|(x, q)| PatternEntry { x, q })
                .collect(),
        }
    }

    /// Parses a law from its JSON text. Errors carry the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::LawFile {
            path: ".".into(),
            message: e.to_string(),
        })?;
        match value.get("mode").and_then(|m| m.as_str()) {
            Some("iid") => {
                let f: IidFile = from_value(value)?;
                Ok(CommunityLaw::Iid {
                    x: f.x,
                    q: f.q,
                    coupling: f.coupling,
                })
            }
            Some("noniid") => {
                let f: NoniidFile = from_value(value)?;
                Ok(CommunityLaw::Noniid { pattern: f.pattern })
            }
            _ => Err(Error::LawFile {
                path: "mode".into(),
                message: "expected \"iid\" or \"noniid\"".into(),
            }),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Collects every invariant violation; `Ok` iff there are none.
    pub fn validate(&self) -> std::result::Result<(), ValidationErrors> {
        let mut errs = ValidationErrors::default();
        match self {
            CommunityLaw::Iid { x, q, coupling } => match coupling {
                Coupling::Independent => {
                    match x {
                        Some(x) => x.check("x", &mut errs),
                        None => errs.push("x", "size law required with independent coupling"),
                    }
                    match q {
                        Some(q) => q.check("q", &mut errs),
                        None => errs.push("q", "density law required with independent coupling"),
                    }
                }
                Coupling::Joint(table) => {
                    if x.is_some() {
                        errs.push("x", "must be omitted when coupling is a joint table");
                    }
                    if q.is_some() {
                        errs.push("q", "must be omitted when coupling is a joint table");
                    }
                    check_joint(table, &mut errs);
                }
            },
            CommunityLaw::Noniid { pattern } => {
                if pattern.is_empty() {
                    errs.push("pattern", "pattern must be nonempty");
                }
                for (i, entry) in pattern.iter().enumerate() {
                    entry.x.check(&format!("pattern[{i}].x"), &mut errs);
                    entry.q.check(&format!("pattern[{i}].q"), &mut errs);
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    pub fn prepare(&self) -> Result<PreparedLaw> {
        PreparedLaw::new(self.clone())
    }
}

// Mode-specific file layouts; parsing them directly keeps field paths in errors.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct IidFile {
    mode: String,
    x: Option<SizeLaw>,
    q: Option<DensityLaw>,
    #[serde(default)]
    coupling: Coupling,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct NoniidFile {
    mode: String,
    pattern: Vec<PatternEntry>,
}

fn from_value<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| Error::LawFile {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

fn check_prob(path: &str, p: f64, errs: &mut ValidationErrors) {
    if !(0.0..=1.0).contains(&p) {
        errs.push(path, format!("probability {p} outside [0, 1]"));
    }
}

fn check_sum(path: &str, sum: f64, errs: &mut ValidationErrors) {
    if (sum - 1.0).abs().is_nan() || (sum - 1.0).abs() > PMF_SUM_TOLERANCE {
        errs.push(path, format!("probabilities sum to {sum}"));
    }
}

fn check_joint(table: &[(u64, f64, f64)], errs: &mut ValidationErrors) {
    let path = "coupling.joint";
    if table.is_empty() {
        errs.push(path, "joint table must be nonempty");
        return;
    }
    for (i, &(_, q, p)) in table.iter().enumerate() {
        if !(0.0..=1.0).contains(&q) {
            errs.push(
                format!("{path}[{i}].q"),
                format!("density {q} outside [0, 1]"),
            );
        }
        check_prob(&format!("{path}[{i}].p"), p, errs);
    }
    check_sum(path, table.iter().map(|e| e.2).sum(), errs);
}

impl SizeLaw {
    fn check(&self, path: &str, errs: &mut ValidationErrors) {
        match self {
            SizeLaw::Point { .. } => {}
            SizeLaw::Pmf { entries } => {
                if entries.is_empty() {
                    errs.push(format!("{path}.entries"), "pmf must be nonempty");
                    return;
                }
                let mut seen = std::collections::BTreeSet::new();
                for (i, &(v, p)) in entries.iter().enumerate() {
                    if !seen.insert(v) {
                        errs.push(
                            format!("{path}.entries[{i}]"),
                            format!("duplicate value {v}"),
                        );
                    }
                    check_prob(&format!("{path}.entries[{i}]"), p, errs);
                }
                check_sum(
                    &format!("{path}.entries"),
                    entries.iter().map(|e| e.1).sum(),
                    errs,
                );
            }
            SizeLaw::Zipf {
                exponent,
                xmin,
                xmax,
            } => {
                if !(exponent.is_finite() && *exponent > 1.0) {
                    errs.push(format!("{path}.exponent"), "exponent > 1 required");
                }
                if *xmin < 1 {
                    errs.push(format!("{path}.xmin"), "xmin >= 1 required");
                }
                if xmin > xmax {
                    errs.push(format!("{path}.xmax"), "xmin <= xmax required");
                }
            }
            SizeLaw::Poisson { mean, cap } => {
                if !(mean.is_finite() && *mean > 0.0) {
                    errs.push(format!("{path}.mean"), "mean > 0 required");
                }
                if *cap < 1 {
                    errs.push(format!("{path}.cap"), "cap >= 1 required");
                }
            }
        }
    }

    /// Finite list of `(value, probability)` atoms, sorted by value.
    pub fn atoms(&self) -> Vec<(u64, f64)> {
        match self {
            SizeLaw::Point { value } => vec![(*value, 1.0)],
            SizeLaw::Pmf { entries } => {
                let mut v: Vec<(u64, f64)> =
                    entries.iter().copied().filter(|e| e.1 > 0.0).collect();
                v.sort_by_key(|e| e.0);
                v
            }
            SizeLaw::Zipf {
                exponent,
                xmin,
                xmax,
            } => {
                let weights: Vec<(u64, f64)> = (*xmin..=*xmax)
                    .map(|x| (x, (x as f64).powf(-exponent)))
                    .collect();
                let total: f64 = weights.iter().map(|w| w.1).sum();
                weights.into_iter().map(|(x, w)| (x, w / total)).collect()
            }
            SizeLaw::Poisson { mean, cap } => poisson_atoms(*mean, *cap),
        }
    }
}

fn poisson_atoms(mean: f64, cap: u64) -> Vec<(u64, f64)> {
    let ln_mean = mean.ln();
    let mut atoms = Vec::new();
    let mut head = 0.0;
    for j in 0..cap {
        let p = (-mean + j as f64 * ln_mean - libm::lgamma(j as f64 + 1.0)).exp();
        if (j as f64) > mean && p < POISSON_NEGLIGIBLE {
            return atoms;
        }
        if p > 0.0 {
            atoms.push((j, p));
        }
        head += p;
    }
    let tail = (1.0 - head).max(0.0);
    if tail > 0.0 {
        atoms.push((cap, tail));
    }
    atoms
}

impl DensityLaw {
    fn check(&self, path: &str, errs: &mut ValidationErrors) {
        match self {
            DensityLaw::Point { value } => {
                if !(0.0..=1.0).contains(value) {
                    errs.push(
                        format!("{path}.value"),
                        format!("density {value} outside [0, 1]"),
                    );
                }
            }
            DensityLaw::Pmf { entries } => {
                if entries.is_empty() {
                    errs.push(format!("{path}.entries"), "pmf must be nonempty");
                    return;
                }
                for (i, &(v, p)) in entries.iter().enumerate() {
                    if !(0.0..=1.0).contains(&v) {
                        errs.push(
                            format!("{path}.entries[{i}]"),
                            format!("density {v} outside [0, 1]"),
                        );
                    }
                    check_prob(&format!("{path}.entries[{i}]"), p, errs);
                }
                check_sum(
                    &format!("{path}.entries"),
                    entries.iter().map(|e| e.1).sum(),
                    errs,
                );
            }
            DensityLaw::Uniform { a, b } => {
                if !(*a >= 0.0 && *b <= 1.0) {
                    errs.push(path, "0 <= a and b <= 1 required");
                }
                if a.partial_cmp(b) != Some(std::cmp::Ordering::Less) {
                    errs.push(path, "a < b required");
                }
            }
        }
    }

    /// `E[(1 - Q)^e]`, with `0^0 = 1`.
    pub fn mean_pow_complement(&self, e: u64) -> f64 {
        match self {
            DensityLaw::Point { value } => pow_complement(*value, e),
            DensityLaw::Pmf { entries } => {
                entries.iter().map(|&(v, p)| p * pow_complement(v, e)).sum()
            }
            DensityLaw::Uniform { a, b } => {
                if e == 0 {
                    return 1.0;
                }
                let k = e + 1;
                (pow_complement(*a, k) - pow_complement(*b, k)) / (k as f64 * (b - a))
            }
        }
    }

    pub fn mean(&self) -> f64 {
        1.0 - self.mean_pow_complement(1)
    }
}

/// `(1 - q)^e` with the convention `0^0 = 1`.
#[inline]
pub fn pow_complement(q: f64, e: u64) -> f64 {
    if e == 0 {
        1.0
    } else if q >= 1.0 {
        0.0
    } else {
        (e as f64 * (-q).ln_1p()).exp()
    }
}

/// Inverse-CDF table over a finite list of atoms.
#[derive(Debug, Clone)]
struct CdfTable {
    cumulative: Vec<f64>,
}

impl CdfTable {
    fn new(probs: impl IntoIterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = probs
            .into_iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self { cumulative }
    }

    #[inline]
    fn draw(&self, rng: &mut RandomState) -> usize {
        let total = *self.cumulative.last().expect("nonempty table");
        let u = rng.uniform01() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

#[derive(Debug, Clone)]
struct SizeSampler {
    atoms: Vec<(u64, f64)>,
    cdf: Option<CdfTable>,
}

impl SizeSampler {
    fn new(law: &SizeLaw) -> Self {
        let atoms = law.atoms();
        let cdf = (atoms.len() > 1).then(|| CdfTable::new(atoms.iter().map(|a| a.1)));
        Self { atoms, cdf }
    }

    #[inline]
    fn draw(&self, rng: &mut RandomState) -> u64 {
        match &self.cdf {
            None => self.atoms[0].0,
            Some(cdf) => self.atoms[cdf.draw(rng)].0,
        }
    }
}

#[derive(Debug, Clone)]
enum DensitySampler {
    Point(f64),
    Table(Vec<f64>, CdfTable),
    Uniform(f64, f64),
}

impl DensitySampler {
    fn new(law: &DensityLaw) -> Self {
        match law {
            DensityLaw::Point { value } => DensitySampler::Point(*value),
            DensityLaw::Pmf { entries } if entries.len() == 1 => {
                DensitySampler::Point(entries[0].0)
            }
            DensityLaw::Pmf { entries } => DensitySampler::Table(
                entries.iter().map(|e| e.0).collect(),
                CdfTable::new(entries.iter().map(|e| e.1)),
            ),
            DensityLaw::Uniform { a, b } => DensitySampler::Uniform(*a, *b),
        }
    }

    #[inline]
    fn draw(&self, rng: &mut RandomState) -> f64 {
        match self {
            DensitySampler::Point(q) => *q,
            DensitySampler::Table(values, cdf) => values[cdf.draw(rng)],
            DensitySampler::Uniform(a, b) => a + (b - a) * rng.uniform01(),
        }
    }
}

#[derive(Debug, Clone)]
struct IndependentBlock {
    size: SizeSampler,
    density_law: DensityLaw,
    density: DensitySampler,
}

impl IndependentBlock {
    fn new(x: &SizeLaw, q: &DensityLaw) -> Self {
        Self {
            size: SizeSampler::new(x),
            density_law: q.clone(),
            density: DensitySampler::new(q),
        }
    }
}

#[derive(Debug, Clone)]
enum Sampling {
    Independent(IndependentBlock),
    Joint {
        table: Vec<(u64, f64, f64)>,
        cdf: CdfTable,
    },
    Pattern(Vec<IndependentBlock>),
}

/// A validated law with precomputed sampling tables. Immutable and `Sync`.
#[derive(Debug, Clone)]
pub struct PreparedLaw {
    law: CommunityLaw,
    sampling: Sampling,
}

impl PreparedLaw {
    pub fn new(law: CommunityLaw) -> Result<Self> {
        law.validate().map_err(Error::InvalidLaw)?;
        let sampling = match &law {
            CommunityLaw::Iid {
                x: Some(x),
                q: Some(q),
                coupling: Coupling::Independent,
            } => Sampling::Independent(IndependentBlock::new(x, q)),
            CommunityLaw::Iid {
                coupling: Coupling::Joint(table),
                ..
            } => {
                let table: Vec<_> = table.iter().copied().filter(|e| e.2 > 0.0).collect();
                let cdf = CdfTable::new(table.iter().map(|e| e.2));
                Sampling::Joint { table, cdf }
            }
            CommunityLaw::Noniid { pattern } => Sampling::Pattern(
                pattern
                    .iter()
                    .map(|e| IndependentBlock::new(&e.x, &e.q))
                    .collect(),
            ),
            CommunityLaw::Iid { .. } => unreachable!("rejected by validation"),
        };
        Ok(Self { law, sampling })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(CommunityLaw::from_path(path)?)
    }

    pub fn law(&self) -> &CommunityLaw {
        &self.law
    }

    /// Draws `(min(X, n), Q)` for community `community_index`.
    #[inline]
    pub fn sample_pair(&self, community_index: u64, n: u64, rng: &mut RandomState) -> (u64, f64) {
        let (x, q) = match &self.sampling {
            Sampling::Independent(block) => (block.size.draw(rng), block.density.draw(rng)),
            Sampling::Joint { table, cdf } => {
                let (x, q, _) = table[cdf.draw(rng)];
                (x, q)
            }
            Sampling::Pattern(blocks) => {
                let block = &blocks[(community_index % blocks.len() as u64) as usize];
                (block.size.draw(rng), block.density.draw(rng))
            }
        };
        (x.min(n), q)
    }

    /// Average over communities of `E[f(X', Q)]`, where `X' = min(X, n)` when
    /// `truncate_at` is given. `f` receives the size value and the conditional
    /// law of `Q` given that size.
    pub fn expectation<F>(&self, truncate_at: Option<u64>, f: F) -> f64
    where
        F: Fn(u64, &DensityLaw) -> f64,
    {
        let cut = |x: u64| truncate_at.map_or(x, |n| x.min(n));
        let block_mean = |b: &IndependentBlock| -> f64 {
            b.size
                .atoms
                .iter()
                .map(|&(x, p)| p * f(cut(x), &b.density_law))
                .sum()
        };
        match &self.sampling {
            Sampling::Independent(b) => block_mean(b),
            Sampling::Joint { table, .. } => table
                .iter()
                .map(|&(x, q, p)| p * f(cut(x), &DensityLaw::Point { value: q }))
                .sum(),
            Sampling::Pattern(blocks) => {
                blocks.iter().map(block_mean).sum::<f64>() / blocks.len() as f64
            }
        }
    }
}
