//! Replicated Monte Carlo runs, threshold sweeps and the isolated-vertex
//! Poisson comparison.
//!
//! Replicate `r` of a point always uses substream `r` of the master seed and
//! results are folded in replicate order, so output does not depend on the
//! number of worker threads.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{self, p_connected, Moments};
use crate::laws::{CommunityLaw, PreparedLaw};
use crate::sampler::{sample_graph, GraphConfig};
use crate::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Absolute allowance for finite-n bias used when comparing `p_hat` with its limit.
pub const FINITE_N_ALLOWANCE: f64 = 0.05;

/// Highest factorial moment of `Y0` tracked per point.
pub const MAX_FACTORIAL_MOMENT: usize = 4;

/// Minimum replicates for a meaningful Poisson comparison.
pub const MIN_POISSON_REPLICATES: u64 = 500;

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // Clamp so that rounding never puts p outside its own interval.
    (
        (center - half).max(0.0).min(p),
        (center + half).min(1.0).max(p),
    )
}

/// `y (y-1) … (y-r+1)`.
pub fn falling_factorial(y: u64, r: usize) -> f64 {
    (0..r as u64).map(|i| y as f64 - i as f64).product()
}

/// Aggregated outcome of the replicates at one `(n, m)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdPoint {
    pub c: f64,
    pub n: u64,
    pub m: u64,
    pub lambda: f64,
    pub p_pred: f64,
    pub replicates: u64,
    pub connected_count: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub y0_mean: f64,
    pub y0_var: f64,
    pub fm1: f64,
    pub fm2: f64,
    pub fm3: f64,
    pub fm4: f64,
    pub seed: u64,
    pub y0_histogram: BTreeMap<u64, u64>,
    #[serde(skip)]
    pub kappa_truncated: f64,
}

impl ThresholdPoint {
    pub fn factorial_moments(&self) -> [f64; MAX_FACTORIAL_MOMENT] {
        [self.fm1, self.fm2, self.fm3, self.fm4]
    }

    /// Binomial standard error of `p_hat`.
    pub fn std_error(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.replicates as f64).sqrt()
    }

    pub fn wilson_half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

/// One CSV row; column order is part of the output format.
#[derive(Serialize)]
struct CsvRow {
    c: f64,
    n: u64,
    m: u64,
    lambda: f64,
    p_pred: f64,
    replicates: u64,
    connected_count: u64,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    y0_mean: f64,
    y0_var: f64,
    fm1: f64,
    fm2: f64,
    fm3: f64,
    fm4: f64,
    seed: u64,
}

impl From<&ThresholdPoint> for CsvRow {
    fn from(p: &ThresholdPoint) -> Self {
        CsvRow {
            c: p.c,
            n: p.n,
            m: p.m,
            lambda: p.lambda,
            p_pred: p.p_pred,
            replicates: p.replicates,
            connected_count: p.connected_count,
            p_hat: p.p_hat,
            ci_low: p.ci_low,
            ci_high: p.ci_high,
            y0_mean: p.y0_mean,
            y0_var: p.y0_var,
            fm1: p.fm1,
            fm2: p.fm2,
            fm3: p.fm3,
            fm4: p.fm4,
            seed: p.seed,
        }
    }
}

pub const CSV_HEADER: &str =
    "c,n,m,lambda,p_pred,replicates,connected_count,p_hat,ci_low,ci_high,y0_mean,y0_var,fm1,fm2,fm3,fm4,seed";

pub fn write_csv<W: Write>(points: &[ThresholdPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(CsvRow::from(p))?;
    }
    if points.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

/// Run-level context written alongside JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub generator: String,
    pub n: u64,
    pub law: CommunityLaw,
    pub kappa: f64,
    pub kappa_truncated: f64,
    pub alpha: f64,
    pub replicates: u64,
    pub master_seed: u64,
    pub confidence_level: f64,
    pub interval: &'static str,
    /// Absolute allowance on |p_hat - p_pred| for finite-n bias.
    pub finite_n_allowance: f64,
}

impl Metadata {
    pub fn new(n: u64, law: &PreparedLaw, replicates: u64, master_seed: u64) -> Self {
        let Moments {
            kappa,
            kappa_truncated,
            alpha,
        } = analytic::kappa(law, Some(n));
        Metadata {
            generator: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).into(),
            n,
            law: law.law().clone(),
            kappa,
            kappa_truncated,
            alpha,
            replicates,
            master_seed,
            confidence_level: 0.95,
            interval: "wilson",
            finite_n_allowance: FINITE_N_ALLOWANCE,
        }
    }
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    metadata: &'a Metadata,
    points: &'a [ThresholdPoint],
}

pub fn write_json<W: Write>(metadata: &Metadata, points: &[ThresholdPoint], out: W) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    serde_json::to_writer_pretty(&mut out, &JsonDocument { metadata, points })?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub enum SweepMode {
    /// Target threshold coordinates; `m` is chosen per value.
    Threshold(Vec<f64>),
    /// Explicit community counts.
    FixedM(Vec<u64>),
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub n: u64,
    pub law: PreparedLaw,
    pub replicates: u64,
    pub master_seed: u64,
    pub mode: SweepMode,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be >= 1".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        match &self.mode {
            SweepMode::Threshold(c) if c.is_empty() => Err(Error::InvalidConfig(
                "sweep needs at least one c value".into(),
            )),
            SweepMode::Threshold(c) if c.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidConfig("c values must be finite".into()))
            }
            SweepMode::FixedM(m) if m.is_empty() => Err(Error::InvalidConfig(
                "sweep needs at least one m value".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Per-replicate summary kept for aggregation.
#[derive(Debug, Clone, Copy)]
struct Outcome {
    connected: bool,
    y0: u64,
}

/// Worker count from `THREADS`, defaulting to the available parallelism.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var("THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t >= 1 => Ok(t),
            _ => Err(Error::InvalidConfig(format!(
                "THREADS must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Executes experiments on a dedicated worker pool.
pub struct Runner {
    pool: rayon::ThreadPool,
}

impl Runner {
    pub fn new(threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| Error::ThreadPool(e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn from_env() -> Result<Self> {
        Self::new(threads_from_env()?)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `replicates` independent realizations at `(n, m)`. The reported
    /// `c` equals the realized `lambda`.
    pub fn run_point(
        &self,
        n: u64,
        m: u64,
        law: &PreparedLaw,
        replicates: u64,
        master_seed: u64,
    ) -> Result<ThresholdPoint> {
        if replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be >= 1".into()));
        }
        let config = GraphConfig::new(n as usize, m, law.clone(), master_seed)?;
        let outcomes: Vec<Outcome> = self.pool.install(|| {
            (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let census = sample_graph(&config, r);
                    Outcome {
                        connected: census.is_connected,
                        y0: census.y0 as u64,
                    }
                })
                .collect()
        });
        let kt = analytic::kappa(law, Some(n)).kappa_truncated;
        let lambda = analytic::lambda_from(n, m, kt);
        Ok(aggregate(n, m, lambda, kt, master_seed, &outcomes))
    }

    /// One point per sweep entry, in the order given.
    pub fn run_sweep(&self, spec: &SweepSpec) -> Result<Vec<ThresholdPoint>> {
        spec.validate()?;
        match &spec.mode {
            SweepMode::Threshold(cs) => cs
                .iter()
                .map(|&c| {
                    let target = analytic::m_for_c(spec.n, c, &spec.law)?;
                    let mut point = self.run_point(
                        spec.n,
                        target.m,
                        &spec.law,
                        spec.replicates,
                        spec.master_seed,
                    )?;
                    point.c = c;
                    Ok(point)
                })
                .collect(),
            SweepMode::FixedM(ms) => ms
                .iter()
                .map(|&m| self.run_point(spec.n, m, &spec.law, spec.replicates, spec.master_seed))
                .collect(),
        }
    }
}

fn aggregate(
    n: u64,
    m: u64,
    lambda: f64,
    kappa_truncated: f64,
    seed: u64,
    outcomes: &[Outcome],
) -> ThresholdPoint {
    let reps = outcomes.len() as u64;
    let connected_count = outcomes.iter().filter(|o| o.connected).count() as u64;
    let p_hat = connected_count as f64 / reps as f64;
    let (ci_low, ci_high) = wilson_interval(connected_count, reps, Z95);

    let mut y0_histogram = BTreeMap::new();
    let mut fm = [0.0f64; MAX_FACTORIAL_MOMENT];
    for o in outcomes {
        *y0_histogram.entry(o.y0).or_insert(0) += 1;
        for (r, slot) in fm.iter_mut().enumerate() {
            *slot += falling_factorial(o.y0, r + 1);
        }
    }
    for slot in &mut fm {
        *slot /= reps as f64;
    }
    let y0_mean = fm[0];
    let y0_var = if reps > 1 {
        outcomes
            .iter()
            .map(|o| (o.y0 as f64 - y0_mean).powi(2))
            .sum::<f64>()
            / (reps - 1) as f64
    } else {
        0.0
    };

    ThresholdPoint {
        c: lambda,
        n,
        m,
        lambda,
        p_pred: p_connected(lambda),
        replicates: reps,
        connected_count,
        p_hat,
        ci_low,
        ci_high,
        y0_mean,
        y0_var,
        fm1: fm[0],
        fm2: fm[1],
        fm3: fm[2],
        fm4: fm[3],
        seed,
        y0_histogram,
        kappa_truncated,
    }
}

/// Index pairs `(i, j)`, `c_i < c_j`, where `p_hat` rises by more than the
/// combined 3-SE noise band.
pub fn monotonicity_violations(points: &[ThresholdPoint]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..points.len() {
        for j in 0..points.len() {
            let (a, b) = (&points[i], &points[j]);
            if a.c < b.c && a.p_hat + 3.0 * a.std_error() < b.p_hat - 3.0 * b.std_error() {
                out.push((i, j));
            }
        }
    }
    out
}

/// Empirical `Y0` law against `Poisson(exp(lambda))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonReport {
    pub poisson_mean: f64,
    /// Largest `j` included in the distance.
    pub truncation: u64,
    pub tv_distance: f64,
    /// `fm_r / exp(r lambda)` for `r = 1..=4`.
    pub moment_ratios: [f64; MAX_FACTORIAL_MOMENT],
    pub y0_mean_ratio: f64,
    /// No community can produce an edge (or there are none), so `Y0 = n`.
    pub degenerate: bool,
    pub underpowered: bool,
    pub notes: Vec<String>,
}

pub fn y0_poisson_test(point: &ThresholdPoint) -> PoissonReport {
    let mu = point.lambda.exp();
    let max_seen = point.y0_histogram.keys().next_back().copied().unwrap_or(0);
    let truncation = max_seen + 5;
    let reps = point.replicates as f64;
    let tv_distance = 0.5
        * (0..=truncation)
            .map(|j| {
                let emp = point.y0_histogram.get(&j).copied().unwrap_or(0) as f64 / reps;
                (emp - analytic::poisson_pmf(mu, j)).abs()
            })
            .sum::<f64>();
    let mut moment_ratios = [0.0; MAX_FACTORIAL_MOMENT];
    for (r, (slot, fm)) in moment_ratios
        .iter_mut()
        .zip(point.factorial_moments())
        .enumerate()
    {
        *slot = fm / analytic::poisson_factorial_moment(mu, r as u32 + 1);
    }
    let degenerate = point.kappa_truncated <= 0.0 || point.m == 0;
    let underpowered = point.replicates < MIN_POISSON_REPLICATES;
    let mut notes = Vec::new();
    if degenerate {
        notes.push(format!(
            "kappa_truncated = {} with m = {}: no edges are possible, Y0 = n and the Poisson fit is meaningless",
            point.kappa_truncated, point.m
        ));
    }
    if underpowered {
        notes.push(format!(
            "only {} replicates; at least {MIN_POISSON_REPLICATES} recommended",
            point.replicates
        ));
    }
    PoissonReport {
        poisson_mean: mu,
        truncation,
        tv_distance,
        moment_ratios,
        y0_mean_ratio: point.y0_mean / mu,
        degenerate,
        underpowered,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{DensityLaw, SizeLaw};

    fn law(x: u64, q: f64) -> PreparedLaw {
        CommunityLaw::iid(SizeLaw::Point { value: x }, DensityLaw::Point { value: q })
            .prepare()
            .unwrap()
    }

    #[test]
    fn wilson_reference_values() {
        // 50/100: center 0.5, half = z/(1+z^2/100) sqrt(0.0025 + z^2/40000).
        let (lo, hi) = wilson_interval(50, 100, Z95);
        assert!((lo - 0.403_831_5).abs() < 1e-6, "{lo}");
        assert!((hi - 0.596_168_5).abs() < 1e-6, "{hi}");
        let (lo, hi) = wilson_interval(0, 20, Z95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.161_125_5).abs() < 1e-6, "{hi}");
        let (lo, hi) = wilson_interval(20, 20, Z95);
        assert_eq!(hi, 1.0);
        assert!((lo - 0.838_874_5).abs() < 1e-6);
    }

    #[test]
    fn falling_factorials() {
        assert_eq!(falling_factorial(5, 1), 5.0);
        assert_eq!(falling_factorial(5, 3), 60.0);
        assert_eq!(falling_factorial(2, 3), 0.0);
        assert_eq!(falling_factorial(0, 0), 1.0);
    }

    #[test]
    fn complete_community_is_always_connected() {
        let runner = Runner::new(2).unwrap();
        let p = runner.run_point(30, 1, &law(30, 1.0), 100, 7).unwrap();
        assert_eq!(p.p_hat, 1.0);
        assert_eq!(p.y0_mean, 0.0);
        assert!(p.ci_low <= p.p_hat && p.p_hat <= p.ci_high);
    }

    #[test]
    fn empty_graph_is_never_connected() {
        let runner = Runner::new(1).unwrap();
        let p = runner.run_point(25, 0, &law(3, 0.5), 100, 7).unwrap();
        assert_eq!(p.p_hat, 0.0);
        assert_eq!(p.y0_mean, 25.0);
        assert_eq!(p.y0_var, 0.0);
        assert_eq!(p.y0_histogram, BTreeMap::from([(25, 100)]));
        let report = y0_poisson_test(&p);
        assert!(report.degenerate);
        assert!(report.underpowered);
    }

    #[test]
    fn fixed_m_sweep_with_zero() {
        let spec = SweepSpec {
            n: 10,
            law: law(3, 0.5),
            replicates: 20,
            master_seed: 1,
            mode: SweepMode::FixedM(vec![0]),
        };
        let pts = Runner::new(1).unwrap().run_sweep(&spec).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].p_hat, 0.0);
    }

    #[test]
    fn sweep_predictions() {
        let spec = SweepSpec {
            n: 200,
            law: law(3, 0.5),
            replicates: 10,
            master_seed: 3,
            mode: SweepMode::Threshold(vec![-3.0, 0.0, 3.0]),
        };
        let pts = Runner::new(2).unwrap().run_sweep(&spec).unwrap();
        let c: Vec<f64> = pts.iter().map(|p| p.c).collect();
        assert_eq!(c, [-3.0, 0.0, 3.0]);
        // Predictions are evaluated at the realized lambda, within kappa/n of c.
        for (p, expect) in pts.iter().zip([0.951_4, 0.367_9, 1.9e-9]) {
            assert!((p.lambda - p.c).abs() <= 2.25 / 200.0);
            let at_c = p_connected(p.c);
            assert!((at_c - expect).abs() < 1e-4 * expect.max(1e-5), "{at_c}");
        }
    }

    #[test]
    fn sweep_rejects_bad_specs() {
        let runner = Runner::new(1).unwrap();
        let mut spec = SweepSpec {
            n: 10,
            law: law(1, 1.0),
            replicates: 5,
            master_seed: 0,
            mode: SweepMode::Threshold(vec![0.0]),
        };
        assert!(matches!(runner.run_sweep(&spec), Err(Error::KappaZero)));
        spec.mode = SweepMode::Threshold(vec![]);
        assert!(runner.run_sweep(&spec).is_err());
        spec.mode = SweepMode::FixedM(vec![1]);
        spec.replicates = 0;
        assert!(runner.run_sweep(&spec).is_err());
    }

    #[test]
    fn csv_header_and_columns() {
        let runner = Runner::new(1).unwrap();
        let p = runner.run_point(20, 30, &law(3, 0.5), 10, 4).unwrap();
        let mut buf = Vec::new();
        write_csv(&[p], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap().split(',').count(), 17);
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), CSV_HEADER);
    }

    #[test]
    fn monotonicity_flags_only_clear_increases() {
        let mk = |c: f64, k: u64| {
            aggregate(
                10,
                1,
                c,
                1.0,
                0,
                &vec![
                    Outcome {
                        connected: true,
                        y0: 0
                    };
                    k as usize
                ]
                .into_iter()
                .chain(vec![
                    Outcome {
                        connected: false,
                        y0: 1
                    };
                    (1000 - k) as usize
                ])
                .collect::<Vec<_>>(),
            )
        };
        let mut a = mk(0.0, 100);
        a.c = 0.0;
        let mut b = mk(1.0, 900);
        b.c = 1.0;
        assert_eq!(
            monotonicity_violations(&[a.clone(), b.clone()]),
            vec![(0, 1)]
        );
        b.connected_count = 90;
        b.p_hat = 0.09;
        assert!(monotonicity_violations(&[a, b]).is_empty());
    }
}
