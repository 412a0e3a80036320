//! Streaming generation of one realization of the union graph.
//!
//! Edges are never stored: each community's edges go straight into the
//! union-find forest, so the cost of a replicate is proportional to the number
//! of communities plus the number of retained pairs.

use std::collections::HashMap;
use std::io::Write;

use crate::connectivity::{ComponentCensus, Dsu};
use crate::laws::PreparedLaw;
pub use crate::rng::RandomState;
use crate::{Error, Result};

/// Subsets up to this size keep their swap map in a flat vector.
const SMALL_SUBSET: usize = 32;

/// Receives the edges of a realization.
pub trait EdgeSink {
    fn edge(&mut self, u: u32, v: u32);
}

impl<F: FnMut(u32, u32)> EdgeSink for F {
    #[inline]
    fn edge(&mut self, u: u32, v: u32) {
        self(u, v)
    }
}

/// Uniform `x`-subsets of `[0, n)` by partial Fisher–Yates over an implicit
/// identity permutation. Only displaced positions are stored, so a draw costs
/// O(x) regardless of `n`.
#[derive(Debug, Default)]
pub struct SubsetSampler {
    small: Vec<(u32, u32)>,
    large: HashMap<u32, u32>,
    out: Vec<u32>,
}

impl SubsetSampler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sample(&mut self, n: u32, x: u32, rng: &mut RandomState) -> &[u32] {
        assert!(x <= n, "subset size {x} exceeds {n}");
        self.out.clear();
        if x as usize <= SMALL_SUBSET {
            self.small.clear();
            for i in 0..x {
                let j = i + rng.below(n - i);
                let at_j = lookup_small(&self.small, j);
                let at_i = lookup_small(&self.small, i);
                store_small(&mut self.small, j, at_i);
                self.out.push(at_j);
            }
        } else {
            self.large.clear();
            for i in 0..x {
                let j = i + rng.below(n - i);
                let at_j = self.large.get(&j).copied().unwrap_or(j);
                let at_i = self.large.get(&i).copied().unwrap_or(i);
                self.large.insert(j, at_i);
                self.out.push(at_j);
            }
        }
        &self.out
    }
}

#[inline]
fn lookup_small(map: &[(u32, u32)], k: u32) -> u32 {
    map.iter().find(|e| e.0 == k).map_or(k, |e| e.1)
}

#[inline]
fn store_small(map: &mut Vec<(u32, u32)>, k: u32, v: u32) {
    match map.iter_mut().find(|e| e.0 == k) {
        Some(e) => e.1 = v,
        None => map.push((k, v)),
    }
}

/// Emits each pair of `subset` independently with probability `q` and
/// returns the number of emitted edges.
///
/// Pairs are visited in row-major order `(0,1), (0,2), …, (1,2), …` and the
/// gaps between retained pairs are geometric, so the number of random draws is
/// one more than the number of retained pairs.
pub fn sample_community_edges<S: EdgeSink + ?Sized>(
    subset: &[u32],
    q: f64,
    rng: &mut RandomState,
    sink: &mut S,
) -> u64 {
    let x = subset.len();
    if x < 2 || q <= 0.0 {
        return 0;
    }
    let pairs = (x as u64) * (x as u64 - 1) / 2;
    if q >= 1.0 {
        for a in 0..x {
            for b in a + 1..x {
                sink.edge(subset[a], subset[b]);
            }
        }
        return pairs;
    }
    let log_keep = (-q).ln_1p();
    let (mut row, mut col) = (0usize, 1usize);
    let mut t = 0u64;
    let mut emitted = 0u64;
    loop {
        let gap = (rng.uniform_open01().ln() / log_keep).floor();
        if gap >= (pairs - t) as f64 {
            break;
        }
        let gap = gap as u64;
        t += gap;
        col += gap as usize;
        while col >= x {
            let over = col - x;
            row += 1;
            col = row + 1 + over;
        }
        sink.edge(subset[row], subset[col]);
        emitted += 1;
        t += 1;
        if t == pairs {
            break;
        }
        col += 1;
        if col == x {
            row += 1;
            col = row + 1;
        }
    }
    emitted
}

/// One simulation ensemble: `m` communities on `n` vertices.
#[derive(Debug, Clone)]
pub struct GraphConfig {
    pub n: usize,
    pub m: u64,
    pub law: PreparedLaw,
    pub seed: u64,
}

impl GraphConfig {
    pub fn new(n: usize, m: u64, law: PreparedLaw, seed: u64) -> Result<Self> {
        if n == 0 || n > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "vertex count must be in [1, {}], got {n}",
                u32::MAX
            )));
        }
        Ok(Self { n, m, law, seed })
    }
}

/// Work counters for one replicate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleStats {
    pub communities: u64,
    /// Sum of truncated community sizes.
    pub vertices_drawn: u64,
    /// Edges emitted, duplicates across communities included.
    pub edges_emitted: u64,
    /// Communities that needed geometric skipping (`x >= 2`, `0 < q < 1`).
    pub skipping_communities: u64,
    /// Raw random draws consumed.
    pub rng_draws: u64,
    /// `sum_i (1 + q_i C(x_i, 2))`.
    pub expected_pair_work: f64,
}

/// Samples replicate `replicate` and returns its component census.
pub fn sample_graph(config: &GraphConfig, replicate: u64) -> ComponentCensus {
    sample_graph_with(config, replicate, &mut |_, _| {}).0
}

/// Like [`sample_graph`], also passing every edge to `observer` and
/// returning work counters.
pub fn sample_graph_with<S: EdgeSink + ?Sized>(
    config: &GraphConfig,
    replicate: u64,
    observer: &mut S,
) -> (ComponentCensus, SampleStats) {
    let n = config.n as u32;
    let mut rng = RandomState::substream(config.seed, replicate);
    let mut dsu = Dsu::new(config.n);
    let mut subsets = SubsetSampler::new();
    let mut stats = SampleStats::default();
    #[cfg(debug_assertions)]
    let mut touched = vec![false; config.n];

    for i in 0..config.m {
        let (x, q) = config.law.sample_pair(i, n as u64, &mut rng);
        let subset = subsets.sample(n, x as u32, &mut rng);
        let emitted = sample_community_edges(subset, q, &mut rng, &mut |u: u32, v: u32| {
            dsu.union_ids(u, v);
            #[cfg(debug_assertions)]
            {
                touched[u as usize] = true;
                touched[v as usize] = true;
            }
            observer.edge(u, v);
        });
        stats.communities += 1;
        stats.vertices_drawn += x;
        stats.edges_emitted += emitted;
        let pairs = x * x.saturating_sub(1) / 2;
        if pairs > 0 && q > 0.0 && q < 1.0 {
            stats.skipping_communities += 1;
        }
        stats.expected_pair_work += 1.0 + q * pairs as f64;
    }
    stats.rng_draws = rng.draws();
    let census = dsu.census();
    #[cfg(debug_assertions)]
    debug_assert_eq!(
        census.y0,
        touched.iter().filter(|t| !**t).count(),
        "singleton components must be exactly the untouched vertices"
    );
    (census, stats)
}

/// Writes the edges of one replicate as `u v` lines.
pub fn dump_edges<W: Write>(
    config: &GraphConfig,
    replicate: u64,
    out: W,
) -> Result<ComponentCensus> {
    let mut out = std::io::BufWriter::new(out);
    let mut failure = None;
    let (census, _) = sample_graph_with(config, replicate, &mut |u: u32, v: u32| {
        if failure.is_none() {
            if let Err(e) = writeln!(out, "{u} {v}") {
                failure = Some(e);
            }
        }
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    out.flush()?;
    Ok(census)
}
