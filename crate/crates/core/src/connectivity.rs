//! Union-find over the vertex set and the component census of a realization.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::{Error, Result};

/// Disjoint-set forest, union by size with path compression.
#[derive(Debug, Clone)]
pub struct Dsu {
    parent: Vec<u32>,
    size: Vec<u32>,
    components: usize,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        assert!(n <= u32::MAX as usize, "vertex count must fit in u32");
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            components: n,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn component_count(&self) -> usize {
        self.components
    }

    fn check(&self, v: usize) -> Result<()> {
        if v >= self.parent.len() {
            return Err(Error::VertexOutOfRange {
                vertex: v,
                n: self.parent.len(),
            });
        }
        Ok(())
    }

    pub fn find(&mut self, v: usize) -> Result<usize> {
        self.check(v)?;
        Ok(self.find_root(v as u32) as usize)
    }

    #[inline]
    fn find_root(&mut self, v: u32) -> u32 {
        let mut root = v;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = v;
        while cur != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    /// Merges the components of `u` and `v`; false if they were already joined.
    pub fn union(&mut self, u: usize, v: usize) -> Result<bool> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.union_ids(u as u32, v as u32))
    }

    #[inline]
    pub(crate) fn union_ids(&mut self, u: u32, v: u32) -> bool {
        let mut a = self.find_root(u);
        let mut b = self.find_root(v);
        if a == b {
            return false;
        }
        if self.size[a as usize] < self.size[b as usize] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b as usize] = a;
        self.size[a as usize] += self.size[b as usize];
        self.components -= 1;
        true
    }

    pub fn census(&mut self) -> ComponentCensus {
        let n = self.parent.len();
        let mut size_histogram = BTreeMap::new();
        for v in 0..n as u32 {
            if self.find_root(v) == v {
                *size_histogram
                    .entry(self.size[v as usize] as usize)
                    .or_insert(0) += 1;
            }
        }
        let largest = size_histogram.keys().next_back().copied().unwrap_or(0);
        let y0 = size_histogram.get(&1).copied().unwrap_or(0);
        ComponentCensus {
            is_connected: self.components == 1,
            component_count: self.components,
            largest,
            y0,
            size_histogram,
        }
    }
}

/// Component structure of one realization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentCensus {
    pub is_connected: bool,
    pub component_count: usize,
    pub largest: usize,
    /// Isolated vertices, i.e. singleton components.
    pub y0: usize,
    /// Component size to number of components of that size.
    pub size_histogram: BTreeMap<usize, usize>,
}
