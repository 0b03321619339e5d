//! Databases, histograms and heavy-hitter bookkeeping shared by every mechanism.
//!
//! Universe elements are 0-based. The CLI accepts and prints the same 0-based
//! indices.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{invalid, Error, Result};

/// Above this universe size histograms are stored as an index -> count map.
pub const DENSE_LIMIT: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UniverseIndex(pub u64);

impl UniverseIndex {
    pub fn checked(value: u64, universe: u64) -> Result<Self> {
        if value < universe {
            Ok(Self(value))
        } else {
            Err(Error::OutOfRange { element: value, universe })
        }
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for UniverseIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Validates a universe size (`N >= 2`).
pub fn check_universe(universe: u64) -> Result<()> {
    if universe < 2 {
        return Err(invalid(format!("universe size must be at least 2, got {universe}")));
    }
    Ok(())
}

/// One individual's private datum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientRecord {
    pub owner: usize,
    pub element: UniverseIndex,
}

impl ClientRecord {
    pub fn new(owner: usize, element: u64) -> Self {
        Self { owner, element: UniverseIndex(element) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Counts {
    Dense(Vec<u64>),
    Sparse(BTreeMap<u64, u64>),
}

/// Aggregate count vector `v` over a universe of size `N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    universe: u64,
    total: u64,
    counts: Counts,
}

impl Histogram {
    pub fn empty(universe: u64) -> Self {
        let counts = if universe <= DENSE_LIMIT {
            Counts::Dense(vec![0; universe as usize])
        } else {
            Counts::Sparse(BTreeMap::new())
        };
        Self { universe, total: 0, counts }
    }

    /// Builds a histogram from explicit per-element counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let mut h = Self::empty(counts.len() as u64);
        for (i, &c) in counts.iter().enumerate() {
            h.add(i as u64, c)?;
        }
        Ok(h)
    }

    fn add(&mut self, element: u64, by: u64) -> Result<()> {
        if element >= self.universe {
            return Err(Error::OutOfRange { element, universe: self.universe });
        }
        if by == 0 {
            return Ok(());
        }
        match &mut self.counts {
            Counts::Dense(v) => v[element as usize] += by,
            Counts::Sparse(m) => *m.entry(element).or_insert(0) += by,
        }
        self.total += by;
        Ok(())
    }

    pub fn universe(&self) -> u64 {
        self.universe
    }

    /// Total number of records `n`.
    pub fn n(&self) -> u64 {
        self.total
    }

    pub fn count(&self, element: u64) -> u64 {
        match &self.counts {
            Counts::Dense(v) => v.get(element as usize).copied().unwrap_or(0),
            Counts::Sparse(m) => m.get(&element).copied().unwrap_or(0),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.counts, Counts::Sparse(_))
    }

    /// `(element, count)` pairs with non-zero count, in increasing element order.
    pub fn nonzero(&self) -> Box<dyn Iterator<Item = (u64, u64)> + '_> {
        match &self.counts {
            Counts::Dense(v) => Box::new(
                v.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i as u64, c)),
            ),
            Counts::Sparse(m) => Box::new(m.iter().filter(|(_, &c)| c > 0).map(|(&i, &c)| (i, c))),
        }
    }

    /// Dense copy of the counts. Only sensible for small universes.
    pub fn to_dense(&self) -> Vec<u64> {
        (0..self.universe).map(|i| self.count(i)).collect()
    }

    /// Counts sorted in decreasing order, zeros omitted.
    pub fn sorted_counts(&self) -> Vec<u64> {
        let mut c: Vec<u64> = self.nonzero().map(|(_, c)| c).collect();
        c.sort_unstable_by(|a, b| b.cmp(a));
        c
    }
}

/// `v = sum_i v^i`.
pub fn build_histogram(records: &[ClientRecord], universe: u64) -> Result<Histogram> {
    let mut h = Histogram::empty(universe);
    for r in records {
        h.add(r.element.0, 1)?;
    }
    Ok(h)
}

/// `hh(v)` and `fhh(v)`; ties go to the lowest index.
pub fn heavy_hitter(h: &Histogram) -> Result<(UniverseIndex, u64)> {
    if h.n() == 0 {
        return Err(Error::EmptyHistogram);
    }
    let mut best = (0u64, 0u64);
    for (i, c) in h.nonzero() {
        if c > best.1 {
            best = (i, c);
        }
    }
    Ok((UniverseIndex(best.0), best.1))
}

/// `fhh(v) - v[reported]`.
pub fn accuracy_deficit(h: &Histogram, reported: UniverseIndex) -> Result<u64> {
    if reported.0 >= h.universe() {
        return Err(Error::OutOfRange { element: reported.0, universe: h.universe() });
    }
    let fhh = match heavy_hitter(h) {
        Ok((_, c)) => c,
        Err(Error::EmptyHistogram) => 0,
        Err(e) => return Err(e),
    };
    Ok(fhh - h.count(reported.0))
}

/// Outcome of a heavy-hitter mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct HeavyHitterResult {
    pub index: UniverseIndex,
    /// The mechanism's own count estimate, if it produces one.
    pub reported_count: Option<f64>,
    /// `fhh(v) - v[index]`, filled in when the true histogram is known.
    pub true_deficit: Option<u64>,
}

impl HeavyHitterResult {
    pub fn new(index: UniverseIndex, reported_count: Option<f64>) -> Self {
        Self { index, reported_count, true_deficit: None }
    }

    pub fn with_truth(mut self, h: &Histogram) -> Result<Self> {
        self.true_deficit = Some(accuracy_deficit(h, self.index)?);
        Ok(self)
    }
}

/// `(alpha, beta)` accuracy target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyParams {
    pub alpha: f64,
    pub beta: f64,
}

impl AccuracyParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(invalid(format!("alpha must be non-negative, got {alpha}")));
        }
        check_beta(beta)?;
        Ok(Self { alpha, beta })
    }

    /// Whether `reported` meets the accuracy target on `h`.
    pub fn satisfied_by(&self, h: &Histogram, reported: UniverseIndex) -> Result<bool> {
        Ok(accuracy_deficit(h, reported)? as f64 <= self.alpha)
    }
}

pub fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("beta must lie in (0, 1), got {beta}")));
    }
    Ok(())
}
