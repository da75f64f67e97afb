//! Progressive candidate narrowing over a quantization hierarchy.
//!
//! Level `i` keeps the `t_i` candidates of the previous level with the smallest quantized
//! distance. Ties are broken by datapoint index, including inside a partially consumed
//! centroid bucket, so every candidate set has exactly `t_i` members.

mod bench;
mod recall;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantization::{Grouping, LevelScorer, QuantizationHierarchy, QuantizationLevel};
use crate::select::{by_distance_then_index, retain_smallest, smallest_sorted};

pub use bench::{bench, write_bench_csv, BenchOptions, BenchRow};
pub use recall::{evaluate_recall, RecallReport};

/// Candidate counts `t_1 >= ... >= t_m`, one per level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tuning(Vec<usize>);

impl Tuning {
    pub fn new(t: Vec<usize>) -> Result<Self> {
        if t.is_empty() {
            return Err(Error::invalid("tuning must have at least one level"));
        }
        if t.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid(format!("tuning {t:?} is not non-increasing")));
        }
        Ok(Tuning(t))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Final candidate count `t_m`.
    pub fn last(&self) -> usize {
        *self.0.last().unwrap()
    }

    /// Checks the tuning against a hierarchy and, if given, a recall depth `k`.
    pub fn check(&self, h: &QuantizationHierarchy, k: Option<usize>) -> Result<()> {
        if self.len() != h.num_levels() {
            return Err(Error::invalid(format!(
                "tuning has {} entries for {} levels",
                self.len(),
                h.num_levels()
            )));
        }
        if self.0[0] > h.n() {
            return Err(Error::invalid(format!("t_1={} exceeds n={}", self.0[0], h.n())));
        }
        if let Some(k) = k {
            if self.last() < k {
                return Err(Error::invalid(format!("t_m={} is below k={k}", self.last())));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Tuning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|t| t.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Candidate sets and byte accounting of one search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    /// `Cand_1..Cand_m`, each ascending by index. `Cand_0` is all points.
    pub candidates: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// `Cand_m` ordered by (final-level distance, index).
    pub ids: Vec<u32>,
    pub distances: Vec<f64>,
    /// Points scored per level: `n` at level 1, then `t_{i-1}`.
    pub scored: Vec<usize>,
    pub trace: Option<SearchTrace>,
}

impl SearchResult {
    /// `n` times the bytes read: `sum_i scored_i * |X~(i)|`.
    pub fn byte_numerator(&self, h: &QuantizationHierarchy) -> u128 {
        self.scored
            .iter()
            .zip(h.levels())
            .map(|(&s, l)| s as u128 * l.footprint_bytes() as u128)
            .sum()
    }

    /// Bytes read per level, each a `scored_i / n` share of the level's footprint.
    pub fn bytes_per_level(&self, h: &QuantizationHierarchy) -> Vec<f64> {
        self.scored
            .iter()
            .zip(h.levels())
            .map(|(&s, l)| s as f64 * l.footprint_bytes() as f64 / h.n() as f64)
            .collect()
    }

    pub fn bytes_accessed(&self, h: &QuantizationHierarchy) -> f64 {
        self.byte_numerator(h) as f64 / h.n() as f64
    }
}

fn cmp_dist(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

/// The `t` points nearest under a grouped level, in (distance, index) order, consuming
/// buckets by ascending row distance.
fn consume_buckets(grouping: &Grouping, row_dist: &[f64], t: usize) -> Vec<(f64, u32)> {
    let mut order: Vec<u32> = (0..row_dist.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        cmp_dist(row_dist[a as usize], row_dist[b as usize]).then(a.cmp(&b))
    });
    let mut out = Vec::with_capacity(t);
    let mut i = 0;
    while out.len() < t && i < order.len() {
        let d = row_dist[order[i] as usize];
        let mut j = i + 1;
        while j < order.len() && cmp_dist(row_dist[order[j] as usize], d) == Ordering::Equal {
            j += 1;
        }
        let want = t - out.len();
        if j == i + 1 {
            let members = grouping.members(order[i] as usize);
            out.extend(members.iter().take(want).map(|&p| (d, p)));
        } else {
            let mut merged: Vec<u32> = order[i..j]
                .iter()
                .flat_map(|&r| grouping.members(r as usize).iter().copied())
                .collect();
            merged.sort_unstable();
            out.extend(merged.into_iter().take(want).map(|p| (d, p)));
        }
        i = j;
    }
    out
}

/// All `n` points scored at `level`, narrowed to the `t` smallest. Sorted iff `sorted`.
fn narrow_all(level: &QuantizationLevel, scorer: &mut LevelScorer<'_>, t: usize, sorted: bool) -> Vec<(f64, u32)> {
    if let Some(g) = level.grouping() {
        return consume_buckets(g, &scorer.all_row_distances(), t);
    }
    let mut scored: Vec<(f64, u32)> = (0..level.n()).map(|j| (scorer.distance(j), j as u32)).collect();
    if sorted {
        smallest_sorted(&mut scored, t);
    } else {
        retain_smallest(&mut scored, t);
    }
    scored
}

fn narrow_subset(scorer: &mut LevelScorer<'_>, cands: &[(f64, u32)], t: usize, sorted: bool) -> Vec<(f64, u32)> {
    let mut scored: Vec<(f64, u32)> = cands
        .iter()
        .map(|&(_, j)| (scorer.distance(j as usize), j))
        .collect();
    if sorted {
        smallest_sorted(&mut scored, t);
    } else {
        retain_smallest(&mut scored, t);
    }
    scored
}

/// Searches `h` for `q` with tuning `t`, returning `Cand_m` by final-level distance.
pub fn quantized_search(h: &QuantizationHierarchy, t: &Tuning, q: &[f32], trace: bool) -> Result<SearchResult> {
    t.check(h, None)?;
    if q.len() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: q.len(),
        });
    }
    Ok(search_unchecked(h, t.as_slice(), q, trace))
}

pub(crate) fn search_unchecked(h: &QuantizationHierarchy, t: &[usize], q: &[f32], trace: bool) -> SearchResult {
    let m = h.num_levels();
    let mut scored = Vec::with_capacity(m);
    let mut candidates = trace.then(|| Vec::with_capacity(m));
    let mut current: Vec<(f64, u32)> = Vec::new();
    for (i, level) in h.levels().iter().enumerate() {
        let last = i + 1 == m;
        let mut scorer = level.scorer(q);
        if i == 0 {
            scored.push(h.n());
            current = narrow_all(level, &mut scorer, t[0], last);
        } else {
            scored.push(current.len());
            current = narrow_subset(&mut scorer, &current, t[i], last);
        }
        if let Some(c) = candidates.as_mut() {
            let mut ids: Vec<u32> = current.iter().map(|&(_, j)| j).collect();
            ids.sort_unstable();
            c.push(ids);
        }
    }
    debug_assert!(current.windows(2).all(|w| by_distance_then_index(&w[0], &w[1]) == Ordering::Less));
    let (distances, ids) = current.into_iter().unzip();
    SearchResult {
        ids,
        distances,
        scored,
        trace: candidates.map(|candidates| SearchTrace { candidates }),
    }
}

/// The `depth` points nearest to `q` under `level` alone, in (distance, index) order.
pub fn single_layer_topk(level: &QuantizationLevel, q: &[f32], depth: usize) -> Result<Vec<u32>> {
    if depth > level.n() {
        return Err(Error::invalid(format!("depth {depth} exceeds n={}", level.n())));
    }
    if q.len() != level.dim() {
        return Err(Error::DimensionMismatch {
            expected: level.dim(),
            got: q.len(),
        });
    }
    let mut scorer = level.scorer(q);
    Ok(narrow_all(level, &mut scorer, depth, true)
        .into_iter()
        .map(|(_, j)| j)
        .collect())
}

#[cfg(test)]
mod tests;
