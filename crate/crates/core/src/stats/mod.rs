//! Per-level recall-loss curves from a query sample.
//!
//! For each query `a` and level `b`, `U[a][b]` holds the level-`b` distances to the `k` true
//! neighbors, sorted by (distance, id), and `V[a][b][c]` counts the points that precede the
//! `c`-th of them in (distance, index) order. A single-layer candidate set of depth `t` then
//! contains exactly `#{c : V[a][b][c] < t}` true neighbors, so every depth is covered by
//! `k` counts per query and level.

mod hull;
mod loss;
mod persist;

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::dataset::{GroundTruth, QuerySet};
use crate::error::{Error, Result};
use crate::quantization::{QuantizationHierarchy, QuantizationLevel};

pub use hull::{convexify, proxy_recall, ConvexLossCurve};
pub use loss::{loss_from_histogram, loss_term, LossCurve, LossMatrix, DEFAULT_FLOOR};
pub use persist::StatsManifest;

/// Ground-truth distances per (query, level), each row sorted by (distance, id).
#[derive(Debug, Clone, PartialEq)]
pub struct UTensor {
    n_q: usize,
    m: usize,
    k: usize,
    dist: Vec<f64>,
    ids: Vec<u32>,
}

impl UTensor {
    pub fn n_queries(&self) -> usize {
        self.n_q
    }

    pub fn num_levels(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn offset(&self, a: usize, b: usize) -> usize {
        (a * self.m + b) * self.k
    }

    pub fn distances(&self, a: usize, b: usize) -> &[f64] {
        let o = self.offset(a, b);
        &self.dist[o..o + self.k]
    }

    pub fn ids(&self, a: usize, b: usize) -> &[u32] {
        let o = self.offset(a, b);
        &self.ids[o..o + self.k]
    }
}

/// Level distances of every query's first `k` ground-truth neighbors.
pub fn compute_u(h: &QuantizationHierarchy, qs: &QuerySet, gt: &GroundTruth, k: usize) -> Result<UTensor> {
    qs.check_dim(h.dim())?;
    if gt.n_queries() != qs.len() {
        return Err(Error::invalid(format!(
            "ground truth covers {} queries, query set has {}",
            gt.n_queries(),
            qs.len()
        )));
    }
    if k == 0 || k > gt.k() {
        return Err(Error::invalid(format!("k={k} must lie in 1..={}", gt.k())));
    }
    if gt.row(0).iter().any(|&id| id as usize >= h.n()) {
        return Err(Error::invalid("ground truth refers to points outside the hierarchy"));
    }
    let m = h.num_levels();
    let rows: Vec<Vec<(f64, u32)>> = (0..qs.len())
        .into_par_iter()
        .flat_map_iter(|a| {
            let q = qs.query(a);
            let g = &gt.row(a)[..k];
            h.levels().iter().map(move |level| {
                let mut scorer = level.scorer(q);
                let mut row: Vec<(f64, u32)> = g.iter().map(|&j| (scorer.distance(j as usize), j)).collect();
                row.sort_by(crate::select::by_distance_then_index);
                row
            })
        })
        .collect();
    let mut dist = Vec::with_capacity(qs.len() * m * k);
    let mut ids = Vec::with_capacity(qs.len() * m * k);
    for row in rows {
        for (d, j) in row {
            dist.push(d);
            ids.push(j);
        }
    }
    Ok(UTensor {
        n_q: qs.len(),
        m,
        k,
        dist,
        ids,
    })
}

fn less(a: (f64, u32), b: (f64, u32)) -> bool {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) == Ordering::Less
}

/// `V[c] = #{j : (D_j, j) < (U_c, g_c)}` for one query and level.
fn rank_counts(level: &QuantizationLevel, q: &[f32], u: &[f64], g: &[u32]) -> Vec<u32> {
    let k = u.len();
    let scorer = level.scorer(q);
    // below[p]: points that precede targets p.. but not p-1.
    let mut below = vec![0i64; k + 1];
    match level.grouping() {
        Some(grouping) => {
            for (r, d) in scorer.all_row_distances().into_iter().enumerate() {
                let members = grouping.members(r);
                if members.is_empty() {
                    continue;
                }
                let lo = u.partition_point(|&x| x.total_cmp(&d) == Ordering::Less);
                let hi = u.partition_point(|&x| x.total_cmp(&d) != Ordering::Greater);
                below[hi] += members.len() as i64;
                // Equal distances: members with a smaller index precede the target.
                for c in lo..hi {
                    let ahead = members.partition_point(|&j| j < g[c]) as i64;
                    below[c] += ahead;
                    below[c + 1] -= ahead;
                }
            }
        }
        None => {
            for j in 0..level.n() {
                let d = scorer.row_distance(j);
                let (mut lo, mut hi) = (0, k);
                while lo < hi {
                    let c = (lo + hi) / 2;
                    if less((d, j as u32), (u[c], g[c])) {
                        hi = c;
                    } else {
                        lo = c + 1;
                    }
                }
                let p = lo;
                below[p] += 1;
            }
        }
    }
    let mut acc = 0i64;
    below[..k]
        .iter()
        .map(|&b| {
            acc += b;
            acc as u32
        })
        .collect()
}

/// Rank counts for a query pool, reusable for any subset of it.
#[derive(Debug, Clone, PartialEq)]
pub struct RankStats {
    u: UTensor,
    v: Vec<u32>,
    n: usize,
    footprints: Vec<u64>,
    dataset_bytes: u64,
    hierarchy_hash: String,
}

/// Rank counts for every (query, level, neighbor) of `u`.
pub fn compute_v(u: UTensor, h: &QuantizationHierarchy, qs: &QuerySet) -> Result<RankStats> {
    qs.check_dim(h.dim())?;
    if u.n_q != qs.len() || u.m != h.num_levels() {
        return Err(Error::invalid("U does not match the hierarchy and query set"));
    }
    let m = u.m;
    let v: Vec<u32> = (0..u.n_q * m)
        .into_par_iter()
        .flat_map_iter(|ab| {
            let (a, b) = (ab / m, ab % m);
            rank_counts(h.level(b), qs.query(a), u.distances(a, b), u.ids(a, b))
        })
        .collect();
    Ok(RankStats {
        u,
        v,
        n: h.n(),
        footprints: h.footprints(),
        dataset_bytes: h.dataset_bytes(),
        hierarchy_hash: h.content_hash(),
    })
}

impl RankStats {
    /// `compute_u` followed by `compute_v`.
    pub fn compute(h: &QuantizationHierarchy, qs: &QuerySet, gt: &GroundTruth, k: usize) -> Result<Self> {
        let started = crate::clock::Stopwatch::start();
        let u = compute_u(h, qs, gt, k)?;
        let stats = compute_v(u, h, qs)?;
        log::info!(
            "rank statistics for {} queries x {} levels in {:.2}s",
            qs.len(),
            h.num_levels(),
            started.seconds()
        );
        Ok(stats)
    }

    /// Statistics from rank counts alone, laid out `[query][level][neighbor]`. `U` is left
    /// unpopulated (NaN distances).
    pub fn from_rank_counts(
        n: usize,
        k: usize,
        m: usize,
        v: Vec<u32>,
        footprints: Vec<u64>,
        dataset_bytes: u64,
    ) -> Result<Self> {
        if k == 0 || m == 0 || !v.len().is_multiple_of(m * k) {
            return Err(Error::invalid("rank counts are not a whole number of m x k blocks"));
        }
        for row in v.chunks_exact(k) {
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&x| x as usize >= n) {
                return Err(Error::invalid(format!("rank row {row:?} must increase strictly below n={n}")));
            }
        }
        if footprints.len() != m {
            return Err(Error::invalid("one footprint per level required"));
        }
        let n_q = v.len() / (m * k);
        Ok(RankStats {
            u: UTensor {
                n_q,
                m,
                k,
                dist: vec![f64::NAN; v.len()],
                ids: vec![u32::MAX; v.len()],
            },
            v,
            n,
            footprints,
            dataset_bytes,
            hierarchy_hash: String::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.u.k
    }

    pub fn n_queries(&self) -> usize {
        self.u.n_q
    }

    pub fn num_levels(&self) -> usize {
        self.u.m
    }

    pub fn u(&self) -> &UTensor {
        &self.u
    }

    pub fn v(&self, a: usize, b: usize) -> &[u32] {
        let o = self.u.offset(a, b);
        &self.v[o..o + self.u.k]
    }

    pub fn footprints(&self) -> &[u64] {
        &self.footprints
    }

    pub fn dataset_bytes(&self) -> u64 {
        self.dataset_bytes
    }

    pub fn hierarchy_hash(&self) -> &str {
        &self.hierarchy_hash
    }

    /// Statistics restricted to `queries` (in the given order).
    pub fn select(&self, queries: &[usize]) -> Result<Self> {
        let (m, k) = (self.u.m, self.u.k);
        let mut dist = Vec::with_capacity(queries.len() * m * k);
        let mut ids = Vec::with_capacity(queries.len() * m * k);
        let mut v = Vec::with_capacity(queries.len() * m * k);
        for &a in queries {
            if a >= self.u.n_q {
                return Err(Error::invalid(format!("query {a} out of range 0..{}", self.u.n_q)));
            }
            let o = self.u.offset(a, 0);
            dist.extend_from_slice(&self.u.dist[o..o + m * k]);
            ids.extend_from_slice(&self.u.ids[o..o + m * k]);
            v.extend_from_slice(&self.v[o..o + m * k]);
        }
        Ok(RankStats {
            u: UTensor {
                n_q: queries.len(),
                m,
                k,
                dist,
                ids,
            },
            v,
            ..self.clone_meta()
        })
    }

    fn clone_meta(&self) -> Self {
        RankStats {
            u: UTensor {
                n_q: 0,
                m: self.u.m,
                k: self.u.k,
                dist: Vec::new(),
                ids: Vec::new(),
            },
            v: Vec::new(),
            n: self.n,
            footprints: self.footprints.clone(),
            dataset_bytes: self.dataset_bytes,
            hierarchy_hash: self.hierarchy_hash.clone(),
        }
    }

    /// True neighbors of query `a` inside the depth-`t` single-layer candidates of level `b`.
    pub fn hits(&self, a: usize, b: usize, t: usize) -> usize {
        self.v(a, b).partition_point(|&x| (x as usize) < t)
    }

    /// Loss curves of all levels.
    pub fn loss_matrix(&self, floor: f64) -> Result<LossMatrix> {
        LossMatrix::from_rank_stats(self, floor)
    }
}

#[cfg(test)]
mod tests;
