use super::hull::ConvexLossCurve;
use super::RankStats;
use crate::error::{Error, Result};

/// Pseudo-count standing in for an empty intersection inside the logarithm.
pub const DEFAULT_FLOOR: f64 = 0.5;

/// `-ln(max(hits, floor) / k)`.
#[inline]
pub fn loss_term(hits: usize, k: usize, floor: f64) -> f64 {
    -((hits as f64).max(floor) / k as f64).ln()
}

/// Mean of [`loss_term`] over `n_q` queries given how many queries have each hit count.
pub fn loss_from_histogram(histogram: &[u64], k: usize, floor: f64, n_q: usize) -> f64 {
    let total: f64 = histogram
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(h, &c)| c as f64 * loss_term(h, k, floor))
        .sum();
    total / n_q as f64
}

/// A non-increasing step function on depths `0..=n`, stored at the depths where it changes.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    n: usize,
    depths: Vec<usize>,
    values: Vec<f64>,
}

impl LossCurve {
    /// Steps start at `depths` (first one 0, strictly increasing, all `<= n`).
    pub fn new(n: usize, depths: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if depths.is_empty() || depths.len() != values.len() {
            return Err(Error::invalid("loss curve needs matching, non-empty depth and value lists"));
        }
        if depths[0] != 0 || depths.windows(2).any(|w| w[0] >= w[1]) || *depths.last().unwrap() > n {
            return Err(Error::invalid("loss curve depths must start at 0 and increase up to n"));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("loss curve values must be finite and non-increasing"));
        }
        Ok(LossCurve { n, depths, values })
    }

    /// Dense row `L(0..=n)`.
    pub fn from_dense(row: &[f64]) -> Result<Self> {
        if row.is_empty() {
            return Err(Error::invalid("empty loss row"));
        }
        let mut depths = vec![0];
        let mut values = vec![row[0]];
        for (t, &v) in row.iter().enumerate().skip(1) {
            if v != *values.last().unwrap() {
                depths.push(t);
                values.push(v);
            }
        }
        Self::new(row.len() - 1, depths, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn depths(&self) -> &[usize] {
        &self.depths
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(depth, loss)` at every step start.
    pub fn steps(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.depths.iter().copied().zip(self.values.iter().copied())
    }

    pub fn value_at(&self, t: usize) -> f64 {
        let s = self.depths.partition_point(|&d| d <= t);
        self.values[s - 1]
    }

    pub fn dense(&self) -> Vec<f64> {
        (0..=self.n).map(|t| self.value_at(t)).collect()
    }

    pub fn convexify(&self) -> ConvexLossCurve {
        let mut points: Vec<(usize, f64)> = self.steps().collect();
        if *self.depths.last().unwrap() < self.n {
            points.push((self.n, *self.values.last().unwrap()));
        }
        ConvexLossCurve::lower_hull(&points)
    }
}

/// Loss curves `L[i][t]` for every level, their hulls, and the cost inputs of the index.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    n: usize,
    k: usize,
    n_q: usize,
    floor: f64,
    curves: Vec<LossCurve>,
    hulls: Vec<ConvexLossCurve>,
    footprints: Vec<u64>,
    dataset_bytes: u64,
    hierarchy_hash: String,
}

impl LossMatrix {
    pub(crate) fn from_rank_stats(rs: &RankStats, floor: f64) -> Result<Self> {
        if floor.is_nan() || floor <= 0.0 {
            return Err(Error::invalid(format!("floor must be positive, got {floor}")));
        }
        let (n_q, k, m) = (rs.n_queries(), rs.k(), rs.num_levels());
        if n_q == 0 {
            return Err(Error::invalid("no queries"));
        }
        let curves = (0..m)
            .map(|b| {
                let mut events: Vec<(u32, u32)> = Vec::with_capacity(n_q * k);
                for a in 0..n_q {
                    for (c, &v) in rs.v(a, b).iter().enumerate() {
                        events.push((v + 1, c as u32));
                    }
                }
                events.sort_unstable();
                let mut histogram = vec![0u64; k + 1];
                histogram[0] = n_q as u64;
                let mut depths = vec![0];
                let mut values = vec![loss_from_histogram(&histogram, k, floor, n_q)];
                let mut i = 0;
                while i < events.len() {
                    let depth = events[i].0;
                    while i < events.len() && events[i].0 == depth {
                        let c = events[i].1 as usize;
                        histogram[c] -= 1;
                        histogram[c + 1] += 1;
                        i += 1;
                    }
                    depths.push(depth as usize);
                    values.push(loss_from_histogram(&histogram, k, floor, n_q));
                }
                LossCurve::new(rs.n(), depths, values)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            curves,
            k,
            n_q,
            floor,
            rs.footprints().to_vec(),
            rs.dataset_bytes(),
            rs.hierarchy_hash().to_string(),
        )
    }

    /// Assembles a matrix from per-level curves over a common `n`.
    pub fn new(
        curves: Vec<LossCurve>,
        k: usize,
        n_q: usize,
        floor: f64,
        footprints: Vec<u64>,
        dataset_bytes: u64,
        hierarchy_hash: String,
    ) -> Result<Self> {
        let Some(first) = curves.first() else {
            return Err(Error::invalid("loss matrix needs at least one level"));
        };
        let n = first.n;
        if curves.iter().any(|c| c.n != n) {
            return Err(Error::invalid("loss curves cover different depth ranges"));
        }
        if footprints.len() != curves.len() {
            return Err(Error::invalid(format!(
                "{} footprints for {} levels",
                footprints.len(),
                curves.len()
            )));
        }
        if dataset_bytes == 0 || footprints.contains(&0) {
            return Err(Error::invalid("footprints must be positive"));
        }
        let hulls = curves.iter().map(LossCurve::convexify).collect();
        Ok(LossMatrix {
            n,
            k,
            n_q,
            floor,
            curves,
            hulls,
            footprints,
            dataset_bytes,
            hierarchy_hash,
        })
    }

    pub fn num_levels(&self) -> usize {
        self.curves.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_queries(&self) -> usize {
        self.n_q
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn curve(&self, level: usize) -> &LossCurve {
        &self.curves[level]
    }

    pub fn curves(&self) -> &[LossCurve] {
        &self.curves
    }

    pub fn hull(&self, level: usize) -> &ConvexLossCurve {
        &self.hulls[level]
    }

    pub fn hulls(&self) -> &[ConvexLossCurve] {
        &self.hulls
    }

    /// `L[level][t]`.
    pub fn value(&self, level: usize, t: usize) -> f64 {
        self.curves[level].value_at(t)
    }

    pub fn dense_row(&self, level: usize) -> Vec<f64> {
        self.curves[level].dense()
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
}
