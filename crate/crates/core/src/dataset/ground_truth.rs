use std::path::Path;

use rayon::prelude::*;

use super::io::{load_ivecs, load_vectors, save_ivecs, save_vectors, VectorFormat};
use super::{Dataset, ElementKind, Metric, QuerySet};
use crate::error::{Error, Result};
use crate::select::smallest_sorted;

/// Exact `k` nearest neighbors for every query, sorted by `(distance, index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    k: usize,
    ids: Vec<u32>,
    distances: Vec<f64>,
}

impl GroundTruth {
    pub fn new(k: usize, ids: Vec<u32>, distances: Vec<f64>) -> Result<Self> {
        if k == 0 || !ids.len().is_multiple_of(k) || ids.len() != distances.len() {
            return Err(Error::invalid("ground truth arrays have inconsistent shapes"));
        }
        Ok(GroundTruth { k, ids, distances })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_queries(&self) -> usize {
        self.ids.len() / self.k
    }

    /// Neighbor indices of query `q`.
    pub fn row(&self, q: usize) -> &[u32] {
        &self.ids[q * self.k..(q + 1) * self.k]
    }

    pub fn distances(&self, q: usize) -> &[f64] {
        &self.distances[q * self.k..(q + 1) * self.k]
    }

    /// Ground truth restricted to the given queries, in order.
    pub fn select(&self, queries: &[usize]) -> Result<Self> {
        let mut ids = Vec::with_capacity(queries.len() * self.k);
        let mut distances = Vec::with_capacity(queries.len() * self.k);
        for &q in queries {
            if q >= self.n_queries() {
                return Err(Error::invalid(format!("query {q} out of range")));
            }
            ids.extend_from_slice(self.row(q));
            distances.extend_from_slice(self.distances(q));
        }
        GroundTruth::new(self.k, ids, distances)
    }

    /// Keeps only the first `k` neighbors of each row.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k {
            return Err(Error::invalid(format!(
                "cannot truncate ground truth of width {} to {k}",
                self.k
            )));
        }
        let mut ids = Vec::with_capacity(self.n_queries() * k);
        let mut distances = Vec::with_capacity(self.n_queries() * k);
        for q in 0..self.n_queries() {
            ids.extend_from_slice(&self.row(q)[..k]);
            distances.extend_from_slice(&self.distances(q)[..k]);
        }
        GroundTruth::new(k, ids, distances)
    }

    /// Writes neighbor ids as `ivecs` and distances (narrowed to `f32`) as `fvecs`.
    pub fn save(&self, ids_path: impl AsRef<Path>, distances_path: impl AsRef<Path>) -> Result<()> {
        let ids: Vec<i32> = self.ids.iter().map(|&i| i as i32).collect();
        save_ivecs(ids_path, &ids, self.k)?;
        let dist: Vec<f32> = self.distances.iter().map(|&d| d as f32).collect();
        let ds = Dataset::from_vec(dist, self.k, ElementKind::F32)?;
        save_vectors(distances_path, &ds, VectorFormat::Fvecs)
    }

    /// Loads ids from `ivecs`, and distances from the sidecar `fvecs` when given (zeros otherwise).
    pub fn load(ids_path: impl AsRef<Path>, distances_path: Option<&Path>) -> Result<Self> {
        let ids_path = ids_path.as_ref();
        let (raw, k) = load_ivecs(ids_path)?;
        let ids = raw
            .into_iter()
            .map(|i| {
                u32::try_from(i).map_err(|_| Error::format(ids_path, format!("negative id {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let distances = match distances_path {
            Some(p) => {
                let ds = load_vectors(p, VectorFormat::Fvecs)?;
                if ds.dim() != k || ds.len() * k != ids.len() {
                    return Err(Error::format(p, "distance sidecar does not match ids"));
                }
                ds.as_slice().iter().map(|&d| d as f64).collect()
            }
            None => vec![0.0; ids.len()],
        };
        GroundTruth::new(k, ids, distances)
    }
}

/// Brute-force `k`-NN of every query. Ties are broken by the smaller datapoint index.
///
/// Parallel over queries; the result does not depend on the thread count.
pub fn compute_ground_truth(
    ds: &Dataset,
    qs: &QuerySet,
    k: usize,
    metric: Metric,
) -> Result<GroundTruth> {
    if k == 0 || k > ds.len() {
        return Err(Error::invalid(format!(
            "k={k} must lie in 1..={} (dataset size)",
            ds.len()
        )));
    }
    qs.check_dim(ds.dim())?;
    let rows: Vec<Vec<(f64, u32)>> = (0..qs.len())
        .into_par_iter()
        .map(|qi| {
            let q = qs.query(qi);
            let mut scored: Vec<(f64, u32)> = ds
                .rows()
                .enumerate()
                .map(|(j, x)| (metric.eval(q, x), j as u32))
                .collect();
            smallest_sorted(&mut scored, k);
            scored.shrink_to_fit();
            scored
        })
        .collect();
    let mut ids = Vec::with_capacity(qs.len() * k);
    let mut distances = Vec::with_capacity(qs.len() * k);
    for row in rows {
        for (d, j) in row {
            ids.push(j);
            distances.push(d);
        }
    }
    GroundTruth::new(k, ids, distances)
}
