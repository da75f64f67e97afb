//! Lloyd's k-means with k-means++ seeding.
//!
//! Training always uses squared euclidean distance. Assignment runs in parallel over points;
//! centroid sums are accumulated in point order, so results are bit-identical for a given seed
//! regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::l2_sq_f32;
use crate::error::{Error, Result};

/// Members of each cluster, stored as one sorted index list per cluster (CSR layout).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Buckets {
    offsets: Vec<u32>,
    members: Vec<u32>,
}

impl Buckets {
    /// Groups `assignments` (values in `0..clusters`) by cluster, preserving index order.
    pub fn from_assignments(assignments: &[u32], clusters: usize) -> Self {
        let mut offsets = vec![0u32; clusters + 1];
        for &a in assignments {
            offsets[a as usize + 1] += 1;
        }
        for i in 0..clusters {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut members = vec![0u32; assignments.len()];
        for (j, &a) in assignments.iter().enumerate() {
            members[cursor[a as usize] as usize] = j as u32;
            cursor[a as usize] += 1;
        }
        Buckets { offsets, members }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn bucket(&self, i: usize) -> &[u32] {
        &self.members[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    #[inline]
    pub fn size(&self, i: usize) -> usize {
        (self.offsets[i + 1] - self.offsets[i]) as usize
    }
}

/// Result of vector-quantizing a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct VqCodebook {
    dim: usize,
    centroids: Vec<f32>,
    assignments: Vec<u32>,
    buckets: Buckets,
    objective_log: Vec<f64>,
}

impl VqCodebook {
    pub(crate) fn from_parts(dim: usize, centroids: Vec<f32>, assignments: Vec<u32>) -> Self {
        let c = centroids.len() / dim;
        let buckets = Buckets::from_assignments(&assignments, c);
        VqCodebook {
            dim,
            centroids,
            assignments,
            buckets,
            objective_log: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_centroids(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, i: usize) -> &[f32] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// Codeword of every training row.
    pub fn assignments(&self) -> &[u32] {
        &self.assignments
    }

    pub fn buckets(&self) -> &Buckets {
        &self.buckets
    }

    /// Mean squared reconstruction error recorded after every assignment step.
    pub fn objective_log(&self) -> &[f64] {
        &self.objective_log
    }

    /// Mean squared reconstruction error of the final assignment.
    pub fn objective(&self) -> f64 {
        self.objective_log.last().copied().unwrap_or(0.0)
    }

    /// Assigns arbitrary rows to their nearest centroid (ties to the smaller centroid index).
    pub fn assign(&self, data: &[f32]) -> Vec<u32> {
        assign_all(data, self.dim, &self.centroids).0
    }
}

#[inline]
pub(crate) fn nearest(row: &[f32], centroids: &[f32], dim: usize) -> (u32, f32) {
    let mut best = (0u32, f32::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = l2_sq_f32(row, centroid);
        if d < best.1 {
            best = (c as u32, d);
        }
    }
    best
}

fn assign_all(data: &[f32], dim: usize, centroids: &[f32]) -> (Vec<u32>, Vec<f32>) {
    data.par_chunks_exact(dim)
        .map(|row| nearest(row, centroids, dim))
        .unzip()
}

fn mean_objective(dists: &[f32]) -> f64 {
    dists.iter().map(|&d| d as f64).sum::<f64>() / dists.len() as f64
}

fn kmeans_plus_plus(data: &[f32], dim: usize, c: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let rows = data.len() / dim;
    let row = |j: usize| &data[j * dim..(j + 1) * dim];
    let mut chosen = vec![false; rows];
    let mut centroids = Vec::with_capacity(c * dim);

    let first = rng.random_range(0..rows);
    chosen[first] = true;
    centroids.extend_from_slice(row(first));
    let mut weights: Vec<f64> = data
        .par_chunks_exact(dim)
        .map(|x| l2_sq_f32(x, row(first)) as f64)
        .collect();

    for _ in 1..c {
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (j, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    acc += w;
                    pick = Some(j);
                    if acc > target {
                        break;
                    }
                }
            }
            pick.expect("positive total weight implies a positive entry")
        } else {
            // Fewer distinct rows than centroids: fall back to unused rows in index order.
            chosen.iter().position(|&used| !used).unwrap_or(0)
        };
        chosen[pick] = true;
        let new_center = row(pick).to_vec();
        weights
            .par_iter_mut()
            .zip(data.par_chunks_exact(dim))
            .for_each(|(w, x)| {
                let d = l2_sq_f32(x, &new_center) as f64;
                if d < *w {
                    *w = d;
                }
            });
        centroids.extend_from_slice(&new_center);
    }
    centroids
}

/// Trains a `c`-centroid codebook over `data` (row-major, `dim` columns).
///
/// k-means++ initialization from `seed`, then at most `iters` Lloyd iterations, stopping early
/// once assignments stop changing. Empty clusters are re-seeded from the rows farthest from
/// their current centroid.
pub fn train_vq(data: &[f32], dim: usize, c: usize, seed: u64, iters: usize) -> Result<VqCodebook> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::invalid("training data is not a whole number of rows"));
    }
    let rows = data.len() / dim;
    if c == 0 {
        return Err(Error::invalid("centroid count must be positive"));
    }
    if c > rows {
        return Err(Error::invalid(format!(
            "cannot train {c} centroids on {rows} rows"
        )));
    }
    if iters == 0 {
        return Err(Error::invalid("k-means needs at least one iteration"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(data, dim, c, &mut rng);
    let mut log = Vec::with_capacity(iters + 1);
    let (mut assignments, mut dists) = assign_all(data, dim, &centroids);
    log.push(mean_objective(&dists));

    for _ in 0..iters {
        reseed_empty(data, dim, &mut centroids, &mut assignments, &mut dists);
        update_centroids(data, dim, &mut centroids, &assignments);
        let (next, next_dists) = assign_all(data, dim, &centroids);
        let converged = next == assignments;
        assignments = next;
        dists = next_dists;
        log.push(mean_objective(&dists));
        if converged {
            break;
        }
    }

    let mut vq = VqCodebook::from_parts(dim, centroids, assignments);
    vq.objective_log = log;
    Ok(vq)
}

fn reseed_empty(
    data: &[f32],
    dim: usize,
    centroids: &mut [f32],
    assignments: &mut [u32],
    dists: &mut [f32],
) {
    let c = centroids.len() / dim;
    let mut counts = vec![0usize; c];
    for &a in assignments.iter() {
        counts[a as usize] += 1;
    }
    let empties: Vec<usize> = (0..c).filter(|&i| counts[i] == 0).collect();
    for empty in empties {
        // Farthest row from its centroid, ties to the smaller index; skip rows that would
        // leave their own cluster empty.
        let mut far: Option<(usize, f32)> = None;
        for (j, &d) in dists.iter().enumerate() {
            if d > 0.0 && counts[assignments[j] as usize] > 1 && far.is_none_or(|(_, b)| d > b) {
                far = Some((j, d));
            }
        }
        let Some((j, _)) = far else { break };
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&data[j * dim..(j + 1) * dim]);
        counts[assignments[j] as usize] -= 1;
        counts[empty] = 1;
        assignments[j] = empty as u32;
        dists[j] = 0.0;
    }
}

fn update_centroids(data: &[f32], dim: usize, centroids: &mut [f32], assignments: &[u32]) {
    let c = centroids.len() / dim;
    let mut sums = vec![0f64; c * dim];
    let mut counts = vec![0usize; c];
    for (row, &a) in data.chunks_exact(dim).zip(assignments) {
        let a = a as usize;
        counts[a] += 1;
        for (s, &x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(row) {
            *s += x as f64;
        }
    }
    for i in 0..c {
        if counts[i] == 0 {
            continue;
        }
        let inv = 1.0 / counts[i] as f64;
        for t in 0..dim {
            centroids[i * dim + t] = (sums[i * dim + t] * inv) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_cover_when_c_equals_rows() {
        let data = vec![0.0, 0.0, 5.0, 1.0, -3.0, 2.0, 7.0, 7.0];
        let vq = train_vq(&data, 2, 4, 3, 20).unwrap();
        assert_eq!(vq.objective(), 0.0);
        for i in 0..4 {
            assert_eq!(vq.buckets().size(i), 1);
        }
        let mut seen: Vec<u32> = vq.assignments().to_vec();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
    }

    /// Minimum-SSE 2-partition by exhaustive enumeration.
    fn best_two_partition(points: &[[f64; 2]]) -> Vec<bool> {
        let n = points.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << (n - 1)) {
            let side: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            let mut sse = 0.0;
            for s in [false, true] {
                let members: Vec<&[f64; 2]> =
                    points.iter().zip(&side).filter(|(_, &b)| b == s).map(|(p, _)| p).collect();
                let cnt = members.len() as f64;
                let mx = members.iter().map(|p| p[0]).sum::<f64>() / cnt;
                let my = members.iter().map(|p| p[1]).sum::<f64>() / cnt;
                sse += members.iter().map(|p| (p[0] - mx).powi(2) + (p[1] - my).powi(2)).sum::<f64>();
            }
            if sse < best.0 {
                best = (sse, side);
            }
        }
        best.1
    }

    #[test]
    fn separated_clusters_match_exhaustive_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut points = Vec::new();
        for i in 0..12 {
            let center = if i % 2 == 0 { [0.0, 0.0] } else { [10.0, 4.0] };
            points.push([center[0] + noise.sample(&mut rng), center[1] + noise.sample(&mut rng)]);
        }
        let oracle = best_two_partition(&points);
        let data: Vec<f32> = points.iter().flat_map(|p| [p[0] as f32, p[1] as f32]).collect();
        let vq = train_vq(&data, 2, 2, 9, 20).unwrap();
        let a = vq.assignments();
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(a[i] == a[j], oracle[i] == oracle[j]);
            }
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f32> = (0..300 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = train_vq(&data, 5, 12, 77, 10).unwrap();
        let b = train_vq(&data, 5, 12, 77, 10).unwrap();
        assert_eq!(a, b);
        let c = train_vq(&data, 5, 12, 78, 10).unwrap();
        assert_ne!(a.centroids(), c.centroids());
    }

    #[test]
    fn objective_non_increasing_and_assignment_is_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f32> = (0..800 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let vq = train_vq(&data, 6, 25, 4, 30).unwrap();
        let log = vq.objective_log();
        assert!(log.len() >= 2);
        for w in log.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-6), "objective increased: {log:?}");
        }
        for (j, row) in data.chunks_exact(6).enumerate() {
            assert_eq!(nearest(row, vq.centroids(), 6).0, vq.assignments()[j]);
        }
        let total: usize = (0..25).map(|i| vq.buckets().size(i)).sum();
        assert_eq!(total, 800);
        for i in 0..25 {
            assert!(vq.buckets().bucket(i).windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn duplicate_rows_still_train() {
        let data = vec![1.0f32; 10 * 3];
        let vq = train_vq(&data, 3, 4, 0, 5).unwrap();
        assert_eq!(vq.num_centroids(), 4);
        assert_eq!(vq.objective(), 0.0);
    }

    #[test]
    fn argument_errors() {
        let data = vec![0.0f32; 6];
        assert!(train_vq(&data, 2, 0, 0, 1).is_err());
        assert!(train_vq(&data, 2, 4, 0, 1).is_err());
        assert!(train_vq(&data, 2, 2, 0, 0).is_err());
    }
}
