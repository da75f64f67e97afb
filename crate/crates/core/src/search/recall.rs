use serde::Serialize;

use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::stats::{loss_from_histogram, DEFAULT_FLOOR};

/// Recall@k per query and aggregated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallReport {
    pub k: usize,
    /// Ground-truth neighbors found in each query's top `k`.
    pub hits: Vec<usize>,
    pub per_query: Vec<f64>,
    pub mean: f64,
    /// `exp(-mean(-ln(max(hits, floor) / k)))`, with the recall-loss floor.
    pub geometric_mean: f64,
}

/// Scores the first `k` entries of each result list against the first `k` ground-truth ids.
pub fn evaluate_recall(results: &[Vec<u32>], gt: &GroundTruth, k: usize) -> Result<RecallReport> {
    if k == 0 || k > gt.k() {
        return Err(Error::invalid(format!(
            "recall@{k} needs 1 <= k <= ground-truth depth {}",
            gt.k()
        )));
    }
    if results.len() != gt.n_queries() {
        return Err(Error::invalid(format!(
            "{} result lists for {} queries",
            results.len(),
            gt.n_queries()
        )));
    }
    let hits: Vec<usize> = results
        .iter()
        .enumerate()
        .map(|(q, r)| {
            let truth = &gt.row(q)[..k];
            r.iter().take(k).filter(|id| truth.contains(id)).count()
        })
        .collect();
    let per_query: Vec<f64> = hits.iter().map(|&h| h as f64 / k as f64).collect();
    let mut histogram = vec![0u64; k + 1];
    for &h in &hits {
        histogram[h] += 1;
    }
    let n_q = hits.len();
    let mean = if n_q == 0 {
        0.0
    } else {
        histogram
            .iter()
            .enumerate()
            .map(|(h, &c)| c as f64 * h as f64)
            .sum::<f64>()
            / (n_q * k) as f64
    };
    let geometric_mean = if n_q == 0 {
        0.0
    } else {
        (-loss_from_histogram(&histogram, k, DEFAULT_FLOOR, n_q)).exp()
    };
    Ok(RecallReport {
        k,
        hits,
        per_query,
        mean,
        geometric_mean,
    })
}
