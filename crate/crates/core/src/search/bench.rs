use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{search_unchecked, Tuning};
use crate::dataset::{GroundTruth, QuerySet};
use crate::error::{Error, Result};
use crate::quantization::QuantizationHierarchy;
use crate::tuner::CostModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
    /// Timed passes over the query set; the median is reported.
    pub repeats: usize,
    pub warmup: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            threads: 0,
            repeats: 5,
            warmup: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub tuning_id: usize,
    pub tuning: Tuning,
    pub modeled_cost: f64,
    pub bytes_per_query: f64,
    /// `n * n_q` times the mean bytes per query, as an exact integer.
    #[serde(skip)]
    pub byte_numerator_total: u128,
    pub recall_at_k: f64,
    pub recall_geometric: f64,
    pub seconds_per_query: f64,
    pub qps: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Runs every tuning over `qs`, measuring recall@k, instrumented bytes and wall time.
pub fn bench(
    h: &QuantizationHierarchy,
    tunings: &[Tuning],
    qs: &QuerySet,
    gt: &GroundTruth,
    k: usize,
    opts: BenchOptions,
) -> Result<Vec<BenchRow>> {
    qs.check_dim(h.dim())?;
    if gt.n_queries() != qs.len() {
        return Err(Error::invalid("ground truth and query set sizes differ"));
    }
    if qs.is_empty() {
        return Err(Error::invalid("empty query set"));
    }
    for t in tunings {
        t.check(h, Some(k))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let cm = CostModel::from_hierarchy(h);
    let n_q = qs.len();
    let mut rows = Vec::with_capacity(tunings.len());
    for (tuning_id, t) in tunings.iter().enumerate() {
        let run = || {
            pool.install(|| {
                (0..n_q)
                    .into_par_iter()
                    .map(|i| search_unchecked(h, t.as_slice(), qs.query(i), false))
                    .collect::<Vec<_>>()
            })
        };
        if opts.warmup {
            run();
        }
        let mut times = Vec::with_capacity(opts.repeats.max(1));
        let mut results = Vec::new();
        for _ in 0..opts.repeats.max(1) {
            let started = crate::clock::Stopwatch::start();
            results = run();
            times.push(started.seconds());
        }
        let byte_numerator_total: u128 = results.iter().map(|r| r.byte_numerator(h)).sum();
        let ids: Vec<Vec<u32>> = results.into_iter().map(|r| r.ids).collect();
        let recall = super::evaluate_recall(&ids, gt, k)?;
        let seconds_per_query = median(times) / n_q as f64;
        rows.push(BenchRow {
            tuning_id,
            tuning: t.clone(),
            modeled_cost: cm.cost(t)?,
            bytes_per_query: byte_numerator_total as f64 / (n_q as f64 * h.n() as f64),
            byte_numerator_total,
            recall_at_k: recall.mean,
            recall_geometric: recall.geometric_mean,
            seconds_per_query,
            qps: if seconds_per_query > 0.0 { 1.0 / seconds_per_query } else { f64::INFINITY },
        });
    }
    Ok(rows)
}

/// Writes `tuning_id,t_1..t_m,modeled_cost,bytes_per_query,recall_at_k,qps,recall_geometric`.
pub fn write_bench_csv(mut out: impl Write, rows: &[BenchRow]) -> std::io::Result<()> {
    let m = rows.first().map_or(0, |r| r.tuning.len());
    let t_cols: Vec<String> = (1..=m).map(|i| format!("t_{i}")).collect();
    writeln!(
        out,
        "tuning_id,{},modeled_cost,bytes_per_query,recall_at_k,qps,recall_geometric",
        t_cols.join(",")
    )?;
    for r in rows {
        let ts: Vec<String> = r.tuning.as_slice().iter().map(|t| t.to_string()).collect();
        writeln!(
            out,
            "{},{},{:.9e},{:.6},{:.6},{:.3},{:.6}",
            r.tuning_id,
            ts.join(","),
            r.modeled_cost,
            r.bytes_per_query,
            r.recall_at_k,
            r.qps,
            r.recall_geometric
        )?;
    }
    Ok(())
}
