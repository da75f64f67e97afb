use std::collections::HashMap;

use super::report::{AccuracyRow, FrontierRow, Report, SampleSizeRow, SampleSizeSummary, SplitRow};
use super::{r_squared, sample_std, Experiment};
use crate::error::{Error, Result};
use crate::search::Tuning;
use crate::tuner::{CostModel, TuneResult};

/// Smallest holdout split `cmd_validate` accepts.
pub const MIN_HOLDOUT: usize = 100;

/// For each anchor, the cost of the cheapest frontier entry whose modeled recall reaches it.
pub fn auto_budgets(frontier: &[TuneResult], anchors: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = anchors
        .iter()
        .filter_map(|&a| {
            frontier
                .iter()
                .find(|e| e.modeled_recall >= a)
                .or(frontier.last())
                .map(|e| e.modeled_cost)
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Holdout recall per tuning, evaluated once each.
struct RecallCache<'a> {
    exp: &'a Experiment,
    queries: Vec<usize>,
    seen: HashMap<Tuning, f64>,
}

impl<'a> RecallCache<'a> {
    fn new(exp: &'a Experiment, queries: Vec<usize>) -> Self {
        RecallCache {
            exp,
            queries,
            seen: HashMap::new(),
        }
    }

    fn get(&mut self, t: &Tuning) -> Result<f64> {
        if let Some(&r) = self.seen.get(t) {
            return Ok(r);
        }
        let row = self.exp.evaluate(std::slice::from_ref(t), &self.queries, false)?;
        let r = row[0].recall_at_k;
        self.seen.insert(t.clone(), r);
        Ok(r)
    }
}

/// Up to `want` indices spread evenly over `0..len`, both ends included.
fn spread(len: usize, want: usize) -> Vec<usize> {
    match (len, want) {
        (_, 0) | (0, _) => Vec::new(),
        (len, want) if len <= want => (0..len).collect(),
        (len, 1) => vec![len - 1],
        (len, want) => {
            let mut picks: Vec<usize> = (0..want)
                .map(|i| ((i * (len - 1)) as f64 / (want - 1) as f64).round() as usize)
                .collect();
            picks.dedup();
            picks
        }
    }
}

/// Model accuracy, in- vs out-of-sample stability and the sample-size study.
pub fn cmd_validate(exp: &mut Experiment) -> Result<Report> {
    if exp.holdout.len() < MIN_HOLDOUT {
        return Err(Error::InvalidConfig(format!(
            "holdout split has {} queries; at least {MIN_HOLDOUT} are needed",
            exp.holdout.len()
        )));
    }
    if exp.train.len() < 2 {
        return Err(Error::InvalidConfig("train split needs at least two queries".into()));
    }
    let spec = exp.config.validate.clone();
    let stats = exp.time("stats", |e| e.rank_stats(&e.train))?;
    let frontier = exp.time("solve", |e| Ok::<_, Error>(e.tables(&stats)?.pareto_frontier()))?;
    let entries = frontier.entries();

    // Model accuracy over a spread of frontier tunings.
    let picked: Vec<&TuneResult> = spread(entries.len(), spec.frontier_points).into_iter().map(|i| &entries[i]).collect();
    let tunings: Vec<Tuning> = picked.iter().map(|e| e.tuning.clone()).collect();
    let measured = exp.time("accuracy_eval", |e| e.evaluate(&tunings, &e.holdout, true))?;
    let cm = CostModel::from_hierarchy(&exp.hierarchy);
    let n_q = exp.holdout.len() as u128;
    let mut accuracy = Vec::with_capacity(picked.len());
    for (i, (e, row)) in picked.iter().zip(&measured).enumerate() {
        accuracy.push(AccuracyRow {
            tuning_id: i,
            tuning: e.tuning.clone(),
            modeled_cost: e.modeled_cost,
            modeled_bytes: e.modeled_cost * cm.dataset_bytes() as f64,
            measured_bytes: row.bytes_per_query,
            bytes_exact: row.byte_numerator_total == n_q * cm.cost_numerator(&e.tuning)?,
            proxy_recall: e.modeled_recall,
            recall_at_k: row.recall_at_k,
            seconds_per_query: row.seconds_per_query,
        });
    }
    let col = |f: fn(&AccuracyRow) -> f64| accuracy.iter().map(f).collect::<Vec<f64>>();
    let r2_recall = r_squared(&col(|r| r.proxy_recall), &col(|r| r.recall_at_k));
    let r2_bytes = r_squared(&col(|r| r.modeled_bytes), &col(|r| r.measured_bytes));
    let r2_seconds = r_squared(&col(|r| r.modeled_cost), &col(|r| r.seconds_per_query));

    let budgets = if spec.budgets.is_empty() {
        auto_budgets(entries, &spec.recall_anchors)
    } else {
        spec.budgets.clone()
    };
    let started = crate::clock::Stopwatch::start();
    let mut cache = RecallCache::new(exp, exp.holdout.clone());

    // Two halves of the train split, each tuned and evaluated in and out of sample.
    let half = exp.train.len() / 2;
    let (a_idx, b_idx): (Vec<usize>, Vec<usize>) = ((0..half).collect(), (half..2 * half).collect());
    let tables_a = exp.tables(&stats.select(&a_idx)?)?;
    let tables_b = exp.tables(&stats.select(&b_idx)?)?;
    let mut splits = Vec::with_capacity(budgets.len());
    for &budget in &budgets {
        let ta = tables_a.tune_for_cost(budget)?;
        let tb = tables_b.tune_for_cost(budget)?;
        let in_a = exp.evaluate(std::slice::from_ref(&ta.tuning), &exp.train[..half], false)?[0].recall_at_k;
        let in_b = exp.evaluate(std::slice::from_ref(&tb.tuning), &exp.train[half..2 * half], false)?[0].recall_at_k;
        let out_a = cache.get(&ta.tuning)?;
        let out_b = cache.get(&tb.tuning)?;
        splits.push(SplitRow {
            budget,
            tuning_a: ta.tuning,
            tuning_b: tb.tuning,
            cost_a: ta.modeled_cost,
            cost_b: tb.modeled_cost,
            recall_a_in: in_a,
            recall_b_in: in_b,
            recall_a_out: out_a,
            recall_b_out: out_b,
            delta: (out_a - out_b).abs(),
        });
    }

    // Disjoint subsamples of the train split at each size.
    let mut sizes: Vec<usize> = spec.sample_sizes.iter().copied().filter(|&s| s > 0 && s < exp.train.len()).collect();
    sizes.push(exp.train.len());
    sizes.sort_unstable();
    sizes.dedup();
    let mut sample_sizes = Vec::new();
    let mut sample_summary = Vec::new();
    for &size in &sizes {
        let replicas = spec.replicas.max(1).min(exp.train.len() / size);
        let mut per_budget: Vec<Vec<f64>> = vec![Vec::new(); budgets.len()];
        for replica in 0..replicas {
            let sample: Vec<usize> = (replica * size..(replica + 1) * size).collect();
            let tables = exp.tables(&stats.select(&sample)?)?;
            for (b, &budget) in budgets.iter().enumerate() {
                let r = tables.tune_for_cost(budget)?;
                let recall = cache.get(&r.tuning)?;
                per_budget[b].push(recall);
                sample_sizes.push(SampleSizeRow {
                    size,
                    replica,
                    budget,
                    tuning: r.tuning,
                    modeled_cost: r.modeled_cost,
                    recall_at_k: recall,
                });
            }
        }
        for (b, &budget) in budgets.iter().enumerate() {
            let xs = &per_budget[b];
            sample_summary.push(SampleSizeSummary {
                size,
                budget,
                replicas,
                mean_recall: xs.iter().sum::<f64>() / xs.len() as f64,
                std_recall: sample_std(xs),
            });
        }
    }
    drop(cache);
    exp.record("sample_studies", started.seconds());
    let timings = exp.timings.clone();
    Ok(Report {
        frontier: entries.iter().enumerate().map(|(i, r)| FrontierRow::from_result(i, r)).collect(),
        accuracy,
        r2_recall: Some(r2_recall),
        r2_bytes: Some(r2_bytes),
        r2_seconds: Some(r2_seconds),
        splits,
        sample_sizes,
        sample_summary,
        timings,
        ..Report::default()
    })
}
