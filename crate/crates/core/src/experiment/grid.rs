use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::report::{FrontierRow, ParityRow, Report};
use super::Experiment;
use crate::error::{Error, Result};
use crate::search::Tuning;

/// Grids larger than this are refused.
pub const MAX_GRID_CELLS: u128 = 100_000;

/// Candidate depths per level; only non-increasing tuples are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub levels: Vec<Vec<usize>>,
    /// Time every cell (warmup plus median of 5) instead of a single recall pass.
    #[serde(default)]
    pub timed: bool,
}

fn sorted_levels(spec: &GridSpec) -> Vec<Vec<usize>> {
    spec.levels
        .iter()
        .map(|v| {
            let mut v = v.clone();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect()
}

/// Number of non-increasing tuples with every entry in its level's list and the last `>= t_min`.
pub fn count_monotone(spec: &GridSpec, t_min: usize) -> u128 {
    let levels = sorted_levels(spec);
    let Some(last) = levels.last() else { return 0 };
    // ways[j]: completions from the current level when it takes its j-th value.
    let mut ways: Vec<u128> = last.iter().map(|&v| u128::from(v >= t_min)).collect();
    let mut values = last.clone();
    for level in levels.iter().rev().skip(1) {
        let mut prefix = vec![0u128; values.len() + 1];
        for (j, w) in ways.iter().enumerate() {
            prefix[j + 1] = prefix[j] + w;
        }
        ways = level
            .iter()
            .map(|&v| prefix[values.partition_point(|&u| u <= v)])
            .collect();
        values = level.clone();
    }
    ways.iter().sum()
}

/// Every monotone grid tuning, for a hierarchy of `m` levels over `n` points.
pub fn enumerate_grid(spec: &GridSpec, m: usize, n: usize, t_min: usize) -> Result<Vec<Tuning>> {
    if spec.levels.len() != m {
        return Err(Error::InvalidConfig(format!(
            "grid has {} dimensions for a {m}-level hierarchy",
            spec.levels.len()
        )));
    }
    let levels = sorted_levels(spec);
    if let Some(&bad) = levels.iter().flatten().find(|&&v| v > n) {
        return Err(Error::InvalidConfig(format!("grid depth {bad} exceeds n={n}")));
    }
    let cells = count_monotone(spec, t_min);
    if cells > MAX_GRID_CELLS {
        return Err(Error::InvalidConfig(format!(
            "grid has {cells} monotone cells; the limit is {MAX_GRID_CELLS}"
        )));
    }
    if cells == 0 {
        return Err(Error::InvalidConfig("grid has no monotone cells".into()));
    }
    let mut out = Vec::with_capacity(cells as usize);
    let mut t = vec![0; m];
    fn walk(l: usize, upper: usize, t_min: usize, levels: &[Vec<usize>], t: &mut Vec<usize>, out: &mut Vec<Tuning>) {
        if l == levels.len() {
            out.push(Tuning::new(t.clone()).expect("monotone by construction"));
            return;
        }
        let floor = if l + 1 == levels.len() { t_min } else { 0 };
        for &v in levels[l].iter().rev().filter(|&&v| v <= upper && v >= floor) {
            t[l] = v;
            walk(l + 1, v, t_min, levels, t, out);
        }
    }
    walk(0, usize::MAX, t_min, &levels, &mut t, &mut out);
    Ok(out)
}

/// Indices of points no other point beats on both axes (lower cost, higher recall), by cost.
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a].0.total_cmp(&points[b].0).then(points[b].1.total_cmp(&points[a].1)).then(a.cmp(&b))
    });
    let mut best = f64::NEG_INFINITY;
    let mut out = Vec::new();
    for i in order {
        if points[i].1 > best {
            best = points[i].1;
            out.push(i);
        }
    }
    out
}

/// Evaluates every grid tuning and compares the grid's empirical Pareto points against the
/// tuner's choice at the same or lower modeled cost.
pub fn cmd_grid(exp: &mut Experiment) -> Result<Report> {
    let spec = exp
        .config
        .grid
        .clone()
        .ok_or_else(|| Error::InvalidConfig("no grid section in the experiment config".into()))?;
    let h = &exp.hierarchy;
    let tunings = enumerate_grid(&spec, h.num_levels(), h.n(), exp.config.t_min())?;
    let eval: Vec<usize> = if exp.holdout.is_empty() {
        exp.train.clone()
    } else {
        exp.holdout.clone()
    };
    let stats = exp.time("stats", |e| e.rank_stats(&e.train))?;
    let (tables, frontier) = exp.time("solve", |e| {
        let tables = e.tables(&stats)?;
        let frontier = tables.pareto_frontier();
        Ok::<_, Error>((tables, frontier))
    })?;
    let grid = exp.time("grid_eval", |e| e.evaluate(&tunings, &eval, spec.timed))?;
    let points: Vec<(f64, f64)> = grid.iter().map(|r| (r.modeled_cost, r.recall_at_k)).collect();
    let pareto = pareto_indices(&points);

    let mut chosen = Vec::with_capacity(pareto.len());
    for &p in &pareto {
        chosen.push(tables.tune_for_cost(grid[p].modeled_cost)?);
    }
    let mut unique: Vec<Tuning> = Vec::new();
    for c in &chosen {
        if !unique.contains(&c.tuning) {
            unique.push(c.tuning.clone());
        }
    }
    let tuner_rows = exp.time("tuner_eval", |e| e.evaluate(&unique, &eval, false))?;
    let recall: HashMap<&Tuning, f64> = tuner_rows.iter().map(|r| (&r.tuning, r.recall_at_k)).collect();
    let parity = pareto
        .iter()
        .zip(&chosen)
        .map(|(&p, c)| {
            let tuner_recall = recall[&c.tuning];
            ParityRow {
                grid_id: grid[p].tuning_id,
                grid_tuning: grid[p].tuning.clone(),
                grid_cost: grid[p].modeled_cost,
                grid_recall: grid[p].recall_at_k,
                tuner_tuning: c.tuning.clone(),
                tuner_cost: c.modeled_cost,
                tuner_recall,
                recall_gap: grid[p].recall_at_k - tuner_recall,
            }
        })
        .collect();
    Ok(Report {
        frontier: frontier.entries().iter().enumerate().map(|(i, r)| FrontierRow::from_result(i, r)).collect(),
        grid_pareto: pareto.iter().map(|&p| grid[p].tuning_id).collect(),
        grid,
        parity,
        timings: exp.timings.clone(),
        ..Report::default()
    })
}
