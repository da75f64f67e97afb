use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use super::cost::CostModel;
use super::solver::LagrangianTables;
use crate::error::{Error, Result};
use crate::search::Tuning;
use crate::stats::ConvexLossCurve;

const MAX_REFINEMENTS: usize = 200;

/// A tuning with its multiplier and modeled loss, cost and recall.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub lambda: f64,
    pub tuning: Tuning,
    /// `sum_i hull_i(t_i)`.
    pub loss: f64,
    pub modeled_cost: f64,
    /// `exp(-loss)`.
    pub modeled_recall: f64,
}

impl Serialize for TuneResult {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("TuneResult", 5)?;
        st.serialize_field("lambda", &self.lambda)?;
        st.serialize_field("t", self.tuning.as_slice())?;
        st.serialize_field("modeled_cost", &self.modeled_cost)?;
        st.serialize_field("modeled_recall", &self.modeled_recall)?;
        st.serialize_field("loss", &self.loss)?;
        st.end()
    }
}

/// Non-dominated tunings sorted by increasing cost (and so strictly decreasing loss).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ParetoFrontier {
    entries: Vec<TuneResult>,
}

impl ParetoFrontier {
    pub fn entries(&self) -> &[TuneResult] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lowest-loss entry with cost at most `j_max`.
    pub fn best_within(&self, j_max: f64) -> Option<&TuneResult> {
        self.entries.iter().rev().find(|e| e.modeled_cost <= j_max)
    }
}

pub(super) fn candidate_lambdas(hulls: &[ConvexLossCurve], cm: &CostModel) -> Vec<f64> {
    // Per level the ratios descend along the hull; merge the reversed lists.
    let lists: Vec<Vec<f64>> = hulls
        .iter()
        .enumerate()
        .filter(|&(l, _)| cm.coefficient(l) > 0.0)
        .map(|(l, h)| {
            let a = cm.coefficient(l);
            h.slopes().iter().rev().map(|&s| (-s / a).max(0.0)).collect()
        })
        .collect();
    let mut heads = vec![0usize; lists.len()];
    let mut out: Vec<f64> = Vec::with_capacity(lists.iter().map(Vec::len).sum());
    loop {
        let mut pick: Option<usize> = None;
        for (i, list) in lists.iter().enumerate() {
            if let Some(&v) = list.get(heads[i]) {
                if pick.is_none_or(|p| v < lists[p][heads[p]]) {
                    pick = Some(i);
                }
            }
        }
        let Some(i) = pick else { break };
        let v = lists[i][heads[i]];
        heads[i] += 1;
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

impl LagrangianTables {
    fn result(&self, lambda: f64) -> TuneResult {
        let (tuning, _) = self.solve_fast(lambda).expect("multiplier validated by caller");
        self.describe(lambda, tuning)
    }

    fn describe(&self, lambda: f64, tuning: Tuning) -> TuneResult {
        let loss = self.loss_of(tuning.as_slice());
        TuneResult {
            lambda,
            modeled_cost: self.cost_of(tuning.as_slice()),
            modeled_recall: (-loss).exp(),
            loss,
            tuning,
        }
    }

    /// Multipliers at which the optimal tuning can change, ascending and deduplicated.
    pub fn candidate_lambdas(&self) -> Vec<f64> {
        candidate_lambdas(&self.hulls, &self.cm)
    }

    /// `0`, every candidate, and a multiplier large enough to force the cheapest tuning.
    fn lambda_ladder(&self) -> Vec<f64> {
        let cands = self.candidate_lambdas();
        // Raising a suffix of levels together gains at most the sum of their steepest
        // slopes, so past this multiplier every priced level sits at t_min.
        let steep: f64 = self.hulls.iter().map(|h| h.slopes().first().map_or(0.0, |s| -s)).sum();
        let min_coef = self.cost_model().coefficients().into_iter().filter(|&c| c > 0.0).fold(f64::INFINITY, f64::min);
        let joint = if min_coef.is_finite() { steep / min_coef } else { 0.0 };
        let top = 2.0 * cands.last().copied().unwrap_or(0.0).max(joint) + 1.0;
        let mut ladder = Vec::with_capacity(cands.len() + 2);
        if cands.first() != Some(&0.0) {
            ladder.push(0.0);
        }
        ladder.extend(cands);
        ladder.push(top);
        ladder
    }

    /// Optimal tuning at the multiplier where `a` and `b` have equal objective, if it lies
    /// strictly below their chord.
    fn chord_vertex(&self, a: &TuneResult, b: &TuneResult) -> Option<TuneResult> {
        let dj = a.modeled_cost - b.modeled_cost;
        let dl = b.loss - a.loss;
        if dj <= 0.0 || dl <= 0.0 {
            return None;
        }
        let lambda = dl / dj;
        if !lambda.is_finite() {
            return None;
        }
        let s = self.result(lambda);
        if s.tuning == a.tuning || s.tuning == b.tuning {
            return None;
        }
        let chord = b.loss + lambda * b.modeled_cost;
        let value = s.loss + lambda * s.modeled_cost;
        let eps = 1e-12 * chord.abs().max(1.0);
        (value < chord - eps).then_some(s)
    }

    /// Lowest-loss tuning with modeled cost at most `j_max`.
    pub fn tune_for_cost(&self, j_max: f64) -> Result<TuneResult> {
        let cheapest = vec![self.columns()[0]; self.num_levels()];
        let j_min = self.cost_of(&cheapest);
        if j_max.is_nan() || j_max < j_min {
            return Err(Error::Infeasible(format!(
                "cost budget {j_max:e} is below the cheapest tuning's {j_min:e}"
            )));
        }
        let ladder = self.lambda_ladder();
        let fits = |r: &TuneResult| r.modeled_cost <= j_max;
        let first = self.result(ladder[0]);
        if fits(&first) {
            return Ok(first);
        }
        let (mut lo, mut hi) = (0, ladder.len() - 1);
        let mut lo_r = first;
        let mut hi_r = self.result(ladder[hi]);
        debug_assert!(fits(&hi_r));
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let r = self.result(ladder[mid]);
            if fits(&r) {
                hi = mid;
                hi_r = r;
            } else {
                lo = mid;
                lo_r = r;
            }
        }
        for _ in 0..MAX_REFINEMENTS {
            match self.chord_vertex(&lo_r, &hi_r) {
                Some(s) if fits(&s) => hi_r = s,
                Some(s) => lo_r = s,
                None => break,
            }
        }
        Ok(hi_r)
    }

    /// Lowest-cost tuning with modeled loss at most `loss_max`.
    pub fn tune_for_recall(&self, loss_max: f64) -> Result<TuneResult> {
        let ladder = self.lambda_ladder();
        let fits = |r: &TuneResult| r.loss <= loss_max;
        let first = self.result(ladder[0]);
        if loss_max.is_nan() || !fits(&first) {
            return Err(Error::Infeasible(format!(
                "loss target {loss_max} is below the best achievable {}",
                first.loss
            )));
        }
        let (mut lo, mut hi) = (0, ladder.len() - 1);
        let mut hi_r = self.result(ladder[hi]);
        if fits(&hi_r) {
            return Ok(hi_r);
        }
        let mut lo_r = first;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let r = self.result(ladder[mid]);
            if fits(&r) {
                lo = mid;
                lo_r = r;
            } else {
                hi = mid;
                hi_r = r;
            }
        }
        for _ in 0..MAX_REFINEMENTS {
            match self.chord_vertex(&lo_r, &hi_r) {
                Some(s) if fits(&s) => lo_r = s,
                Some(s) => hi_r = s,
                None => break,
            }
        }
        Ok(lo_r)
    }

    /// Every distinct optimal tuning over all multipliers, sorted by cost.
    pub fn pareto_frontier(&self) -> ParetoFrontier {
        let ladder = self.lambda_ladder();
        let mut sols: Vec<TuneResult> = ladder.par_iter().map(|&l| self.result(l)).collect();
        sols.sort_by(|a, b| {
            a.modeled_cost
                .total_cmp(&b.modeled_cost)
                .then(a.loss.total_cmp(&b.loss))
                .then(a.lambda.total_cmp(&b.lambda))
        });
        sols.dedup_by(|b, a| a.tuning == b.tuning);
        // Fill in vertices that fall between consecutive candidates.
        let mut refined: Vec<TuneResult> = Vec::with_capacity(sols.len());
        let mut stack: Vec<TuneResult> = sols.into_iter().rev().collect();
        let mut budget = MAX_REFINEMENTS * ladder.len().max(1);
        while let Some(next) = stack.pop() {
            if let Some(prev) = refined.last() {
                if budget > 0 {
                    if let Some(mid) = self.chord_vertex(&next, prev) {
                        budget -= 1;
                        stack.push(next);
                        stack.push(mid);
                        continue;
                    }
                }
            }
            refined.push(next);
        }
        let mut entries: Vec<TuneResult> = Vec::with_capacity(refined.len());
        for r in refined {
            if entries.last().is_none_or(|p: &TuneResult| r.loss < p.loss && r.modeled_cost > p.modeled_cost) {
                entries.push(r);
            }
        }
        assert!(
            entries
                .windows(2)
                .all(|w| w[0].modeled_cost < w[1].modeled_cost && w[0].loss > w[1].loss),
            "frontier entries must not dominate one another"
        );
        ParetoFrontier { entries }
    }
}
