//! Cost model and the Lagrangian solvers that turn loss hulls into tunings.
//!
//! For a multiplier `lambda >= 0` the solvers minimize `sum_i hull_i(t_i) + lambda * J(t)` over
//! monotone tunings `t_1 >= ... >= t_m >= t_min`, evaluated at hull breakpoint depths. Sweeping
//! `lambda` traces the convex speed/recall frontier.

mod cost;
mod frontier;
mod solver;

pub use cost::CostModel;
pub use frontier::{ParetoFrontier, TuneResult};
pub use solver::LagrangianTables;

use crate::error::Result;
use crate::search::Tuning;
use crate::stats::ConvexLossCurve;

/// Minimizer of the Lagrangian via the explicit `m x n` dynamic program.
pub fn solve_lagrangian_basic(
    lambda: f64,
    curves: &[ConvexLossCurve],
    cm: &CostModel,
    t_min: usize,
) -> Result<(Tuning, f64)> {
    LagrangianTables::new(curves, cm, t_min)?.solve_basic(lambda)
}

/// Minimizer of the Lagrangian via the piecewise-component dynamic program.
pub fn solve_lagrangian_fast(
    lambda: f64,
    curves: &[ConvexLossCurve],
    cm: &CostModel,
    t_min: usize,
) -> Result<(Tuning, f64)> {
    LagrangianTables::new(curves, cm, t_min)?.solve_fast(lambda)
}

/// Multipliers at which the optimal tuning can change, ascending and deduplicated.
pub fn candidate_lambdas(curves: &[ConvexLossCurve], cm: &CostModel) -> Result<Vec<f64>> {
    cm.check_levels(curves.len())?;
    Ok(frontier::candidate_lambdas(curves, cm))
}

/// Lowest-loss tuning with `J(t) <= j_max`.
pub fn tune_for_cost(j_max: f64, curves: &[ConvexLossCurve], cm: &CostModel, t_min: usize) -> Result<TuneResult> {
    LagrangianTables::new(curves, cm, t_min)?.tune_for_cost(j_max)
}

/// Lowest-cost tuning with `sum_i hull_i(t_i) <= loss_max`.
pub fn tune_for_recall(loss_max: f64, curves: &[ConvexLossCurve], cm: &CostModel, t_min: usize) -> Result<TuneResult> {
    LagrangianTables::new(curves, cm, t_min)?.tune_for_recall(loss_max)
}

pub fn pareto_frontier(curves: &[ConvexLossCurve], cm: &CostModel, t_min: usize) -> Result<ParetoFrontier> {
    Ok(LagrangianTables::new(curves, cm, t_min)?.pareto_frontier())
}
